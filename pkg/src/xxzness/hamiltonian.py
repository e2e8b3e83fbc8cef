"""Open XXZ chain Hamiltonian in the qubit basis.

    H = sum_{n=1}^{N-1} [ J_x (sx_n sx_{n+1} + sy_n sy_{n+1}) + J_z sz_n sz_{n+1} ]

Since ``sx sx + sy sy = 2 (s+ s- + s- s+)``, the hopping matrix element between
two basis states that differ by swapping an antiparallel neighbouring pair is
``2 J_x``, not ``J_x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .basis import spin_signs


@dataclass(frozen=True)
class ChainCouplings:
    J_x: float
    J_z: float

    @property
    def delta(self) -> float:
        if self.J_x == 0:
            raise ZeroDivisionError("anisotropy undefined for J_x = 0")
        return self.J_z / self.J_x

    @classmethod
    def from_delta(cls, delta: float, J_z: float = 0.5) -> "ChainCouplings":
        """Couplings at fixed ``J_z`` with ``J_x = J_z / delta``."""
        return cls(J_z / delta, J_z)


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """XXZ Hamiltonian stored as Ising diagonal plus bond-swap hopping pairs.

    ``hops`` holds each off-diagonal pair once, as ``(c, c')`` with ``c < c'``.
    """

    n_sites: int
    couplings: ChainCouplings
    diagonal: np.ndarray
    hops: np.ndarray

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        r, c = self.hops.T
        t = np.full(len(r), 2.0 * self.couplings.J_x)
        off = sp.coo_matrix(
            (np.concatenate([t, t]), (np.concatenate([r, c]), np.concatenate([c, r]))),
            shape=(self.dim, self.dim),
        )
        return (off + sp.diags(self.diagonal)).tocsr()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def magnetization(self) -> np.ndarray:
        """Diagonal of the total magnetization ``M = sum_n sz_n``."""
        return spin_signs(self.n_sites).sum(axis=1).astype(float)

    def gershgorin_bounds(self) -> tuple[float, float]:
        """Interval containing the spectrum, from row sums."""
        offsum = np.zeros(self.dim)
        np.add.at(offsum, self.hops[:, 0], 1.0)
        np.add.at(offsum, self.hops[:, 1], 1.0)
        offsum *= abs(2.0 * self.couplings.J_x)
        return float((self.diagonal - offsum).min()), float((self.diagonal + offsum).max())


def build_hamiltonian(n_sites: int, couplings: ChainCouplings) -> SparseHamiltonian:
    if n_sites < 2:
        raise ValueError(f"need at least 2 sites, got {n_sites}")
    s = spin_signs(n_sites)
    diagonal = couplings.J_z * (s[:, :-1] * s[:, 1:]).sum(axis=1).astype(float)
    c = np.arange(1 << n_sites)
    pairs = []
    for n in range(n_sites - 1):
        # states with (c_n, c_{n+1}) = (1, 0) hop to (0, 1); keep c < c'
        src = c[((c >> n) & 3) == 1]
        pairs.append(np.stack([src, src ^ (3 << n)], axis=1))
    hops = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=int)
    return SparseHamiltonian(n_sites, couplings, diagonal, hops)


def apply_h(H: SparseHamiltonian, psi: np.ndarray) -> np.ndarray:
    """Sparse ``H @ psi`` (unnormalized)."""
    psi = np.asarray(psi)
    if psi.shape[0] != H.dim:
        raise ValueError(f"vector of length {psi.shape[0]} does not match dim {H.dim}")
    return H.matrix @ psi


def magnetization_sectors(n_sites: int) -> list[np.ndarray]:
    """Basis indices grouped by number of up spins (0..N)."""
    weight = ((np.arange(1 << n_sites)[:, None] >> np.arange(n_sites)) & 1).sum(axis=1)
    return [np.flatnonzero(weight == k) for k in range(n_sites + 1)]
