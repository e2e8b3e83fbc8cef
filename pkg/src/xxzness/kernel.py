"""Fast propagate-and-measure step for states ``|phi>_in (x) |b>_bo``.

After every bath contact the chain state is a product of an interior vector
and a definite border configuration.  Propagating such a state only touches
the columns of ``U`` with that border, and ``U`` is block diagonal in the
total up-count.  This kernel diagonalizes every block once and keeps the
interior vector in *weight-sorted* order (interior states grouped by their
up-count), so that each block acts on a contiguous slice.

Sector ``k`` is laid out as four contiguous chunks, one per border ``b``,
each holding the interior states of weight ``k - |b|`` in sorted order.  Chunk
``(k, b)`` of ``U |phi_m, b'>`` therefore lands verbatim in the slice of
weight ``k - |b|`` of the projected interior vector for outcome ``b``.
"""

from __future__ import annotations

import numpy as np

from .basis import gamma
from .hamiltonian import SparseHamiltonian
from .propagator import sector_eigensystems

BORDER_WEIGHT = (0, 1, 1, 2)


class ProductKernel:
    def __init__(self, H: SparseHamiltonian, fixed_tau: float | None = None):
        self.H = H
        N = self.n_sites = H.n_sites
        n_int = N - 2
        self.dim_int = 1 << n_int

        a = np.arange(self.dim_int)
        w_int = ((a[:, None] >> np.arange(n_int)) & 1).sum(axis=1) if n_int else np.zeros(1, int)
        self.order = np.argsort(w_int, kind="stable")  # sorted position -> interior index a
        counts = np.bincount(w_int, minlength=n_int + 1)
        starts = np.concatenate([[0], np.cumsum(counts)])
        self.slices = [slice(int(starts[m]), int(starts[m + 1])) for m in range(n_int + 1)]
        # interior sigma^z signs in sorted order, shape (N-2, 2**(N-2))
        self.int_signs = (2 * ((self.order[None, :] >> np.arange(n_int)[:, None]) & 1) - 1).astype(float)

        # sector k: list of (b, start, stop, m) chunks and the basis ordering
        self.chunks = []
        sectors = []
        for k in range(N + 1):
            rows, chunks, pos = [], [], 0
            for b in range(4):
                m = k - BORDER_WEIGHT[b]
                if 0 <= m <= n_int:
                    idx = [gamma(int(x), b, N) for x in self.order[self.slices[m]]]
                    rows.extend(idx)
                    chunks.append((b, pos, pos + len(idx), m))
                    pos += len(idx)
            self.chunks.append(chunks)
            sectors.append(np.array(rows, dtype=int))
        self.sector_rows = sectors
        self.eig = sector_eigensystems(H, sectors)  # all sectors are nonempty
        # columns of sector k belonging to border b', i.e. the input chunk
        self.col = [{b: (s, e) for b, s, e, _ in ch} for ch in self.chunks]
        self._VH = {}
        self.fixed_tau = fixed_tau
        self._W = {}

    # -- conversions -------------------------------------------------------
    def to_natural(self, phi_sorted: np.ndarray) -> np.ndarray:
        out = np.empty_like(phi_sorted)
        out[self.order] = phi_sorted
        return out

    def to_sorted(self, phi_natural: np.ndarray) -> np.ndarray:
        return phi_natural[self.order]

    def full_state(self, phi_sorted: np.ndarray, b: int) -> np.ndarray:
        psi = np.zeros(1 << self.n_sites, dtype=complex)
        a = np.arange(self.dim_int)
        psi[(b & 1) | (a << 1) | ((b >> 1) << (self.n_sites - 1))] = self.to_natural(phi_sorted)
        return psi

    def interior_profile(self, phi_sorted: np.ndarray) -> np.ndarray:
        w = phi_sorted.real ** 2 + phi_sorted.imag ** 2
        return self.int_signs @ w

    # -- propagation ---------------------------------------------------------
    def _input_block(self, k: int, bp: int):
        key = (k, bp)
        if key not in self._VH:
            s, e = self.col[k][bp]
            self._VH[key] = np.ascontiguousarray(self.eig[k][2][s:e].conj().T)
        return self._VH[key]

    def _fixed_blocks(self, bp: int):
        if bp not in self._W:
            blocks = []
            for m in range(self.n_sites - 1):
                k = m + BORDER_WEIGHT[bp]
                _, E, V = self.eig[k]
                W = (V * np.exp(-1j * self.fixed_tau * E)) @ self._input_block(k, bp)
                blocks.append((k, m, np.ascontiguousarray(W)))
            self._W[bp] = blocks
        return self._W[bp]

    def _scatter(self, out: np.ndarray, k: int, vec: np.ndarray) -> None:
        for b, s, e, m in self.chunks[k]:
            out[b, self.slices[m]] = vec[s:e]

    def evolve(self, phi: np.ndarray, bp: int, tau: float):
        """Propagate ``|phi, bp>`` for ``tau``; return the four border projections.

        Returns ``(out, p)`` with ``out[b]`` the (unnormalized, weight-sorted)
        interior vector for outcome ``b`` and ``p[b] = |out[b]|^2``.
        """
        out = np.zeros((4, self.dim_int), dtype=complex)
        if self.fixed_tau is not None and tau == self.fixed_tau:
            for k, m, W in self._fixed_blocks(bp):
                self._scatter(out, k, W @ phi[self.slices[m]])
        else:
            for m in range(self.n_sites - 1):
                k = m + BORDER_WEIGHT[bp]
                _, E, V = self.eig[k]
                coef = self._input_block(k, bp) @ phi[self.slices[m]]
                self._scatter(out, k, V @ (np.exp(-1j * tau * E) * coef))
        return out, (out.real ** 2 + out.imag ** 2).sum(axis=1)

    def evolve_full(self, psi: np.ndarray, tau: float):
        """Same as :meth:`evolve` for a general full state (natural ordering)."""
        out = np.zeros((4, self.dim_int), dtype=complex)
        for k, (_, E, V) in enumerate(self.eig):
            vec = psi[self.sector_rows[k]]
            self._scatter(out, k, V @ (np.exp(-1j * tau * E) * (V.conj().T @ vec)))
        return out, (out.real ** 2 + out.imag ** 2).sum(axis=1)
