"""Unitary propagation ``psi -> exp(-i tau H) psi``.

Methods
-------
chebyshev
    Chebyshev polynomial expansion with Bessel-function coefficients; only
    needs sparse matvecs, scales to the largest chains.  Default.
taylor
    Plain power series with substeps so that ``|dt (H - c)| <= 1``.
dense
    Full diagonalization of the dense matrix; the oracle for small chains.
sector
    Diagonalization of each fixed-magnetization block.  Exact up to round-off
    and much cheaper than ``dense``; used by the trajectory engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy.special import jv

from .basis import PureState
from .errors import PropagationError
from .hamiltonian import SparseHamiltonian, magnetization_sectors

METHODS = ("chebyshev", "taylor", "dense", "sector")
DENSE_MAX_SITES = 8
SECTOR_MAX_DIM = comb(14, 7)


@dataclass(frozen=True)
class PropagatorSettings:
    method: str = "chebyshev"
    tolerance: float = 1e-10
    # half-width of a symmetric interval containing the spectrum; None -> Gershgorin
    spectral_bound: float | None = None
    max_terms: int = 20000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown propagation method {self.method!r}; choose from {METHODS}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


class Propagator:
    """Reusable ``exp(-i tau H)`` for one Hamiltonian; call as ``prop(psi, tau)``."""

    def __init__(self, H: SparseHamiltonian, settings: PropagatorSettings | None = None):
        self.H = H
        self.settings = settings or PropagatorSettings()
        if self.settings.spectral_bound is not None:
            lo, hi = -self.settings.spectral_bound, self.settings.spectral_bound
        else:
            lo, hi = H.gershgorin_bounds()
        self.center = 0.5 * (hi + lo)
        self.radius = max(0.5 * (hi - lo), 1e-12)

        method = self.settings.method
        if method == "dense":
            if H.n_sites > DENSE_MAX_SITES:
                raise ValueError(f"dense propagation refused for N={H.n_sites} > {DENSE_MAX_SITES}")
            self._E, self._V = np.linalg.eigh(H.dense())
        elif method == "sector":
            self._sectors = sector_eigensystems(H)

    def __call__(self, psi: np.ndarray, tau: float) -> np.ndarray:
        if tau < 0:
            raise ValueError(f"negative time step {tau}")
        psi = np.asarray(psi, dtype=complex)
        if tau == 0:
            return psi.copy()
        return getattr(self, "_" + self.settings.method)(psi, tau)

    def _dense(self, psi, tau):
        return self._V @ (np.exp(-1j * tau * self._E) * (self._V.conj().T @ psi))

    def _sector(self, psi, tau):
        out = np.empty_like(psi)
        for idx, E, V in self._sectors:
            out[idx] = V @ (np.exp(-1j * tau * E) * (V.conj().T @ psi[idx]))
        return out

    def _shifted(self, v):
        return (self.H.matrix @ v - self.center * v) / self.radius

    def _chebyshev(self, psi, tau):
        x = tau * self.radius
        coeffs = chebyshev_coefficients(x, self.settings.tolerance, self.settings.max_terms)
        t_prev, t_cur = psi, self._shifted(psi)
        acc = coeffs[0] * t_prev
        if len(coeffs) > 1:
            acc = acc + coeffs[1] * t_cur
        for a in coeffs[2:]:
            t_prev, t_cur = t_cur, 2.0 * self._shifted(t_cur) - t_prev
            acc += a * t_cur
        return np.exp(-1j * tau * self.center) * acc

    def _taylor(self, psi, tau):
        nsub = max(1, int(np.ceil(tau * self.radius)))
        dt = tau / nsub
        tol = self.settings.tolerance / nsub
        out = psi
        for _ in range(nsub):
            term = out
            acc = out.copy()
            for k in range(1, self.settings.max_terms + 1):
                term = (-1j * dt * self.radius / k) * self._shifted(term)
                acc += term
                if np.linalg.norm(term) < tol:
                    break
            else:
                raise PropagationError(
                    f"Taylor series did not reach tolerance {self.settings.tolerance} "
                    f"within {self.settings.max_terms} terms"
                )
            out = acc
        return np.exp(-1j * tau * self.center) * out


def chebyshev_coefficients(x: float, tol: float, max_terms: int) -> np.ndarray:
    """Coefficients ``(2 - delta_k0) (-i)^k J_k(x)`` truncated once the tail is below ``tol``."""
    kmax = int(x + 12.0 * max(x, 1.0) ** (1 / 3) + 40)
    if kmax > max_terms:
        raise PropagationError(
            f"Chebyshev expansion for tau*radius={x:.3g} needs more than {max_terms} terms"
        )
    J = jv(np.arange(kmax + 1), x)
    # 2 * sum_{m >= k} |J_m| bounds the truncation error in 2-norm
    tail = 2.0 * np.cumsum(np.abs(J[::-1]))[::-1]
    if tail[-1] > tol:
        raise PropagationError(f"Chebyshev tail {tail[-1]:.2e} above tolerance {tol:.2e}")
    nterms = int(np.argmax(tail < tol))
    nterms = max(nterms, 1)
    k = np.arange(nterms)
    a = np.where(k == 0, 1.0, 2.0) * (-1j) ** k * J[:nterms]
    return a


def sector_eigensystems(H: SparseHamiltonian, sectors=None):
    """``[(idx, E, V)]`` for each magnetization block; ``idx`` may be any ordering."""
    if sectors is None:
        sectors = magnetization_sectors(H.n_sites)
    biggest = max(len(idx) for idx in sectors)
    if biggest > SECTOR_MAX_DIM:
        raise ValueError(f"sector of dimension {biggest} too large for dense block diagonalization")
    M = H.matrix
    out = []
    for idx in sectors:
        if len(idx) == 0:
            continue
        E, V = np.linalg.eigh(M[idx][:, idx].toarray())
        out.append((idx, E, V))
    return out


@lru_cache(maxsize=16)
def _cached(H: SparseHamiltonian, settings: PropagatorSettings) -> Propagator:
    return Propagator(H, settings)


def propagate(
    state: PureState, tau: float, H: SparseHamiltonian, settings: PropagatorSettings | None = None
) -> PureState:
    prop = _cached(H, settings or PropagatorSettings())
    return PureState(prop(state.amplitudes, tau), state.n_sites)


def dense_propagator(n_sites: int, tau: float, H: SparseHamiltonian) -> np.ndarray:
    """Materialized ``U = exp(-i tau H)`` from full diagonalization (N <= 8)."""
    if n_sites != H.n_sites:
        raise ValueError(f"Hamiltonian is for N={H.n_sites}, not {n_sites}")
    if n_sites > DENSE_MAX_SITES:
        raise ValueError(f"dense propagator refused for N={n_sites} > {DENSE_MAX_SITES}")
    E, V = np.linalg.eigh(H.dense())
    return (V * np.exp(-1j * tau * E)) @ V.conj().T
