"""Exact steady state of the bath-coupled chain for constant time lag.

The interior density matrix is advanced over one period (evolution for tau,
then border measurement and bath refresh) by the completely positive map

    L(rho) = sum_{b, b'} w_{b'} K_{b b'} rho K_{b b'}^+,   K_{b b'} = <b| U |b'>

where ``K_{b b'}`` is the interior block of ``U`` between border
configurations ``b'`` (before) and ``b`` (after), and ``w`` the border
populations set by the baths.  The steady state is the eigenvalue-one fixed
point of ``L``.

Matrices are vectorized column-major, ``vec(K rho K^+) = (conj(K) kron K) vec(rho)``.

For a random lag the one-cycle map is the lag average of ``L``.  In the
energy eigenbasis ``K_{b b'} = V_b exp(-i t E) V_{b'}^+`` so the average only
multiplies ``V_{b'}^+ rho V_{b'}`` entrywise by ``E[exp(-i t (E_m - E_n))]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigs

from .basis import BathPotentials, gamma
from .config import ChainSpec, LagDistribution
from .errors import DegenerateNessError, NumericalError
from .hamiltonian import ChainCouplings, build_hamiltonian
from .propagator import dense_propagator

MAX_SITES = 8
DENSE_EIG_MAX_SITES = 6
DEGENERACY_TOL = 1e-10
CURRENT_FORM_TOL = 1e-9


def border_density(pots: BathPotentials) -> np.ndarray:
    """Populations ``w_b`` of the refreshed border spins, ``b = b1 + 2 b2``.

    Probability convention: the left spin is up with probability ``mu_L``.
    """
    wl = np.array([1.0 - pots.mu_L, pots.mu_L])
    wr = np.array([1.0 - pots.mu_R, pots.mu_R])
    return np.array([wl[b & 1] * wr[b >> 1] for b in range(4)])


def _n_sites_of(U: np.ndarray) -> int:
    N = int(round(np.log2(U.shape[0])))
    if U.shape != (1 << N, 1 << N):
        raise ValueError(f"propagator of shape {U.shape} is not 2^N square")
    if N > MAX_SITES:
        raise ValueError(f"master operator refused for N={N} > {MAX_SITES}")
    if N < 3:
        raise ValueError("need at least 3 sites")
    return N


def border_blocks(U: np.ndarray) -> np.ndarray:
    """``K[b, b']``, the interior blocks of ``U``; shape (4, 4, d, d)."""
    N = _n_sites_of(U)
    d = 1 << (N - 2)
    idx = np.array([[gamma(a, b, N) for a in range(d)] for b in range(4)])
    return U[idx[:, None, :, None], idx[None, :, None, :]]


@dataclass
class MasterOperator:
    n_sites: int
    blocks: np.ndarray
    omega: np.ndarray
    tau: float | None = None
    couplings: ChainCouplings | None = None
    potentials: BathPotentials | None = None

    @property
    def dim_int(self) -> int:
        return 1 << (self.n_sites - 2)

    @property
    def dim(self) -> int:
        return self.dim_int**2

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho, dtype=complex)
        for b in range(4):
            for bp in range(4):
                if self.omega[bp] == 0:
                    continue
                K = self.blocks[b, bp]
                out += self.omega[bp] * (K @ rho @ K.conj().T)
        return out

    def matrix(self) -> np.ndarray:
        L = np.zeros((self.dim, self.dim), dtype=complex)
        for b in range(4):
            for bp in range(4):
                if self.omega[bp] == 0:
                    continue
                K = self.blocks[b, bp]
                L += self.omega[bp] * np.kron(K.conj(), K)
        return L

    def _vec_apply(self, v):
        d = self.dim_int
        return self.apply(v.reshape(d, d, order="F")).reshape(-1, order="F")


def lag_phase_average(lag: LagDistribution, x: np.ndarray) -> np.ndarray:
    """``E[exp(-i x t)]`` over the lag law."""
    x = np.asarray(x, dtype=float)
    m = lag.mean
    if lag.kind == "constant":
        return np.exp(-1j * x * m)
    if lag.kind == "uniform":
        z = 2j * x * m
        out = np.ones(x.shape, dtype=complex)
        nz = np.abs(z) > 1e-12
        out[nz] = -np.expm1(-z[nz]) / z[nz]
        return out
    return 1.0 / (1.0 + 1j * x * m)


@dataclass
class AveragedMasterOperator:
    """Bath-cycle map averaged over the time lag, kept in factored form."""

    n_sites: int
    rows: np.ndarray  # V_b, shape (4, d, 2^N): eigenvector rows on border b
    phase: np.ndarray  # E[exp(-i t (E_m - E_n))]
    omega: np.ndarray
    lag: LagDistribution | None = None
    couplings: ChainCouplings | None = None
    potentials: BathPotentials | None = None

    dim_int = MasterOperator.dim_int
    dim = MasterOperator.dim
    _vec_apply = MasterOperator._vec_apply

    def _averaged(self, rho):
        X = sum(w * (Vb.conj().T @ rho @ Vb) for w, Vb in zip(self.omega, self.rows) if w)
        return self.phase * X

    def apply(self, rho: np.ndarray) -> np.ndarray:
        Y = self._averaged(rho)
        return sum(Vb @ Y @ Vb.conj().T for Vb in self.rows)

    def matrix(self) -> np.ndarray:
        d = self.dim_int
        cols = [self._vec_apply(e) for e in np.eye(d * d, dtype=complex)]
        return np.array(cols).T

    def probs(self, rho: np.ndarray) -> np.ndarray:
        Y = self._averaged(rho)
        return np.array([np.real(np.trace(Vb @ Y @ Vb.conj().T)) for Vb in self.rows])


def averaged_master_operator(chain: ChainSpec) -> AveragedMasterOperator:
    N = chain.n_sites
    if N > MAX_SITES:
        raise ValueError(f"master operator refused for N={N} > {MAX_SITES}")
    H = build_hamiltonian(N, chain.couplings)
    E, V = np.linalg.eigh(H.dense())
    d = 1 << (N - 2)
    idx = np.array([[gamma(a, b, N) for a in range(d)] for b in range(4)])
    phase = lag_phase_average(chain.lag, E[:, None] - E[None, :])
    omega = border_density(chain.potentials)
    return AveragedMasterOperator(N, V[idx], phase, omega, chain.lag, chain.couplings, chain.potentials)


def build_master_operator(U: np.ndarray, omega: np.ndarray, **meta) -> MasterOperator:
    N = _n_sites_of(U)
    return MasterOperator(N, border_blocks(U), np.asarray(omega, dtype=float), **meta)


def _normalize(rho: np.ndarray) -> np.ndarray:
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def fixed_point(L: MasterOperator, tol: float = 1e-13, max_iter: int = 200000) -> tuple[np.ndarray, float]:
    """Steady state ``rho`` (trace one) and relaxation gap ``1 - |lambda_2|``.

    Dense eigensolve up to N = 6; above that ARPACK for the two leading
    eigenvalues followed by power iteration with trace renormalization.
    """
    d = L.dim_int
    if L.n_sites <= DENSE_EIG_MAX_SITES:
        lam, vecs = np.linalg.eig(L.matrix())
        i = int(np.argmin(np.abs(lam - 1.0)))
        others = np.delete(np.abs(lam), i)
        lam2 = float(others.max()) if len(others) else 0.0
        rho = vecs[:, i].reshape(d, d, order="F")
    else:
        op = LinearOperator((L.dim, L.dim), matvec=L._vec_apply, dtype=complex)
        v0 = np.eye(d, dtype=complex).reshape(-1, order="F") / d
        lam, vecs = eigs(op, k=2, which="LM", v0=v0, tol=1e-12)
        order = np.argsort(-np.abs(lam))
        lam, vecs = lam[order], vecs[:, order]
        lam2 = float(abs(lam[1]))
        rho = vecs[:, 0].reshape(d, d, order="F")
    if abs(1.0 - lam2) < DEGENERACY_TOL:
        raise DegenerateNessError(f"second eigenvalue |lambda_2| = {lam2:.12f}: steady state not unique")
    rho = _normalize(rho)
    if L.n_sites > DENSE_EIG_MAX_SITES:
        for _ in range(max_iter):
            new = _normalize(L.apply(rho))
            delta = np.abs(new - rho).sum()
            rho = new
            if delta < tol:
                break
        else:
            raise NumericalError(f"power iteration did not converge (last change {delta:.2e})")
    return rho, 1.0 - lam2


def measurement_probs(rho: np.ndarray, U: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """``p_b``: outcome probabilities of the border measurement in the steady state."""
    K = border_blocks(U)
    p = np.zeros(4)
    for b in range(4):
        for bp in range(4):
            if omega[bp]:
                p[b] += omega[bp] * np.real(np.trace(K[b, bp] @ rho @ K[b, bp].conj().T))
    return p


def steady_current(p: np.ndarray, omega: np.ndarray, tau: float) -> float:
    """Qubit current from the right bath to the left bath, per unit time.

    Left-bath form ``(w0 + w2 - p0 - p2)/tau`` and right-bath form
    ``(p0 + p1 - w0 - w1)/tau`` must coincide when ``[U, M] = 0``.
    """
    left = (omega[0] + omega[2] - p[0] - p[2]) / tau
    right = (p[0] + p[1] - omega[0] - omega[1]) / tau
    if abs(left - right) > CURRENT_FORM_TOL:
        raise NumericalError(
            f"left/right current forms differ by {abs(left - right):.2e}: magnetization not conserved"
        )
    return float(left)


def interior_profile(rho: np.ndarray) -> np.ndarray:
    """``<sigma^z_n>`` for interior sites n = 2..N-1."""
    d = rho.shape[0]
    n_int = int(round(np.log2(d)))
    a = np.arange(d)
    signs = 2 * ((a[None, :] >> np.arange(n_int)[:, None]) & 1) - 1
    return signs @ np.real(np.diag(rho))


def analytic_current_n4(J_x, delta, mu_L, mu_R, tau):
    """Small-tau steady current of the 4-site chain, correct to O(tau^2)."""
    num = 1 + 2 * (mu_L + mu_R - mu_L**2 - mu_R**2) * delta**2
    den = 1 + (mu_L + mu_R) * (2 - mu_L - mu_R) * delta**2
    return 2 * tau * J_x**2 * (mu_R - mu_L) * num / den


def analytic_gradient_n4(delta, mu_L, mu_R):
    """``<sz_3 - sz_2>`` of the 4-site steady state in the limit tau -> 0."""
    den = 1 + (mu_L + mu_R) * (2 - mu_L - mu_R) * delta**2
    return 2 * (mu_R - mu_L) ** 3 * delta**2 / den


def symmetric_current_maximum(delta):
    """Field ``mu`` maximizing the 4-site analytic current under symmetric driving."""
    return np.sqrt((1 + delta**2) / (3 * delta**2))


@dataclass
class MasterSolution:
    chain: ChainSpec
    rho: np.ndarray
    gap: float
    p: np.ndarray
    omega: np.ndarray
    j: float

    @property
    def profile(self) -> np.ndarray:
        """``<sigma^z_n>``, n = 1..N, right after a bath contact."""
        pots = self.chain.potentials
        return np.concatenate([[2 * pots.mu_L - 1], interior_profile(self.rho), [2 * pots.mu_R - 1]])

    @property
    def gradient(self) -> float:
        prof = interior_profile(self.rho)
        return float(prof[1] - prof[0])


def solve_ness(chain: ChainSpec) -> MasterSolution:
    """Exact steady state; the current is per unit of mean time lag.

    Constant lags go through the materialized propagator, random lags
    through the lag-averaged map.
    """
    tau = chain.lag.mean
    omega = border_density(chain.potentials)
    if chain.lag.kind == "constant":
        U = dense_propagator(chain.n_sites, tau, build_hamiltonian(chain.n_sites, chain.couplings))
        L = build_master_operator(U, omega, tau=tau, couplings=chain.couplings, potentials=chain.potentials)
        rho, gap = fixed_point(L)
        p = measurement_probs(rho, U, omega)
    else:
        L = averaged_master_operator(chain)
        rho, gap = fixed_point(L)
        p = L.probs(rho)
    return MasterSolution(chain, rho, gap, p, omega, steady_current(p, omega, tau))


@dataclass
class SmallTauFit:
    taus: np.ndarray
    currents: np.ndarray
    c2: float  # j / tau as tau -> 0
    c3: float
    intercept: float  # tau^0 term of j(tau)
    intercept_err: float
    residual: float  # relative rms residual of the j/tau fit


def small_tau_current(chain: ChainSpec, taus, residual_tol: float = 1e-3) -> SmallTauFit:
    """Fit ``j(tau)/tau = c2 + c3 tau + c4 tau^2`` on a grid of small lags."""
    from dataclasses import replace

    from .config import LagDistribution

    taus = np.asarray(taus, dtype=float)
    if len(taus) < 6:
        raise ValueError("small-tau fit needs at least 6 grid points")
    if taus.min() <= 0 or taus.max() > 0.2 + 1e-12:
        raise ValueError("tau grid must lie in (0, 0.2]")
    js = np.array([solve_ness(replace(chain, lag=LagDistribution("constant", t))).j for t in taus])

    coef, res, *_ = np.linalg.lstsq(np.vander(taus, 3, increasing=True), js / taus, rcond=None)
    model = np.vander(taus, 3, increasing=True) @ coef
    # currents below 1e-6 per unit lag count as zero
    scale = max(np.abs(js / taus).max(), 1e-6)
    residual = float(np.sqrt(np.mean((js / taus - model) ** 2)) / scale)
    if residual > residual_tol:
        raise NumericalError(f"small-tau fit residual {residual:.2e} above {residual_tol:.0e}; coefficients {coef}")

    A = np.vander(taus, 4, increasing=True)
    c, *_ = np.linalg.lstsq(A, js, rcond=None)
    dof = max(len(taus) - 4, 1)
    s2 = float(np.sum((js - A @ c) ** 2) / dof)
    cov = s2 * np.linalg.inv(A.T @ A)
    # the data are exact, so the scatter is series truncation: add the shift
    # of the intercept when one more order is fitted, and round-off
    c_next, *_ = np.linalg.lstsq(np.vander(taus, 5, increasing=True), js, rcond=None)
    err = float(np.sqrt(cov[0, 0])) + abs(c_next[0] - c[0]) + 1e-12 * float(np.abs(js).max())
    return SmallTauFit(taus, js, float(coef[0]), float(coef[1]), float(c[0]), err, residual)
