"""Monte-Carlo simulation of the driven chain with stochastic border baths.

One step: unitary evolution for a random lag, measurement of the two border
spins, conditional flips that reset them to the bath populations.  Currents are
counted from the flips, with positive sign for up-spins travelling from the
right bath to the left bath (the direction favoured by ``mu_R > mu_L``):

    j_L = (removals at left  - insertions at left ) / time
    j_R = (insertions at right - removals at right) / time

Per step the four uniforms are drawn in the fixed order (measurement, zeta_L,
zeta_R, lag), after the Gaussian initial state, from a stream derived from
``(seed, trajectory id)``.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .basis import (
    Flip,
    PureState,
    conditional_flip,
    flip_border,
    measure_border,
    sample_index,
    site_magnetizations,
)
from .config import ChainSpec, LagDistribution, RunPlan
from .hamiltonian import build_hamiltonian
from .kernel import ProductKernel
from .propagator import SECTOR_MAX_DIM, Propagator, PropagatorSettings
from math import comb

N_BATCHES = 20
DRAW_CHUNK = 1 << 15


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BathEvent:
    b: int
    flip_left: Flip
    flip_right: Flip
    lag: float


@dataclass
class BathEventLog:
    b: np.ndarray
    flip_left: np.ndarray
    flip_right: np.ndarray
    lag: np.ndarray

    @property
    def time(self) -> np.ndarray:
        return np.cumsum(self.lag)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "b", "flip_left", "flip_right", "lag", "time"])
            for row in zip(range(len(self.b)), self.b, self.flip_left, self.flip_right, self.lag, self.time):
                w.writerow([int(row[0]), int(row[1]), int(row[2]), int(row[3]), repr(float(row[4])), repr(float(row[5]))])


@dataclass
class NessEstimate:
    j_L: float
    j_R: float
    sigma_j: float
    profile: np.ndarray  # <sigma^z_n>, n = 1..N, sampled right after each bath contact
    profile_err: np.ndarray
    b_freq: np.ndarray  # frequencies of the measured border outcome
    b_freq_err: np.ndarray
    total_time: float
    n_steps: int
    n_trajectories: int
    drift: float  # first-half minus second-half current
    drift_sigma: float
    trajectory_currents: np.ndarray

    @property
    def j(self) -> float:
        return 0.5 * (self.j_L + self.j_R)

    @property
    def n_sites(self) -> int:
        return len(self.profile)


def trajectory_rng(seed: int, traj_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(traj_id,)))


def sample_lag(dist: LagDistribution, rng_or_u) -> float:
    u = rng_or_u.random() if isinstance(rng_or_u, np.random.Generator) else rng_or_u
    return dist.sample(u)


def step(state: PureState, chain: ChainSpec, propagator: Callable, rng: np.random.Generator):
    """One propagation + bath contact on a full state vector."""
    u = rng.random(4)
    return step_with_draws(state, chain, propagator, u)


def step_with_draws(state, chain, propagator, u):
    tau = chain.lag.sample(u[3])
    state = PureState(propagator(state.amplitudes, tau), state.n_sites)
    b, state, _ = measure_border(state, u[0])
    state, (fl, fr) = conditional_flip(state, b, u[1], u[2], chain.potentials)
    return state, BathEvent(b, fl, fr, tau)


@lru_cache(maxsize=4)
def _product_kernel(n_sites, J_x, J_z, fixed_tau):
    from .hamiltonian import ChainCouplings

    return ProductKernel(build_hamiltonian(n_sites, ChainCouplings(J_x, J_z)), fixed_tau)


def resolve_method(plan: RunPlan) -> str:
    if plan.propagation != "auto":
        return plan.propagation
    N = plan.chain.n_sites
    return "product" if comb(N, N // 2) <= SECTOR_MAX_DIM else "chebyshev"


def _draws(rng, total):
    done = 0
    while done < total:
        n = min(DRAW_CHUNK, total - done)
        yield from rng.random((n, 4))
        done += n


@dataclass
class _Raw:
    """Per-batch sums of one trajectory."""

    left: np.ndarray
    right: np.ndarray
    time: np.ndarray
    steps: np.ndarray
    profile: np.ndarray
    b_counts: np.ndarray
    log: BathEventLog | None = None


def _simulate(plan: RunPlan, traj_id: int, keep_log: bool, propagator: Callable | None) -> _Raw:
    chain = plan.chain
    N = chain.n_sites
    total, burn = plan.total_steps, plan.burn_in_steps
    rng = trajectory_rng(plan.seed, traj_id)
    state = PureState.random(N, rng)

    b_log = np.empty(total, dtype=np.int8)
    fl_log = np.empty(total, dtype=np.int8)
    fr_log = np.empty(total, dtype=np.int8)
    lag_log = np.empty(total)
    measured = total - burn
    nb = min(N_BATCHES, measured)
    starts = burn + (np.arange(nb) * measured) // nb
    batch = np.repeat(np.arange(nb), np.diff(np.append(starts, total)))
    prof = np.zeros((nb, N))

    method = "generic" if propagator is not None else resolve_method(plan)
    pots = chain.potentials
    if method == "product":
        cpl = chain.couplings
        fixed = chain.lag.mean if chain.lag.kind == "constant" else None
        kernel = _product_kernel(N, cpl.J_x, cpl.J_z, fixed)
        phi = bp = None
        for s, u in enumerate(_draws(rng, total)):
            tau = chain.lag.sample(u[3])
            if phi is None:
                out, p = kernel.evolve_full(state.amplitudes, tau)
            else:
                out, p = kernel.evolve(phi, bp, tau)
            b = sample_index(p, u[0])
            phi = out[b] / np.sqrt(p[b])
            bp, (fl, fr) = flip_border(b, u[1], u[2], pots)
            b_log[s], fl_log[s], fr_log[s], lag_log[s] = b, fl, fr, tau
            if s >= burn:
                row = prof[batch[s - burn]]
                row[0] += 2 * (bp & 1) - 1
                row[1:-1] += kernel.interior_profile(phi)
                row[-1] += 2 * (bp >> 1) - 1
    else:
        if propagator is None:
            H = build_hamiltonian(N, chain.couplings)
            propagator = Propagator(H, PropagatorSettings(method=method))
        for s, u in enumerate(_draws(rng, total)):
            state, ev = step_with_draws(state, chain, propagator, u)
            b_log[s], fl_log[s], fr_log[s], lag_log[s] = ev.b, ev.flip_left, ev.flip_right, ev.lag
            if s >= burn:
                prof[batch[s - burn]] += site_magnetizations(state)

    sl = slice(burn, total)
    left = np.add.reduceat(-fl_log[sl].astype(float), starts - burn)
    right = np.add.reduceat(fr_log[sl].astype(float), starts - burn)
    time = np.add.reduceat(lag_log[sl], starts - burn)
    steps = np.diff(np.append(starts, total)).astype(float)
    b_counts = np.zeros((nb, 4))
    np.add.at(b_counts, (batch, b_log[sl]), 1.0)
    log = BathEventLog(b_log, fl_log, fr_log, lag_log) if keep_log else None
    return _Raw(left, right, time, steps, prof, b_counts, log)


def _se(x: np.ndarray) -> float | np.ndarray:
    n = len(x)
    if n < 2:
        return np.nan * np.ones(np.shape(x)[1:]) if np.ndim(x) > 1 else float("nan")
    return np.std(x, axis=0, ddof=1) / np.sqrt(n)


def _pool(left, right, time, steps, profile, b_counts, drift, drift_sigma, n_traj, currents) -> NessEstimate:
    """Combine independent units (batches) given as arrays of sums.

    Errors are those of ratio estimators, linearized around the pooled value.
    """
    T = time.sum()
    if T <= 0:
        raise ValueError("no simulated time accumulated after burn-in")
    S = steps.sum()
    j = 0.5 * (left.sum() + right.sum()) / T
    prof = profile.sum(axis=0) / S
    b_freq = b_counts.sum(axis=0) / S
    unit_j = (0.5 * (left + right) - j * time) / time.mean()
    unit_prof = (profile - prof * steps[:, None]) / steps.mean()
    unit_b = (b_counts - b_freq * steps[:, None]) / steps.mean()
    return NessEstimate(
        j_L=float(left.sum() / T),
        j_R=float(right.sum() / T),
        sigma_j=float(_se(unit_j)),
        profile=prof,
        profile_err=_se(unit_prof),
        b_freq=b_freq,
        b_freq_err=_se(unit_b),
        total_time=float(T),
        n_steps=int(S),
        n_trajectories=n_traj,
        drift=float(drift),
        drift_sigma=float(drift_sigma),
        trajectory_currents=np.asarray(currents, dtype=float),
    )


def _halves_drift(raw: _Raw) -> tuple[float, float]:
    nb = len(raw.time)
    h = nb // 2
    if h == 0:
        return 0.0, float("nan")
    j = 0.5 * (raw.left + raw.right) / np.where(raw.time > 0, raw.time, np.nan)
    first, second = j[:h], j[h : 2 * h]
    d = float(first.mean() - second.mean())
    s = float(np.sqrt(_se(first) ** 2 + _se(second) ** 2)) if h > 1 else float("nan")
    return d, s


def _single_estimate(raw: _Raw) -> NessEstimate:
    d, s = _halves_drift(raw)
    j = 0.5 * (raw.left.sum() + raw.right.sum()) / raw.time.sum() if raw.time.sum() > 0 else np.nan
    return _pool(raw.left, raw.right, raw.time, raw.steps, raw.profile, raw.b_counts, d, s, 1, [j])


def _warn_drift(est: NessEstimate) -> None:
    if np.isfinite(est.drift_sigma) and est.drift_sigma > 0 and abs(est.drift) > 3 * est.drift_sigma:
        warnings.warn(
            f"current drift between halves {est.drift:.3g} exceeds 3 sigma ({est.drift_sigma:.3g}); "
            "run may not be converged",
            ConvergenceWarning,
            stacklevel=3,
        )


def run_trajectory(
    plan: RunPlan, traj_id: int = 0, keep_log: bool = False, propagator: Callable | None = None
) -> NessEstimate | tuple[NessEstimate, BathEventLog]:
    """Single trajectory; error bars from batch means within the run.

    ``propagator(psi, tau)`` may replace the XXZ evolution by any
    magnetization-conserving unitary acting on full state vectors.
    """
    raw = _simulate(plan, traj_id, keep_log, propagator)
    est = _single_estimate(raw)
    _warn_drift(est)
    return (est, raw.log) if keep_log else est


def _worker(args) -> _Raw:
    plan, traj_id = args
    with threadpool_limits(1):
        return _simulate(plan, traj_id, False, None)


def run_ensemble(plan: RunPlan, threads: int = 1) -> NessEstimate:
    """Independent seeded trajectories pooled in trajectory-id order.

    Error bars come from the batch means of all trajectories together.

    BLAS is pinned to one thread per trajectory, so the pooled numbers do not
    depend on ``threads``.
    """
    if plan.n_trajectories == 1:
        with threadpool_limits(1):
            return run_trajectory(plan, 0)
    jobs = [(plan, i) for i in range(plan.n_trajectories)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            raws = list(ex.map(_worker, jobs))
    else:
        raws = [_worker(job) for job in jobs]

    # every batch of every trajectory is one unit of the error analysis
    left, right, time, steps = (np.concatenate([getattr(r, k) for r in raws]) for k in ("left", "right", "time", "steps"))
    profile = np.concatenate([r.profile for r in raws])
    b_counts = np.concatenate([r.b_counts for r in raws])
    drifts = np.array([_halves_drift(r)[0] for r in raws])
    currents = [0.5 * (r.left.sum() + r.right.sum()) / r.time.sum() for r in raws]
    est = _pool(left, right, time, steps, profile, b_counts, drifts.mean(), _se(drifts), len(raws), currents)
    _warn_drift(est)
    return est


def order_parameter(plan: RunPlan, threads: int = 1) -> tuple[float, float, NessEstimate]:
    """``theta = N <j>`` at maximal driving (mu_L = 0, mu_R = 1), with its error."""
    from dataclasses import replace

    plan = replace(plan, chain=plan.chain.with_potentials(0.0, 1.0))
    est = run_ensemble(plan, threads)
    N = plan.chain.n_sites
    return N * est.j, N * est.sigma_j, est
