"""Experiment presets, sweeps, result records and the oracle self-check."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .basis import decompose, gamma
from .config import ChainSpec, LagDistribution, RunPlan
from .hamiltonian import ChainCouplings, build_hamiltonian
from .master import (
    MAX_SITES,
    analytic_current_n4,
    analytic_gradient_n4,
    small_tau_current,
    solve_ness,
)
from .propagator import Propagator, PropagatorSettings, dense_propagator
from .trajectory import resolve_method, run_ensemble

log = logging.getLogger(__name__)

SOLVERS = ("trajectory", "exact", "analytic")
FORMATS = ("csv", "json", "both")
LARGE_SITES = 16
SIG_DIGITS = 12

MU_GRID = tuple(round(0.05 * k, 2) for k in range(21))
DELTA_GRID = tuple(round(0.2 + (3.0 - 0.2) * k / 24, 6) for k in range(25))
ZENO_TAUS = (0.01, 0.02, 0.05, 0.1, 0.15, 0.2)

CSV_COLUMNS = [
    "N", "J_x", "J_z", "Delta", "mu_L", "mu_R", "tau_kind", "tau_mean", "steps", "burn_in", "seed",
    "j_L", "j_R", "sigma_j", "N_j", "theta", "gap",
    # extras beyond the core table
    "mu", "j", "solver", "method", "trajectories", "wall_time", "preset", "version",
]


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One sweep series: the Cartesian product of the grids below."""

    preset: str = "custom"
    n_sites: tuple = (8,)
    delta: tuple = (0.5,)
    mu: tuple = (0.3,)
    tau: tuple = (1.0,)
    lag: tuple = ("A",)
    J_z: float = 0.5
    solver: str = "trajectory"
    steps: int = 10**5
    burn_in: int = 10**4
    trajectories: int = 8
    seed: int = 0
    threads: int = 1
    large: bool = False
    # step budget for N >= LARGE_SITES unless steps were set explicitly
    large_steps: int = 2 * 10**4
    large_burn_in: int = 2 * 10**3

    def __post_init__(self):
        for name in ("n_sites", "delta", "mu", "tau", "lag"):
            setattr(self, name, tuple(getattr(self, name)))
        for name in ("n_sites", "delta", "mu", "tau"):
            grid = getattr(self, name)
            if not grid:
                raise UsageError(f"empty {name} grid")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise UsageError(f"{name} grid must be strictly increasing: {grid}")
        if self.solver not in SOLVERS:
            raise UsageError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        for kind in self.lag:
            LagDistribution(kind)
        if min(self.n_sites) < 3:
            raise UsageError("chains need at least 3 sites")
        if min(self.delta) <= 0:
            raise UsageError("anisotropy must be positive")
        if min(self.mu) < 0 or max(self.mu) > 1:
            raise UsageError("field strengths must lie in [0, 1]")
        if min(self.tau) <= 0:
            raise UsageError("mean time lag must be positive")
        if self.solver == "exact" and max(self.n_sites) > MAX_SITES:
            raise UsageError(f"exact solver limited to N <= {MAX_SITES}")
        if self.solver == "analytic" and set(self.n_sites) != {4}:
            raise UsageError("the analytic current exists for N = 4 only")
        RunPlan(ChainSpec.symmetric(3, 1.0, 0.0), self.steps, self.burn_in, self.seed, self.trajectories)
        if self.threads < 1:
            raise UsageError("threads must be >= 1")

    def points(self):
        sizes = self.n_sites if self.large else tuple(n for n in self.n_sites if n < LARGE_SITES)
        return list(itertools.product(sizes, self.delta, self.mu, self.tau, self.lag))


def _presets() -> dict[str, list[dict]]:
    return {
        "fig1a": [
            dict(n_sites=(12,), delta=(0.5,), mu=MU_GRID, lag=("A",)),
            dict(n_sites=(12,), delta=(2.0,), mu=MU_GRID, lag=("A", "B", "C")),
        ],
        "fig1b": [
            dict(n_sites=(4, 8, 12, 16), delta=(2.0,), mu=MU_GRID),
            dict(n_sites=(4,), delta=(2.0,), mu=MU_GRID, solver="analytic"),
        ],
        "fig2": [
            dict(n_sites=(8, 12, 16), delta=(0.5,), mu=(0.3,)),
            dict(n_sites=(8, 12, 16), delta=(2.0,), mu=(0.3, 1.0)),
        ],
        "fig3": [dict(n_sites=(6, 8, 10, 12), delta=DELTA_GRID, mu=(1.0,))],
        "zeno": [
            dict(n_sites=(4,), delta=(0.5, 1.0, 2.0), mu=(0.6,), tau=ZENO_TAUS, solver="exact"),
            dict(n_sites=(4,), delta=(0.5, 1.0, 2.0), mu=(0.6,), tau=ZENO_TAUS, solver="analytic"),
        ],
        "custom": [dict()],
    }


PRESETS = tuple(_presets())
CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def preset_configs(name: str, overrides: dict | None = None) -> list[ExperimentConfig]:
    """Series of a preset with ``overrides`` applied to every one of them."""
    table = _presets()
    if name not in table:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(table)}")
    overrides = dict(overrides or {})
    unknown = set(overrides) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown configuration keys: {sorted(unknown)}")
    overrides.pop("preset", None)
    out = []
    for series in table[name]:
        merged = {**series, **overrides}
        # analytic and exact series keep their solver unless it was overridden
        out.append(ExperimentConfig(preset=name, **merged))
    return out


@dataclass
class ResultRecord:
    preset: str
    solver: str
    n_sites: int
    J_x: float
    J_z: float
    delta: float
    mu: float
    mu_L: float
    mu_R: float
    lag: str
    tau_mean: float
    seed: int
    steps: int | None
    burn_in: int | None
    trajectories: int | None
    method: str
    j_L: float
    j_R: float
    sigma_j: float
    gap: float | None
    profile: list
    profile_err: list | None
    b_freq: list
    wall_time: float
    version: str = __version__

    @property
    def j(self) -> float:
        return 0.5 * (self.j_L + self.j_R)

    @property
    def N_j(self) -> float:
        return self.n_sites * self.j

    @property
    def theta(self) -> float | None:
        """Order parameter, defined at maximal driving only."""
        return self.N_j if (self.mu_L, self.mu_R) == (0.0, 1.0) else None

    def row(self) -> dict:
        return {
            "N": self.n_sites, "J_x": self.J_x, "J_z": self.J_z, "Delta": self.delta,
            "mu_L": self.mu_L, "mu_R": self.mu_R, "tau_kind": LagDistribution(self.lag).kind,
            "tau_mean": self.tau_mean, "steps": self.steps, "burn_in": self.burn_in, "seed": self.seed,
            "j_L": self.j_L, "j_R": self.j_R, "sigma_j": self.sigma_j, "N_j": self.N_j,
            "theta": self.theta, "gap": self.gap, "mu": self.mu, "j": self.j, "solver": self.solver,
            "method": self.method, "trajectories": self.trajectories, "wall_time": self.wall_time,
            "preset": self.preset, "version": self.version,
        }


def _round(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(f"{x:.{SIG_DIGITS}g}") if math.isfinite(x) else None
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_round(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    return x


def run_point(cfg: ExperimentConfig, N, delta, mu, tau, lag) -> ResultRecord:
    chain = ChainSpec.symmetric(N, delta, mu, J_z=cfg.J_z, lag=lag, tau=tau)
    pots = chain.potentials
    t0 = time.perf_counter()
    common = dict(
        preset=cfg.preset, solver=cfg.solver, n_sites=N, J_x=chain.couplings.J_x, J_z=cfg.J_z,
        delta=delta, mu=mu, mu_L=pots.mu_L, mu_R=pots.mu_R, lag=LagDistribution(lag).label,
        tau_mean=tau, seed=cfg.seed,
    )
    if cfg.solver == "analytic":
        j = float(analytic_current_n4(chain.couplings.J_x, delta, pots.mu_L, pots.mu_R, tau))
        grad = float(analytic_gradient_n4(delta, pots.mu_L, pots.mu_R))
        return ResultRecord(
            **common, steps=None, burn_in=None, trajectories=None, method="closed-form",
            j_L=j, j_R=j, sigma_j=0.0, gap=None, profile=[grad], profile_err=None, b_freq=[],
            wall_time=time.perf_counter() - t0,
        )
    if cfg.solver == "exact":
        sol = solve_ness(chain)
        return ResultRecord(
            **common, steps=None, burn_in=None, trajectories=None, method="master-operator",
            j_L=sol.j, j_R=sol.j, sigma_j=0.0, gap=sol.gap, profile=list(sol.profile), profile_err=None,
            b_freq=list(sol.p), wall_time=time.perf_counter() - t0,
        )
    steps, burn = cfg.steps, cfg.burn_in
    if N >= LARGE_SITES:
        steps, burn = cfg.large_steps, cfg.large_burn_in
    plan = RunPlan(chain, steps, burn, cfg.seed, cfg.trajectories)
    est = run_ensemble(plan, threads=cfg.threads)
    return ResultRecord(
        **common, steps=steps, burn_in=burn, trajectories=cfg.trajectories, method=resolve_method(plan),
        j_L=est.j_L, j_R=est.j_R, sigma_j=est.sigma_j, gap=None, profile=list(est.profile),
        profile_err=list(est.profile_err), b_freq=list(est.b_freq), wall_time=time.perf_counter() - t0,
    )


def run_config(cfg: ExperimentConfig) -> list[ResultRecord]:
    skipped = [n for n in cfg.n_sites if n >= LARGE_SITES and not cfg.large]
    if skipped:
        log.warning("skipping N=%s: pass --large to include them", skipped)
    records = []
    for point in cfg.points():
        rec = run_point(cfg, *point)
        log.info(
            "%s N=%d Delta=%g mu=%g tau=%g lag=%s: j=%.6g +- %.2g (%.1fs)",
            cfg.solver, *point, rec.j, rec.sigma_j, rec.wall_time,
        )
        records.append(rec)
    return records


def run_preset(name: str, overrides: dict | None = None) -> list[ResultRecord]:
    return [rec for cfg in preset_configs(name, overrides) for rec in run_config(cfg)]


# -- emission -----------------------------------------------------------------


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        row = {}
        for key, val in rec.row().items():
            val = _round(val)
            row[key] = "" if val is None else (f"{val:.{SIG_DIGITS}g}" if isinstance(val, float) else val)
        writer.writerow(row)
    return buf.getvalue()


def records_to_json(records, config: dict | None = None) -> str:
    points = []
    for rec in records:
        d = {**rec.row(), "profile": rec.profile, "profile_err": rec.profile_err, "b_freq": rec.b_freq}
        points.append({k: _round(v) for k, v in d.items()})
    doc = {"version": __version__, "config": config or {}, "points": points}
    return json.dumps(doc, indent=1)


def emit_results(records, out: str | Path | None, fmt: str = "csv", config: dict | None = None) -> list[Path]:
    """Write ``out.csv`` and/or ``out.json``; with ``out=None`` print to stdout."""
    if not records:
        raise ValueError("nothing to emit")
    if fmt not in FORMATS:
        raise UsageError(f"unknown format {fmt!r}")
    texts = {}
    if fmt in ("csv", "both"):
        texts[".csv"] = records_to_csv(records)
    if fmt in ("json", "both"):
        texts[".json"] = records_to_json(records, config)
    if out is None:
        if len(texts) > 1:
            raise UsageError("--format both needs --out")
        print(next(iter(texts.values())), end="")
        return []
    base = Path(out)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    written = []
    for suffix, text in texts.items():
        path = base.with_suffix(suffix)
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
        written.append(path)
    return written


# -- self check ---------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    deviation: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<40s} deviation {self.deviation:.3g}  tolerance {self.tolerance:.3g}  {self.detail}"


def _check(name, deviation, tolerance, detail=""):
    deviation = float(deviation)
    return CheckResult(name, deviation, tolerance, bool(deviation <= tolerance), detail)


def _check_gamma():
    bad = 0
    for N in range(3, 13):
        cs = [gamma(a, b, N) for a in range(1 << (N - 2)) for b in range(4)]
        bad += sorted(cs) != list(range(1 << N))
        bad += sum(decompose(c, N) != (a, b) for c, (a, b) in zip(cs, itertools.product(range(1 << (N - 2)), range(4))))
    return _check("index bijection N=3..12", bad, 0)


def _check_hamiltonian():
    dev = 0.0
    for N in range(3, 9):
        H = build_hamiltonian(N, ChainCouplings(0.8, 0.5))
        M = np.diag(H.magnetization)
        H = H.dense()
        dev = max(dev, np.abs(H - H.conj().T).max(), np.abs(H @ M - M @ H).max())
    return _check("Hermiticity and [H, M] = 0, N<=8", dev, 0.0)


def _check_propagators():
    out = []
    H = build_hamiltonian(6, ChainCouplings(1.0, 0.5))
    rng = np.random.default_rng(0)
    psi = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    psi /= np.linalg.norm(psi)
    cheb = Propagator(H, PropagatorSettings("chebyshev"))
    out.append(_check("propagator at tau=0 is identity", np.abs(cheb(psi, 0.0) - psi).max(), 1e-12))
    dev = np.linalg.norm(dense_propagator(6, 1.0, H) @ psi - cheb(psi, 1.0))
    out.append(_check("dense vs Chebyshev propagator N=6", dev, 1e-9))
    H = build_hamiltonian(10, ChainCouplings(0.25, 0.5))
    psi = rng.standard_normal(1024) + 1j * rng.standard_normal(1024)
    psi /= np.linalg.norm(psi)
    dev = np.linalg.norm(Propagator(H, PropagatorSettings("sector"))(psi, 1.0) - Propagator(H)(psi, 1.0))
    out.append(_check("sector vs Chebyshev propagator N=10", dev, 1e-9))
    return out


def _check_monte_carlo(N, seed, steps):
    chain = ChainSpec.symmetric(N, 2.0, 0.6)
    sol = solve_ness(chain)
    est = run_ensemble(RunPlan(chain, steps, steps // 20, seed, 8))
    z_b = np.max(np.abs(est.b_freq - sol.p) / est.b_freq_err)
    z_j = abs(est.j - sol.j) / est.sigma_j
    interior = slice(1, N - 1)
    z_prof = np.max(np.abs(est.profile[interior] - sol.profile[interior]) / est.profile_err[interior])
    z_lr = abs(est.j_L - est.j_R) / est.sigma_j
    return [
        _check(f"Monte Carlo vs exact b-outcomes N={N}", z_b, 3.0, "(sigmas)"),
        _check(f"Monte Carlo vs exact current N={N}", z_j, 3.0, "(sigmas)"),
        _check(f"Monte Carlo vs exact profile N={N}", z_prof, 3.0, "(sigmas)"),
        _check(f"left vs right bath current N={N}", z_lr, 3.0, "(sigmas)"),
    ]


def _check_small_tau(fault):
    out = []
    for delta in (0.5, 2.0):
        chain = ChainSpec.symmetric(4, delta, 0.6)
        if fault == "hopping":
            c = chain.couplings
            chain = replace(chain, couplings=ChainCouplings(2 * c.J_x, c.J_z))
        fit = small_tau_current(chain, ZENO_TAUS)
        ref = analytic_current_n4(ChainCouplings.from_delta(delta).J_x, delta, 0.2, 0.8, 1.0)
        out.append(_check(f"small-tau current coefficient Delta={delta}", abs(fit.c2 / ref - 1), 0.01,
                          f"(ratio {fit.c2 / ref:.4f})"))
        out.append(_check(f"zero-lag current intercept Delta={delta}", abs(fit.intercept) / fit.intercept_err, 3.0,
                          "(sigmas)"))
        g = [solve_ness(replace(chain, lag=LagDistribution("A", t))).gradient for t in (0.02, 0.01)]
        g0 = (4 * g[1] - g[0]) / 3
        ref = analytic_gradient_n4(delta, 0.2, 0.8)
        out.append(_check(f"small-tau interior gradient Delta={delta}", abs(g0 / ref - 1), 0.02))
    return out


def self_check(fault: str | None = None, steps: int = 6000, seed: int = 0) -> list[CheckResult]:
    """Run the oracle cross-checks; ``fault="hopping"`` doubles J_x in the numeric branch."""
    if fault not in (None, "hopping"):
        raise UsageError(f"unknown fault {fault!r}")
    results = [_check_gamma(), _check_hamiltonian(), *_check_propagators()]
    for N in (4, 5):
        results += _check_monte_carlo(N, seed, steps)
    results += _check_small_tau(fault)
    return results
