import warnings
from dataclasses import replace

import numpy as np
import pytest

from xxzness.basis import BathPotentials, Flip, PureState, border_probabilities
from xxzness.config import ChainSpec, LagDistribution, RunPlan
from xxzness.hamiltonian import ChainCouplings, build_hamiltonian
from xxzness.master import solve_ness
from xxzness.propagator import Propagator, PropagatorSettings
from xxzness.trajectory import (
    BathEventLog,
    run_ensemble,
    run_trajectory,
    sample_lag,
    step,
    trajectory_rng,
)

pytestmark = pytest.mark.filterwarnings("ignore::xxzness.trajectory.ConvergenceWarning")


def plan_for(chain, steps=4000, burn=500, seed=0, n=1, **kw):
    return RunPlan(chain, total_steps=steps, burn_in_steps=burn, seed=seed, n_trajectories=n, **kw)


def test_lag_constant():
    rng = np.random.default_rng(0)
    assert all(sample_lag(LagDistribution("A", 1.0), rng) == 1.0 for _ in range(100))


def test_lag_uniform_moments():
    rng = np.random.default_rng(1)
    x = np.array([sample_lag(LagDistribution("uniform", 1.0), rng) for _ in range(100_000)])
    assert x.min() >= 0 and x.max() <= 2
    assert abs(x.mean() - 1.0) < 3 * np.sqrt(1 / 3 / len(x))


def test_lag_exponential_moments():
    rng = np.random.default_rng(2)
    x = np.array([sample_lag(LagDistribution("C", 1.0), rng) for _ in range(100_000)])
    n = len(x)
    assert abs(x.mean() - 1.0) < 3 / np.sqrt(n)
    # var of the sample variance of Exp(1) is (mu4 - sigma^4)/n = 8/n
    assert abs(x.std(ddof=1) - 1.0) < 3 * np.sqrt(8 / n) / 2


def test_lag_distribution_validation():
    assert LagDistribution("B").kind == "uniform"
    assert LagDistribution("exponential").label == "C"
    with pytest.raises(ValueError):
        LagDistribution("gamma")


def test_step_forced_borders():
    chain = ChainSpec(5, ChainCouplings(1.0, 0.5), BathPotentials(1.0, 1.0))
    H = build_hamiltonian(5, chain.couplings)
    prop = Propagator(H)
    rng = np.random.default_rng(0)
    state = PureState.random(5, rng)
    for _ in range(20):
        state, ev = step(state, chain, prop, rng)
        assert border_probabilities(state)[3] == pytest.approx(1.0, abs=1e-12)
        assert state.norm == pytest.approx(1.0, abs=1e-12)
        assert ev.lag == 1.0


def test_frozen_dynamics_no_transport():
    chain = ChainSpec(5, ChainCouplings(0.0, 0.0), BathPotentials(1.0, 0.0))
    est, log = run_trajectory(plan_for(chain, steps=200, burn=1), keep_log=True)
    assert np.count_nonzero(log.flip_left[1:]) == 0
    assert np.count_nonzero(log.flip_right[1:]) == 0
    assert log.flip_left[0] in (Flip.NONE, Flip.UP)
    assert log.flip_right[0] in (Flip.NONE, Flip.DOWN)
    assert est.j_L == est.j_R == 0.0


def test_generic_path_matches_product_kernel():
    # the full-vector step and the product-state kernel consume the same draws
    for lag in ["A", "C"]:
        chain = ChainSpec.symmetric(6, 2.0, 0.6, lag=lag)
        plan = plan_for(chain, steps=300, burn=10)
        est1, log1 = run_trajectory(plan, keep_log=True)
        est2, log2 = run_trajectory(replace(plan, propagation="dense"), keep_log=True)
        np.testing.assert_array_equal(log1.b, log2.b)
        np.testing.assert_array_equal(log1.flip_left, log2.flip_left)
        np.testing.assert_array_equal(log1.lag, log2.lag)
        np.testing.assert_allclose(est1.profile, est2.profile, atol=1e-9)


def test_custom_propagator_hook():
    chain = ChainSpec.symmetric(5, 0.5, 0.3)
    H = build_hamiltonian(5, chain.couplings)
    plan = plan_for(chain, steps=200, burn=10)
    _, ref = run_trajectory(plan, keep_log=True)
    _, log = run_trajectory(plan, keep_log=True, propagator=Propagator(H, PropagatorSettings("taylor")))
    np.testing.assert_array_equal(ref.b, log.b)


def test_b_distribution_matches_master_operator():
    chain = ChainSpec.symmetric(4, 2.0, 0.6)
    est = run_ensemble(plan_for(chain, steps=13_000, burn=500, seed=7, n=8))
    p = solve_ness(chain).p
    assert np.all(np.abs(est.b_freq - p) < 3 * est.b_freq_err)


def test_no_drive_no_current():
    chain = ChainSpec(6, ChainCouplings(1.0, 0.5), BathPotentials(0.3, 0.3))
    est = run_ensemble(plan_for(chain, steps=6000, seed=3, n=8))
    assert abs(est.j) < 3 * est.sigma_j
    assert abs(est.j_L - est.j_R) <= 3 * est.sigma_j


def test_estimate_invariants():
    chain = ChainSpec.symmetric(7, 0.5, 0.3)
    est = run_trajectory(plan_for(chain, steps=5000, seed=1))
    assert np.all(np.abs(est.profile) <= 1)
    assert abs(est.j_L - est.j_R) <= 3 * est.sigma_j
    assert est.n_steps == 4500 and est.total_time == pytest.approx(4500.0)
    assert est.n_trajectories == 1
    # border values right after the bath contact reflect the potentials
    assert est.profile[0] == pytest.approx(2 * chain.potentials.mu_L - 1, abs=0.05)
    assert est.profile[-1] == pytest.approx(2 * chain.potentials.mu_R - 1, abs=0.05)


def test_zero_time_fails():
    chain = ChainSpec(5, ChainCouplings(1.0, 0.5), BathPotentials(0.2, 0.8), LagDistribution("A", 0.0))
    with pytest.raises(ValueError):
        run_trajectory(plan_for(chain, steps=50, burn=5))


def test_ensemble_single_equals_trajectory():
    plan = plan_for(ChainSpec.symmetric(6, 2.0, 0.5), steps=1500, seed=9)
    a = run_ensemble(plan)
    b = run_trajectory(plan, 0)
    assert (a.j_L, a.j_R, a.sigma_j) == (b.j_L, b.j_R, b.sigma_j)
    np.testing.assert_array_equal(a.profile, b.profile)


def test_ensemble_independent_of_thread_count():
    plan = plan_for(ChainSpec.symmetric(7, 2.0, 0.5, lag="B"), steps=1200, seed=4, n=3)
    a = run_ensemble(plan, threads=1)
    b = run_ensemble(plan, threads=2)
    assert (a.j_L, a.j_R, a.sigma_j) == (b.j_L, b.j_R, b.sigma_j)
    np.testing.assert_array_equal(a.profile, b.profile)
    np.testing.assert_array_equal(a.trajectory_currents, b.trajectory_currents)


def test_replay_is_bitwise():
    plan = plan_for(ChainSpec.symmetric(6, 0.5, 0.3, lag="C"), steps=800, seed=2**63 + 5)
    assert run_trajectory(plan).j_L == run_trajectory(plan).j_L


def test_rng_streams_differ_per_trajectory():
    a = trajectory_rng(1, 0).random(4)
    b = trajectory_rng(1, 1).random(4)
    assert not np.allclose(a, b)


def test_sigma_shrinks_with_trajectories():
    chain = ChainSpec.symmetric(6, 0.5, 0.3)
    small = run_ensemble(plan_for(chain, steps=1500, seed=11, n=4))
    big = run_ensemble(plan_for(chain, steps=1500, seed=11, n=16))
    assert 1.2 < small.sigma_j / big.sigma_j < 4.0


def test_event_log_csv(tmp_path):
    plan = plan_for(ChainSpec.symmetric(5, 2.0, 0.5, lag="C"), steps=30, burn=3)
    _, log = run_trajectory(plan, keep_log=True)
    assert isinstance(log, BathEventLog)
    path = tmp_path / "events.csv"
    log.write_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "step,b,flip_left,flip_right,lag,time"
    assert len(rows) == 31
    assert float(rows[-1].split(",")[-1]) == pytest.approx(log.lag.sum())


def test_convergence_warning_on_drift():
    from xxzness.trajectory import ConvergenceWarning, _warn_drift

    est = run_trajectory(plan_for(ChainSpec.symmetric(5, 0.5, 0.3), steps=400, burn=10))
    assert np.isfinite(est.drift) and np.isfinite(est.drift_sigma)
    est.drift, est.drift_sigma = 1.0, 0.1
    with pytest.warns(ConvergenceWarning):
        _warn_drift(est)


def test_plan_validation():
    chain = ChainSpec.symmetric(5, 0.5, 0.3)
    with pytest.raises(ValueError):
        RunPlan(chain, total_steps=10, burn_in_steps=10)
    with pytest.raises(ValueError):
        RunPlan(chain, n_trajectories=0)
    with pytest.raises(ValueError):
        RunPlan(chain, seed=-1)
