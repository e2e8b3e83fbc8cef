import numpy as np
import pytest
import scipy.linalg as sla

from xxzness.basis import PureState
from xxzness.errors import PropagationError
from xxzness.hamiltonian import ChainCouplings, build_hamiltonian
from xxzness.propagator import (
    METHODS,
    Propagator,
    PropagatorSettings,
    dense_propagator,
    propagate,
)

TOL = 1e-10


def rand_psi(N, seed):
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(1 << N) + 1j * rng.standard_normal(1 << N)
    return psi / np.linalg.norm(psi)


@pytest.fixture(params=METHODS)
def method(request):
    return request.param


def test_zero_time_is_identity(method):
    H = build_hamiltonian(5, ChainCouplings(1.0, 0.5))
    psi = rand_psi(5, 0)
    out = Propagator(H, PropagatorSettings(method))(psi, 0.0)
    assert np.abs(out - psi).max() < 1e-12


def test_eigenvector_phase(method):
    H = build_hamiltonian(4, ChainCouplings(0.25, 0.5))
    E, V = np.linalg.eigh(H.dense())
    prop = Propagator(H, PropagatorSettings(method))
    for k in [0, 5, 15]:
        for tau in [0.3, 1.0, 2.7]:
            out = prop(V[:, k], tau)
            assert np.linalg.norm(out - np.exp(-1j * tau * E[k]) * V[:, k]) < 1e-10


@pytest.mark.parametrize("N", [3, 4, 6])
@pytest.mark.parametrize("tau", [0.05, 1.0, 2.0])
@pytest.mark.parametrize("J", [(1.0, 0.5), (0.25, 0.5), (0.5, -2.0)])
def test_matches_expm_oracle(method, N, tau, J):
    H = build_hamiltonian(N, ChainCouplings(*J))
    psi = rand_psi(N, N)
    exact = sla.expm(-1j * tau * H.dense()) @ psi
    out = Propagator(H, PropagatorSettings(method))(psi, tau)
    assert np.linalg.norm(out - exact) < 1e-9


def test_group_property(method):
    N = 6
    H = build_hamiltonian(N, ChainCouplings(1.0, 0.5))
    prop = Propagator(H, PropagatorSettings(method, tolerance=TOL))
    for seed in range(3):
        psi = rand_psi(N, seed)
        two = prop(prop(psi, 0.4), 0.9)
        one = prop(psi, 1.3)
        assert np.linalg.norm(two - one) < 2 * 3 * TOL


def test_norm_and_energy_conserved(method):
    N = 7
    H = build_hamiltonian(N, ChainCouplings(1.0, 0.5))
    prop = Propagator(H, PropagatorSettings(method, tolerance=TOL)) if method != "dense" or N <= 8 else None
    psi = rand_psi(N, 11)
    e0 = np.vdot(psi, H.matrix @ psi).real
    out = prop(psi, 1.7)
    assert abs(np.linalg.norm(out) - 1) < 10 * TOL
    assert abs(np.vdot(out, H.matrix @ out).real - e0) < 10 * TOL * abs(H.gershgorin_bounds()[1])


@pytest.mark.parametrize("N", [12, 14])
def test_chebyshev_unitary_large(N):
    H = build_hamiltonian(N, ChainCouplings(0.25, 0.5))
    psi = rand_psi(N, 2)
    out = Propagator(H)(psi, 1.0)
    assert abs(np.linalg.norm(out) - 1) < 1e-10


def test_chebyshev_vs_sector_n12():
    H = build_hamiltonian(12, ChainCouplings(1.0, 0.5))
    psi = rand_psi(12, 5)
    a = Propagator(H, PropagatorSettings("chebyshev"))(psi, 1.0)
    b = Propagator(H, PropagatorSettings("sector"))(psi, 1.0)
    assert np.linalg.norm(a - b) < 1e-9


def test_propagate_wraps_state():
    H = build_hamiltonian(4, ChainCouplings(0.25, 0.5))
    s = PureState(rand_psi(4, 3), 4)
    out = propagate(s, 0.7, H)
    assert out.n_sites == 4
    np.testing.assert_allclose(out.amplitudes, sla.expm(-0.7j * H.dense()) @ s.amplitudes, atol=1e-10)
    with pytest.raises(ValueError):
        propagate(s, -1.0, H)


def test_nonconvergence_is_loud():
    H = build_hamiltonian(6, ChainCouplings(1.0, 0.5))
    with pytest.raises(PropagationError):
        Propagator(H, PropagatorSettings("chebyshev", max_terms=10))(rand_psi(6, 0), 5.0)
    with pytest.raises(PropagationError):
        Propagator(H, PropagatorSettings("taylor", max_terms=3))(rand_psi(6, 0), 1.0)


def test_bad_settings():
    with pytest.raises(ValueError):
        PropagatorSettings("lanczos")
    with pytest.raises(ValueError):
        PropagatorSettings(tolerance=0.0)
    with pytest.raises(ValueError):
        Propagator(build_hamiltonian(9, ChainCouplings(1, 1)), PropagatorSettings("dense"))


def test_spectral_bound_override():
    N = 5
    H = build_hamiltonian(N, ChainCouplings(1.0, 0.5))
    bound = (4 * 1.0 + 0.5) * (N - 1)
    psi = rand_psi(N, 8)
    out = Propagator(H, PropagatorSettings(spectral_bound=bound))(psi, 1.2)
    assert np.linalg.norm(out - sla.expm(-1.2j * H.dense()) @ psi) < 1e-9


def test_dense_propagator():
    N = 4
    H = build_hamiltonian(N, ChainCouplings(0.25, 0.5))
    np.testing.assert_allclose(dense_propagator(N, 0.0, H), np.eye(16), atol=1e-12)
    U = dense_propagator(N, 1.0, H)
    assert np.abs(U @ U.conj().T - np.eye(16)).max() < 1e-10
    M = np.diag(H.magnetization)
    assert np.abs(U @ M - M @ U).max() < 1e-10
    prop = Propagator(H)
    cols = np.array([prop(e, 1.0) for e in np.eye(16, dtype=complex)]).T
    assert np.abs(cols - U).max() < 1e-9


def test_dense_propagator_refuses_large():
    H = build_hamiltonian(9, ChainCouplings(1.0, 0.5))
    with pytest.raises(ValueError):
        dense_propagator(9, 1.0, H)
    with pytest.raises(ValueError):
        dense_propagator(8, 1.0, H)
