"""Qubit basis bookkeeping and the bath interaction on pure states.

Basis states are labelled by ``c = sum_n c_n 2**(n-1)`` with ``c_n = 1`` meaning
spin up on site ``n`` (sites are 1-based).  The two border spins (sites 1 and N)
are split off from the interior (sites 2..N-1):

    a = sum_{n=2}^{N-1} c_n 2**(n-2)        interior index
    b = c_1 + 2 c_N                         border index

``gamma(a, b, N)`` rebuilds ``c`` and ``decompose(c, N)`` undoes it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-10
DEGENERATE_BRANCH = 1e-14


class Flip(enum.IntEnum):
    """Border spin-flip applied by a bath (value = change of the up-count)."""

    NONE = 0
    UP = 1  # 0 -> 1, a qubit inserted from the bath
    DOWN = -1  # 1 -> 0, a qubit removed into the bath


def _check_sites(n_sites: int) -> None:
    if n_sites < 3:
        raise ValueError(f"need at least 3 sites, got {n_sites}")


def gamma(a: int, b: int, n_sites: int) -> int:
    """Basis index of ``|a>_in (x) |b>_bo``."""
    _check_sites(n_sites)
    if not 0 <= a < 1 << (n_sites - 2):
        raise ValueError(f"interior index {a} out of range for N={n_sites}")
    if not 0 <= b < 4:
        raise ValueError(f"border index {b} out of range")
    return (b & 1) | (a << 1) | ((b >> 1) << (n_sites - 1))


def decompose(c: int, n_sites: int) -> tuple[int, int]:
    """Inverse of :func:`gamma`: ``c -> (a, b)``."""
    _check_sites(n_sites)
    if not 0 <= c < 1 << n_sites:
        raise ValueError(f"basis index {c} out of range for N={n_sites}")
    a = (c >> 1) & ((1 << (n_sites - 2)) - 1)
    b = (c & 1) | (((c >> (n_sites - 1)) & 1) << 1)
    return a, b


def border_of(n_sites: int) -> np.ndarray:
    """Border index of every basis state, as an array of length 2**N."""
    c = np.arange(1 << n_sites)
    return (c & 1) | (((c >> (n_sites - 1)) & 1) << 1)


def interior_of(n_sites: int) -> np.ndarray:
    c = np.arange(1 << n_sites)
    return (c >> 1) & ((1 << (n_sites - 2)) - 1)


def spin_signs(n_sites: int) -> np.ndarray:
    """Array ``s[c, n-1] = 2 c_n - 1`` of sigma^z eigenvalues, shape (2**N, N)."""
    c = np.arange(1 << n_sites)
    return 2 * ((c[:, None] >> np.arange(n_sites)) & 1) - 1


@dataclass(frozen=True)
class BathPotentials:
    """Probabilities that the left/right border spin is up after a bath contact."""

    mu_L: float
    mu_R: float
    # field strength as given to symmetric(); keeps mu exact on the way back
    drive: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("mu_L", "mu_R"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def symmetric(cls, mu: float) -> "BathPotentials":
        """Symmetric driving ``mu_L = (1 - mu)/2``, ``mu_R = (1 + mu)/2``."""
        if not 0.0 <= mu <= 1.0:
            raise ValueError(f"field strength mu={mu} outside [0, 1]")
        return cls(0.5 * (1.0 - mu), 0.5 * (1.0 + mu), drive=mu)

    @property
    def field(self) -> float:
        return self.drive if self.drive is not None else self.mu_R - self.mu_L


@dataclass
class PureState:
    amplitudes: np.ndarray
    n_sites: int

    def __post_init__(self):
        _check_sites(self.n_sites)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.n_sites,):
            raise ValueError(
                f"expected {1 << self.n_sites} amplitudes, got {self.amplitudes.shape}"
            )

    @classmethod
    def basis(cls, c: int, n_sites: int) -> "PureState":
        psi = np.zeros(1 << n_sites, dtype=complex)
        psi[c] = 1.0
        return cls(psi, n_sites)

    @classmethod
    def random(cls, n_sites: int, rng: np.random.Generator) -> "PureState":
        """Independent complex Gaussian amplitudes, normalized."""
        d = 1 << n_sites
        psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        return cls(psi / np.linalg.norm(psi), n_sites)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "PureState":
        return PureState(self.amplitudes.copy(), self.n_sites)


def border_probabilities(state: PureState) -> np.ndarray:
    """``p_b = sum_a |psi_gamma(a,b)|^2`` for b = 0..3."""
    w = np.abs(state.amplitudes) ** 2
    return np.bincount(border_of(state.n_sites), weights=w, minlength=4)


def sample_index(weights: np.ndarray, u: float) -> int:
    """Pick an index against the cumulative weights with a single uniform draw.

    Lower index wins ties.  Zero-weight entries can never be chosen.
    """
    cum = np.cumsum(weights)
    k = int(np.searchsorted(cum, u * cum[-1], side="right"))
    k = min(k, len(weights) - 1)
    if weights[k] < DEGENERATE_BRANCH:
        # defensive only: cumulative sampling cannot land on an empty branch
        k = int(np.argmax(weights))
    return k


def measure_border(state: PureState, u: float) -> tuple[int, PureState, float]:
    """Measure sigma^z on sites 1 and N and collapse the state.

    Returns the outcome ``b``, the renormalized post-measurement state and the
    outcome probability ``p_b``.
    """
    p = border_probabilities(state)
    b = sample_index(p, u)
    mask = border_of(state.n_sites) == b
    psi = np.where(mask, state.amplitudes, 0.0)
    psi /= np.sqrt(p[b])
    return b, PureState(psi, state.n_sites), float(p[b])


def apply_sigma_x(state: PureState, site: int) -> PureState:
    """Flip spin ``site`` (1-based): ``psi'_c = psi_{c xor 2**(site-1)}``."""
    if not 1 <= site <= state.n_sites:
        raise ValueError(f"site {site} out of range 1..{state.n_sites}")
    c = np.arange(1 << state.n_sites)
    return PureState(state.amplitudes[c ^ (1 << (site - 1))], state.n_sites)


def conditional_flip(
    state: PureState, b: int, zeta_L: float, zeta_R: float, pots: BathPotentials
) -> tuple[PureState, tuple[Flip, Flip]]:
    """Force the border spins towards the bath values after a measurement.

    ``zeta < mu`` demands the border spin up, otherwise down; sigma^x is applied
    only when the measured digit disagrees.  ``state`` must have definite
    border ``b``.
    """
    flips = []
    for zeta, mu, digit, site in (
        (zeta_L, pots.mu_L, b & 1, 1),
        (zeta_R, pots.mu_R, b >> 1, state.n_sites),
    ):
        want = 1 if zeta < mu else 0
        if want == digit:
            flips.append(Flip.NONE)
        else:
            state = apply_sigma_x(state, site)
            flips.append(Flip.UP if want else Flip.DOWN)
    return state, (flips[0], flips[1])


def flip_border(b: int, zeta_L: float, zeta_R: float, pots: BathPotentials):
    """Border-index version of :func:`conditional_flip`: ``b -> (b', flips)``."""
    left = 1 if zeta_L < pots.mu_L else 0
    right = 1 if zeta_R < pots.mu_R else 0
    return left | (right << 1), (Flip(left - (b & 1)), Flip(right - (b >> 1)))


def total_magnetization(state: PureState) -> float:
    """``<M> = sum_c |psi_c|^2 sum_n (2 c_n - 1)``."""
    w = np.abs(state.amplitudes) ** 2
    return float(w @ spin_signs(state.n_sites).sum(axis=1))


def site_magnetizations(state: PureState) -> np.ndarray:
    """``<sigma^z_n>`` for n = 1..N."""
    w = np.abs(state.amplitudes) ** 2
    return w @ spin_signs(state.n_sites)
