"""Phonon/energy modes, moving frames and fluctuation fields.

The phonon modes are ``xi^{+/-}_j = sqrt(c2) r_{j+1} +/- p_j`` and the
energy mode is ``e_j = p_j^2/2 + V_eps(r_j)``; overbars denote centering
with quadrature means of the product equilibrium measure.  A fluctuation
field pairs the centered mode with a smooth profile evaluated in a frame
moving at the lattice sound velocity, ``n^{-1/2} sum_j xibar_j phi(j/n + v t)``.
The corrected modes add the small energy coupling that cancels the
divergent cubic current term, ``xitilde = xi + eps * u * e`` with
``u = c3 / (2 c2^(3/2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dynamics import ChainState, ScalingConfig
from .errors import FrameWrapError
from .potential import GibbsMarginal, ScaledPotential, dv_constant

__all__ = [
    "TestFunction",
    "gaussian_profile",
    "hermite_profile",
    "Frame",
    "ModeArrays",
    "compute_modes",
    "fluctuation_field",
    "quadratic_field",
    "block_average",
    "energy_coupling",
]

# |phi| < 1e-14 outside this many widths of the center
_GAUSS_SUPPORT_WIDTHS = 9.0


def energy_coupling(c2: float, c3: float) -> float:
    """Coupling of the corrected phonon modes to the energy mode."""
    return c3 / (2.0 * c2**1.5)


class TestFunction:
    """A smooth rapidly decaying profile with analytic derivatives.

    Two kinds are supported: ``gaussian(center, width)`` meaning
    ``exp(-(x-center)^2 / (2 width^2))`` and ``hermite(index, scale)``
    meaning ``H_k(x/s) exp(-x^2 / (2 s^2))`` with the physicists' Hermite
    polynomial.  Both have closed-form L2 norms for the profile and its
    first derivative.
    """

    def __init__(self, kind: str, **params):
        if kind == "gaussian":
            self.center = float(params.pop("center", 0.0))
            self.width = float(params.pop("width", 1.0))
            if self.width <= 0:
                raise ValueError("gaussian width must be positive")
        elif kind == "hermite":
            self.index = int(params.pop("index", 0))
            self.scale = float(params.pop("scale", 1.0))
            self.center = float(params.pop("center", 0.0))
            if self.index < 0 or self.scale <= 0:
                raise ValueError("hermite index must be >= 0 and scale positive")
        else:
            raise ValueError(f"unknown test-function kind {kind!r}")
        if params:
            raise ValueError(f"unexpected parameters {sorted(params)}")
        self.kind = kind

    # -- evaluation ---------------------------------------------------

    def __call__(self, x, deriv: int = 0):
        if not 0 <= deriv <= 3:
            raise ValueError("derivatives available for orders 0..3 only")
        x = np.asarray(x, dtype=float)
        val = self._gauss(x, deriv) if self.kind == "gaussian" else self._herm(x, deriv)
        # hard-truncate the sub-1e-14 tails so disjoint supports are exact
        return np.where(np.abs(x - self.center) <= self.support_radius, val, 0.0)

    def _gauss(self, x, deriv):
        w2 = self.width**2
        y = x - self.center
        g = np.exp(-(y**2) / (2 * w2))
        if deriv == 0:
            return g
        if deriv == 1:
            return -y / w2 * g
        if deriv == 2:
            return (y**2 / w2 - 1.0) / w2 * g
        return (3.0 * y / w2 - y**3 / w2**2) / w2 * g

    def _herm_coef(self) -> np.ndarray:
        c = np.zeros(self.index + 1)
        c[self.index] = 1.0
        return c

    def _herm(self, x, deriv):
        s = self.scale
        y = (x - self.center) / s
        # phi = H_k(y) e^{-y^2/2}; each derivative in y maps the Hermite
        # coefficient vector a -> a' with (H_k e^{-y^2/2})' =
        # (k H_{k-1} - H_{k+1}/2) e^{-y^2/2}
        coef = self._herm_coef()
        for _ in range(deriv):
            coef = _herm_derivative_coef(coef)
        val = np.polynomial.hermite.hermval(y, coef) * np.exp(-(y**2) / 2.0)
        return val / s**deriv

    # -- closed-form geometry -----------------------------------------

    def l2_norm_sq(self, deriv: int = 0) -> float:
        """Closed-form squared L2 norm of the profile (deriv in {0, 1})."""
        if self.kind == "gaussian":
            if deriv == 0:
                return self.width * math.sqrt(math.pi)
            if deriv == 1:
                return math.sqrt(math.pi) / (2.0 * self.width)
        else:
            coef = self._herm_coef()
            for _ in range(deriv):
                coef = _herm_derivative_coef(coef)
            total = sum(
                c**2 * 2.0**k * math.factorial(k) for k, c in enumerate(coef)
            )
            if deriv <= 1:
                return self.scale ** (1 - 2 * deriv) * total * math.sqrt(math.pi)
        raise ValueError("closed-form norms cover derivative orders 0 and 1")

    @cached_property
    def support_radius(self) -> float:
        """Radius beyond which |phi| < 1e-14."""
        if self.kind == "gaussian":
            return _GAUSS_SUPPORT_WIDTHS * self.width
        # Hermite polynomial prefactor widens the numerical support a bit
        return (_GAUSS_SUPPORT_WIDTHS + 0.8 * self.index) * self.scale

    def shifted_support(self, shift: float) -> tuple[float, float]:
        """Support interval of x -> phi(x + shift)."""
        lo = self.center - shift - self.support_radius
        return lo, lo + 2.0 * self.support_radius


def _herm_derivative_coef(coef: np.ndarray) -> np.ndarray:
    out = np.zeros(len(coef) + 1)
    for k, c in enumerate(coef):
        if c == 0.0:
            continue
        if k > 0:
            out[k - 1] += c * k
        out[k + 1] -= c / 2.0
    return out


@dataclass(frozen=True)
class Frame:
    """A moving observation frame for one mode.

    Phonon frames travel at ``sigma * sqrt(c2) * alpha * n`` (optionally
    with the order-1/n effective sound-velocity correction); the energy
    mode does not move.
    """

    sigma: int
    velocity: float

    def __post_init__(self):
        if self.sigma not in (-1, 0, 1):
            raise ValueError("sigma must be -1, 0 or +1")
        if self.sigma != 0 and self.velocity * self.sigma <= 0:
            raise ValueError("phonon frame velocity must share the sign of sigma")

    @classmethod
    def for_mode(
        cls,
        sigma: int,
        cfg: ScalingConfig,
        pot: ScaledPotential,
        corrected: bool = False,
    ) -> "Frame":
        if sigma == 0:
            return cls(0, 0.0)
        v = sigma * math.sqrt(pot.c2) * cfg.alpha * cfg.n
        if corrected:
            v *= 1.0 + dv_constant(pot.c2, pot.c3, pot.c4) / cfg.n
        return cls(sigma, v)


@dataclass
class ModeArrays:
    """Mode fields of one chain snapshot plus their equilibrium means.

    Arrays have the same shape as the state (last axis is the lattice).
    """

    xi_plus: np.ndarray
    xi_minus: np.ndarray
    xi_zero: np.ndarray
    xi_tilde_plus: np.ndarray
    xi_tilde_minus: np.ndarray
    means: dict

    def centered(self, sigma: int, corrected: bool = False) -> np.ndarray:
        if corrected:
            if sigma == 1:
                return self.xi_tilde_plus - self.means["xi_tilde_plus"]
            if sigma == -1:
                return self.xi_tilde_minus - self.means["xi_tilde_minus"]
            raise ValueError("corrected modes exist for sigma = +/-1 only")
        if sigma == 1:
            return self.xi_plus - self.means["xi_plus"]
        if sigma == -1:
            return self.xi_minus - self.means["xi_minus"]
        if sigma == 0:
            return self.xi_zero - self.means["xi_zero"]
        raise ValueError("sigma must be -1, 0 or +1")


def equilibrium_means(pot: ScaledPotential, cfg: ScalingConfig) -> dict:
    """Quadrature means of r, V_eps(r), the modes and the energy.

    Centering with quadrature (not sample) means avoids the O(N^{-1/2})
    bias an empirical centering would inject into field statistics.
    """
    marg = GibbsMarginal(pot, cfg.beta, cfg.tau)
    mean_r = marg.expectation(lambda r: r)
    mean_v = marg.expectation(pot.value)
    mean_p = cfg.mean_momentum
    mean_p2 = 1.0 / cfg.beta + mean_p**2
    sqc2 = math.sqrt(pot.c2)
    mean_e = 0.5 * mean_p2 + mean_v
    u = energy_coupling(pot.c2, pot.c3)
    eps = pot.epsilon
    means = {
        "r": mean_r,
        "r2": marg.expectation(lambda r: r * r),
        "p": mean_p,
        "p2": mean_p2,
        "v": mean_v,
        "xi_plus": sqc2 * mean_r + mean_p,
        "xi_minus": sqc2 * mean_r - mean_p,
        "xi_zero": mean_e,
    }
    means["xi_tilde_plus"] = means["xi_plus"] + eps * u * mean_e
    means["xi_tilde_minus"] = means["xi_minus"] + eps * u * mean_e
    return means


def compute_modes(
    state: ChainState,
    pot: ScaledPotential,
    cfg: ScalingConfig,
    means: dict | None = None,
) -> ModeArrays:
    """Fill phonon, energy and corrected-mode arrays for one snapshot."""
    if means is None:
        means = equilibrium_means(pot, cfg)
    sqc2 = math.sqrt(pot.c2)
    r_next = np.roll(state.r, -1, axis=-1)
    xi_plus = sqc2 * r_next + state.p
    xi_minus = sqc2 * r_next - state.p
    e = 0.5 * state.p**2 + pot.value(state.r)
    coupling = pot.epsilon * energy_coupling(pot.c2, pot.c3)
    return ModeArrays(
        xi_plus=xi_plus,
        xi_minus=xi_minus,
        xi_zero=e,
        xi_tilde_plus=xi_plus + coupling * e,
        xi_tilde_minus=xi_minus + coupling * e,
        means=means,
    )


def _frame_arguments(n: int, lattice_len: int, shift: float) -> np.ndarray:
    return np.arange(lattice_len) / n + shift


def _check_window(
    phi: TestFunction, shift: float, n: int, lattice_len: int
) -> None:
    lo, hi = phi.shifted_support(shift)
    if lo < 0.0 or hi > (lattice_len - 1) / n:
        raise FrameWrapError(
            f"shifted support [{lo:.3g}, {hi:.3g}] exits the periodic box "
            f"[0, {(lattice_len - 1) / n:.3g}]"
        )


def fluctuation_field(
    modes: ModeArrays,
    sigma: int,
    phi: TestFunction,
    frame: Frame,
    t_macro: float,
    n: int,
    corrected: bool = False,
) -> float | np.ndarray:
    """Pair the centered mode with the moving-frame profile.

    Returns ``n^{-1/2} sum_j xibar_j phi(j/n + v t)``; scalar for a single
    chain, an (R,) array for an ensemble snapshot.
    """
    xibar = modes.centered(sigma, corrected)
    shift = frame.velocity * t_macro
    L = xibar.shape[-1]
    _check_window(phi, shift, n, L)
    weights = phi(_frame_arguments(n, L, shift))
    return (xibar @ weights) / math.sqrt(n)


def quadratic_field(
    modes: ModeArrays,
    sigma: int,
    phi: TestFunction,
    frame: Frame,
    t_macro: float,
    n: int,
    deriv: int = 1,
    corrected: bool = False,
) -> float | np.ndarray:
    """Nearest-neighbour quadratic field ``sum_j xibar_j xibar_{j+1} phi'(j/n + v t)``.

    No n^{-1/2} prefactor; deriv selects which derivative of the profile
    weights the sum (1 matches the drift term of the martingale
    decomposition, 0 the plain quadratic pairing).
    """
    xibar = modes.centered(sigma, corrected)
    shift = frame.velocity * t_macro
    L = xibar.shape[-1]
    _check_window(phi, shift, n, L)
    weights = phi(_frame_arguments(n, L, shift), deriv=deriv)
    return (xibar * np.roll(xibar, -1, axis=-1)) @ weights


def block_average(g: np.ndarray, ell: int, mean: float) -> np.ndarray:
    """Forward block average of the centered sequence, periodic wraparound.

    Entry j is the mean of ``g[j] - mean .. g[j + ell - 1] - mean``.
    """
    L = g.shape[-1]
    if ell < 1 or ell > L // 2:
        raise ValueError(f"ell={ell} outside 1..L/2")
    centered = g - mean
    if ell == 1:
        return centered.copy()
    acc = centered.copy()
    for i in range(1, ell):
        acc += np.roll(centered, -i, axis=-1)
    return acc / ell
