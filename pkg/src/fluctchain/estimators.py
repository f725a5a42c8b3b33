"""Ensemble statistics for the chain: quadratic variation, equipartition,
second-order Boltzmann-Gibbs discrepancy, wrong-frame integrals, bracket
cross terms and space-time correlations.

All estimators share one pattern: draw an equilibrium ensemble, evolve it
once, evaluate named integrands on uniformly spaced macro-time snapshots
and trapezoid-integrate per replica.  Reductions over replicas use a fixed
summation order so a given seed reproduces bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ChainState, ScalingConfig, evolve_macro, sample_equilibrium_state
from .errors import ResolutionError
from .observables import (
    Frame,
    TestFunction,
    block_average,
    compute_modes,
    equilibrium_means,
)
from .potential import ScaledPotential
from .rng import stream

__all__ = [
    "CorrelationSeries",
    "TimeIntegralEstimate",
    "run_time_integrals",
    "qv_estimate",
    "qv_limit",
    "qv_integrand",
    "equipartition_stat",
    "equipartition_integrand",
    "bg2_discrepancy",
    "bg2_integrand",
    "bg2_bound",
    "wrong_frame_integral",
    "wrong_frame_integrand",
    "martingale_cross_covariance",
    "spacetime_correlation",
    "frame_site_shift",
]


@dataclass
class CorrelationSeries:
    """Mean and standard error of a correlation on a grid of lags or times."""

    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    replicas: int

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        self.mean = np.asarray(self.mean, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.replicas < 2:
            raise ValueError("need at least 2 replicas for error bars")
        if not self.grid.shape == self.mean.shape == self.stderr.shape:
            raise ValueError("grid, mean and stderr must share a shape")


@dataclass
class TimeIntegralEstimate:
    """Ensemble summary of one time-integrated functional."""

    value: float
    variance: float
    horizon: float
    label: str
    replicas: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be >= 0")

    @property
    def stderr(self) -> float:
        if self.replicas < 2:
            return math.nan
        return math.sqrt(self.variance / self.replicas)


# ---------------------------------------------------------------------------
# Shared trajectory runner
# ---------------------------------------------------------------------------


def snapshot_spacing(phi: TestFunction, velocity: float, base: float = 1e-2) -> float:
    """Snapshot spacing that resolves the frame sweep across the profile."""
    scale = phi.support_radius / 9.0
    if velocity == 0.0:
        return base
    return min(base, scale / (10.0 * abs(velocity)))


def run_time_integrals(
    cfg: ScalingConfig,
    pot: ScaledPotential,
    seed: int,
    replicas: int,
    t_final: float,
    integrands: dict,
    dt_snap: float = 1e-2,
    initial_state: ChainState | None = None,
):
    """Trapezoid time integrals of named snapshot functionals, per replica.

    Each integrand is called as f(modes, state, t) and must return an (R,)
    array.  Returns (integrals dict, final state).  One trajectory serves
    every integrand, which is what makes multi-statistic sweeps affordable.
    """
    if dt_snap <= 0 or t_final <= 0:
        raise ValueError("need positive horizon and snapshot spacing")
    n_snap = math.ceil(t_final / dt_snap)
    times = np.linspace(0.0, t_final, n_snap + 1)
    if initial_state is None:
        state = sample_equilibrium_state(cfg, pot, stream(seed, 0), replicas)
    else:
        state = initial_state.copy()
    means = equilibrium_means(pot, cfg)
    acc = {label: np.zeros(replicas) for label in integrands}
    prev = {}
    prev_t = [0.0]

    def on_snapshot(snap, t):
        modes = compute_modes(snap, pot, cfg, means)
        dt = t - prev_t[0]
        for label, fn in integrands.items():
            vals = np.asarray(fn(modes, snap, t), dtype=float)
            if label in prev:
                acc[label] += 0.5 * dt * (prev[label] + vals)
            prev[label] = vals
        prev_t[0] = t

    hooks = [(t, on_snapshot) for t in times]
    final = evolve_macro(state, t_final, cfg, pot, stream(seed, 1), hooks)
    return acc, final


def _summary(per_replica: np.ndarray, t: float, label: str) -> TimeIntegralEstimate:
    return TimeIntegralEstimate(
        value=float(np.mean(per_replica)),
        variance=float(np.var(per_replica, ddof=1)),
        horizon=t,
        label=label,
        replicas=per_replica.size,
    )


def _grid(cfg: ScalingConfig) -> np.ndarray:
    return np.arange(cfg.lattice_len) / cfg.n


# ---------------------------------------------------------------------------
# Quadratic variation of the martingale part
# ---------------------------------------------------------------------------


def qv_limit(phi: TestFunction, cfg: ScalingConfig, t: float) -> float:
    """Deterministic limit of the bracket: gamma t / beta * |phi'|^2."""
    return cfg.gamma * t / cfg.beta * phi.l2_norm_sq(1)


def qv_integrand(cfg: ScalingConfig, phi: TestFunction, frame: Frame):
    """Bracket density (gamma / 2n) sum_j (p_j - p_{j+1})^2 phi'(j/n + vs)^2."""
    grid = _grid(cfg)

    def integrand(modes, snap, t):
        dp = snap.p - np.roll(snap.p, -1, axis=-1)
        w = phi(grid + frame.velocity * t, deriv=1) ** 2
        return cfg.gamma / (2.0 * cfg.n) * (dp**2 @ w)

    return integrand


def qv_estimate(
    cfg: ScalingConfig,
    pot: ScaledPotential,
    phi: TestFunction,
    frame: Frame,
    t_final: float,
    replicas: int,
    seed: int,
    dt_snap: float | None = None,
) -> TimeIntegralEstimate:
    """Time integral of the bracket density of the noise martingale."""
    if frame.sigma == 0:
        raise ValueError("the bracket estimator tracks a phonon frame")
    if dt_snap is None:
        dt_snap = snapshot_spacing(phi, frame.velocity)
    if t_final / dt_snap < 10.0 * t_final:  # at least 10 snapshots per unit time
        raise ResolutionError(f"dt_snap={dt_snap} too coarse for the bracket integral")
    integrand = qv_integrand(cfg, phi, frame)
    acc, _ = run_time_integrals(cfg, pot, seed, replicas, t_final, {"qv": integrand}, dt_snap)
    return _summary(acc["qv"], t_final, "quadratic_variation")


# ---------------------------------------------------------------------------
# Equipartition of energy
# ---------------------------------------------------------------------------


def equipartition_stat(
    cfg: ScalingConfig,
    pot: ScaledPotential,
    phi: TestFunction,
    frame: Frame,
    t_final: float,
    replicas: int,
    seed: int,
    dt_snap: float | None = None,
) -> TimeIntegralEstimate:
    """Second moment of int_0^t sum_j (c2 rbar^2 - pbar^2) phi'(j/n + vs) ds.

    The centered squares use quadrature means; the reported value is the
    ensemble mean of the squared integral, whose decay with n witnesses
    equipartition between stretch and momentum energy in the sound frame.
    """
    if dt_snap is None:
        dt_snap = snapshot_spacing(phi, frame.velocity)
    integrand = equipartition_integrand(cfg, pot, phi, frame)
    acc, _ = run_time_integrals(cfg, pot, seed, replicas, t_final, {"eq": integrand}, dt_snap)
    return _summary(acc["eq"] ** 2, t_final, "equipartition_sq")


def equipartition_integrand(cfg: ScalingConfig, pot, phi: TestFunction, frame: Frame):
    """Summand sum_j (c2 rbar^2_j - pbar^2_j) phi'(j/n + vs)."""
    grid = _grid(cfg)

    def integrand(modes, snap, t):
        m = modes.means
        g = pot.c2 * (snap.r**2 - m["r2"]) - (snap.p**2 - m["p2"])
        return g @ phi(grid + frame.velocity * t, deriv=1)

    return integrand


# ---------------------------------------------------------------------------
# Second-order Boltzmann-Gibbs discrepancy
# ---------------------------------------------------------------------------


def bg2_integrand(cfg, pot, phi, frame, ell):
    """Summand sum_j (pbar_j rbar_{j+1} - ->p^ell_j ->r^ell_j) phi(j/n + vs)."""
    grid = _grid(cfg)

    def integrand(modes, snap, t):
        m = modes.means
        pbar = snap.p - m["p"]
        rbar = snap.r - m["r"]
        local = pbar * np.roll(rbar, -1, axis=-1)
        blocks = block_average(pbar, ell, 0.0) * block_average(rbar, ell, 0.0)
        return (local - blocks) @ phi(grid + frame.velocity * t)

    return integrand


def bg2_discrepancy(
    cfg: ScalingConfig,
    pot: ScaledPotential,
    ells,
    phi: TestFunction,
    frame: Frame,
    t_final: float,
    replicas: int,
    seed: int,
    dt_snap: float | None = None,
) -> dict:
    """Block-replacement discrepancy of the quadratic field, per block size.

    For each block size ell, reports the ensemble second moment of

        int_0^t sum_j (pbar_j rbar_{j+1} - ->p^ell_j ->r^ell_j)(s) phi(j/n + vs) ds

    where the arrows are forward block averages.  ``ells`` may be one
    integer or a sequence; all block sizes share one trajectory.
    """
    scalar = np.isscalar(ells)
    ell_list = [int(ells)] if scalar else [int(e) for e in ells]
    for e in ell_list:
        if not 1 <= e <= cfg.lattice_len // 4:
            raise ValueError(f"block size {e} outside 1..L/4")
    if dt_snap is None:
        dt_snap = snapshot_spacing(phi, frame.velocity)
    integrands = {
        f"bg2_{e}": bg2_integrand(cfg, pot, phi, frame, e) for e in ell_list
    }
    acc, _ = run_time_integrals(cfg, pot, seed, replicas, t_final, integrands, dt_snap)
    out = {
        e: _summary(acc[f"bg2_{e}"] ** 2, t_final, f"bg2_sq_ell{e}") for e in ell_list
    }
    return out[ell_list[0]] if scalar else out


def bg2_bound(c: float, t: float, ell: int, n: int, phi: TestFunction) -> float:
    """Scaling bound C T (ell/n + 1/ell) |phi|^2 + C T^2/n |phi'|^2."""
    return c * t * (ell / n + 1.0 / ell) * phi.l2_norm_sq(0) + c * t**2 / n * phi.l2_norm_sq(1)


# ---------------------------------------------------------------------------
# Wrong-frame (Riemann-Lebesgue) integrals
# ---------------------------------------------------------------------------


def wrong_frame_integral(
    cfg: ScalingConfig,
    pot: ScaledPotential,
    sigma: int,
    wrong_velocity: float,
    phi: TestFunction,
    t_final: float,
    replicas: int,
    seed: int,
    kind: str = "linear",
    dt_snap: float | None = None,
) -> TimeIntegralEstimate:
    """Mean absolute time integral of a field observed at a chosen velocity.

    kind selects the summand: "linear" is the fluctuation field itself,
    "quadratic" is sum_j xibar^sigma_j xibar^sigma_{j+1} phi and "cross"
    is sum_j xibar^{-sigma}_j xibar^sigma_{j+1} phi.  With a frame
    velocity far from the mode's own, the oscillatory sweep makes the
    integral vanish as n grows; at the correct velocity it does not.
    """
    if dt_snap is None:
        dt_snap = snapshot_spacing(phi, wrong_velocity)
    integrand = wrong_frame_integrand(cfg, sigma, wrong_velocity, phi, kind)
    acc, _ = run_time_integrals(cfg, pot, seed, replicas, t_final, {"wf": integrand}, dt_snap)
    return _summary(np.abs(acc["wf"]), t_final, f"wrong_frame_{kind}")


def wrong_frame_integrand(
    cfg: ScalingConfig, sigma: int, velocity: float, phi: TestFunction, kind: str
):
    """Snapshot value of one wrong-frame summand; see wrong_frame_integral."""
    if kind not in ("linear", "quadratic", "cross"):
        raise ValueError(f"unknown integrand kind {kind!r}")
    grid = _grid(cfg)

    def integrand(modes, snap, t):
        shift = velocity * t
        if kind == "linear":
            xibar = modes.centered(sigma)
            return (xibar @ phi(grid + shift)) / math.sqrt(cfg.n)
        a = modes.centered(-sigma if kind == "cross" else sigma)
        b = np.roll(modes.centered(sigma), -1, axis=-1)
        return (a * b) @ phi(grid + shift)

    return integrand


# ---------------------------------------------------------------------------
# Martingale bracket: cross and diagonal terms
# ---------------------------------------------------------------------------


def martingale_cross_covariance(
    cfg: ScalingConfig,
    pot: ScaledPotential,
    phi_plus: TestFunction,
    phi_minus: TestFunction,
    t_final: float,
    replicas: int,
    seed: int,
    which: str = "cross",
    dt_snap: float | None = None,
) -> TimeIntegralEstimate:
    """Time-averaged bracket term coupling (or not) the two phonon noises.

    which = "cross" estimates (1/n) sum_j dxi+_j dxi-_j grad(phi+) grad(phi-)
    with dxi_j = xi_j - xi_{j+1} and each profile tracked in its own sound
    frame; "diag_plus"/"diag_minus" estimate (1/2n) sum_j dxi^2 grad(phi)^2.
    The cross term vanishes with n while the diagonal terms approach
    2/beta |phi'|^2, which is why the limiting noises are independent.
    """
    if which not in ("cross", "diag_plus", "diag_minus"):
        raise ValueError(f"unknown bracket term {which!r}")
    fplus = Frame.for_mode(1, cfg, pot)
    fminus = Frame.for_mode(-1, cfg, pot)
    vmax = max(abs(fplus.velocity), abs(fminus.velocity))
    if dt_snap is None:
        dt_snap = snapshot_spacing(phi_plus, vmax)
    grid = _grid(cfg)

    def grad_profile(phi, frame, t):
        x = grid + frame.velocity * t
        return cfg.n * (phi(x + 1.0 / cfg.n) - phi(x))

    def integrand(modes, snap, t):
        if which == "cross":
            da = modes.xi_plus - np.roll(modes.xi_plus, -1, axis=-1)
            db = modes.xi_minus - np.roll(modes.xi_minus, -1, axis=-1)
            w = grad_profile(phi_plus, fplus, t) * grad_profile(phi_minus, fminus, t)
            return (da * db) @ w / cfg.n
        sigma = 1 if which == "diag_plus" else -1
        xi = modes.xi_plus if sigma == 1 else modes.xi_minus
        d = xi - np.roll(xi, -1, axis=-1)
        phi_ = phi_plus if sigma == 1 else phi_minus
        frame_ = fplus if sigma == 1 else fminus
        return (d**2) @ (grad_profile(phi_, frame_, t) ** 2) / (2.0 * cfg.n)

    acc, _ = run_time_integrals(cfg, pot, seed, replicas, t_final, {"mb": integrand}, dt_snap)
    # time average of the bracket density rather than its integral
    per_replica = acc["mb"] / t_final
    return _summary(per_replica, t_final, f"bracket_{which}")


# ---------------------------------------------------------------------------
# Space-time correlations with frame recentering
# ---------------------------------------------------------------------------


def frame_site_shift(sigma: int, cfg: ScalingConfig, pot: ScaledPotential, t: float) -> int:
    """Nearest-integer lattice displacement of the sigma frame after time t.

    The sigma mode transports toward decreasing j at sqrt(c2) alpha n^2
    sites per unit macro time (for sigma = +1).
    """
    return int(round(-sigma * math.sqrt(pot.c2) * cfg.alpha * cfg.n**2 * t))


def _circular_correlation(later: np.ndarray, initial: np.ndarray) -> np.ndarray:
    """c[d] = (1/L) sum_j later[j + d] initial[j], periodic, per replica."""
    L = later.shape[-1]
    f = np.fft.rfft(later, axis=-1) * np.conj(np.fft.rfft(initial, axis=-1))
    return np.fft.irfft(f, n=L, axis=-1) / L


def spacetime_correlation(
    cfg: ScalingConfig,
    pot: ScaledPotential,
    sigma: int,
    lags,
    times,
    replicas: int,
    seed: int,
    corrected: bool = False,
    bootstrap: int = 200,
) -> dict:
    """Recentered correlation S(j, t) = E[xibar_{j + shift(t)}(t) xibar_0(0)].

    The recentering shift is the nearest-integer frame displacement; the
    estimate averages over all lattice origins and replicas, with errors
    from a replica bootstrap.  Returns {t: CorrelationSeries over lags}.
    """
    lags = np.asarray(lags, dtype=int)
    if np.any(np.abs(lags) > cfg.lattice_len // 2):
        raise ValueError("lags beyond L/2 alias under periodicity")
    times = sorted(float(t) for t in times)
    if times[0] < 0:
        raise ValueError("times must be >= 0")
    state = sample_equilibrium_state(cfg, pot, stream(seed, 0), replicas)
    means = equilibrium_means(pot, cfg)
    base = compute_modes(state, pot, cfg, means).centered(sigma, corrected)
    results = {}
    boot_rng = stream(seed, 2)

    def record(snap, t):
        now = compute_modes(snap, pot, cfg, means).centered(sigma, corrected)
        corr = _circular_correlation(now, base)  # (R, L)
        shift = frame_site_shift(sigma, cfg, pot, t)
        idx = np.mod(lags + shift, cfg.lattice_len)
        per_rep = corr[:, idx]  # (R, n_lags)
        mean = per_rep.mean(axis=0)
        picks = boot_rng.integers(0, replicas, size=(bootstrap, replicas))
        boots = per_rep[picks].mean(axis=1)  # (B, n_lags)
        results[t] = CorrelationSeries(
            grid=lags.copy(), mean=mean, stderr=boots.std(axis=0, ddof=1),
            replicas=replicas,
        )

    hooks = [(t, record) for t in times]
    evolve_macro(state, times[-1], cfg, pot, stream(seed, 1), hooks)
    return results
