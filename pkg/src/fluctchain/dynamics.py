"""Chain evolution: symplectic Hamiltonian steps plus momentum-exchange noise.

The microscopic generator is ``alpha * (Hamiltonian flow) + exchange noise``
and experiments run it accelerated by n**a, i.e. a macroscopic horizon t
corresponds to micro-time n**a * t.  One macro substep is a Strang split:
half an exchange sweep, one velocity-Verlet step, half an exchange sweep.
Exchange events are Bernoulli-thinned per bond and substep; a swap is a
permutation of the momenta, so total momentum and kinetic energy are
conserved bit for bit.

All state arrays may carry a leading replica axis: every operation acts on
the last axis only, so a (R, L) ensemble evolves exactly like R separate
(L,) chains given the same per-replica random draws.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BlowUpError, ConfigError
from .potential import ScaledPotential

__all__ = [
    "ScalingConfig",
    "ChainState",
    "hamiltonian_step",
    "exchange_sweep",
    "evolve_macro",
    "conserved_totals",
    "sample_equilibrium_state",
    "save_checkpoint",
    "load_checkpoint",
]

MAX_EXCHANGE_PROB_STEP = 0.1  # threshold on gamma*dt/2 before internal subdivision


@dataclass(frozen=True)
class ScalingConfig:
    """All scalars of one experiment's scaling regime.

    epsilon = n**(-b_exp) controls the anharmonicity, n**a_exp the time
    acceleration.  Defaults (a_exp, b_exp) = (2, 1/2) are the regime where
    recentered phonon fluctuations follow a stochastic Burgers equation.
    """

    n: int
    lattice_len: int
    a_exp: float = 2.0
    b_exp: float = 0.5
    alpha: float = 1.0
    gamma: float = 1.0
    beta: float = 1.0
    tau: float = 0.0
    mean_momentum: float = 0.0
    dt_micro: float = 0.02

    def __post_init__(self):
        if self.n < 1 or self.lattice_len < 2:
            raise ConfigError("n and lattice_len must be positive")
        if self.lattice_len % self.n != 0:
            raise ConfigError(
                f"lattice_len={self.lattice_len} must be a multiple of n={self.n}"
            )
        if self.lattice_len % 2 != 0:
            raise ConfigError("lattice_len must be even (checkerboard exchange sweep)")
        for name in ("alpha", "gamma", "beta", "dt_micro"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def epsilon(self) -> float:
        return float(self.n) ** (-self.b_exp)

    @property
    def time_acceleration(self) -> float:
        return float(self.n) ** self.a_exp

    def validate_stability(self, pot: ScaledPotential) -> None:
        limit = 0.05 / math.sqrt(pot.c2)
        if self.dt_micro > limit * (1 + 1e-12):
            raise ConfigError(
                f"dt_micro={self.dt_micro} exceeds stability margin {limit:.4g}"
            )


@dataclass
class ChainState:
    """Stretch/momentum configuration plus the microscopic clock.

    r and p have shape (..., L); a leading axis indexes replicas.
    """

    r: np.ndarray
    p: np.ndarray
    t_micro: float = 0.0
    exchange_count: np.ndarray | int = 0

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.r.shape != self.p.shape:
            raise ValueError("r and p must have identical shapes")

    @property
    def lattice_len(self) -> int:
        return self.r.shape[-1]

    def copy(self) -> "ChainState":
        count = self.exchange_count
        if isinstance(count, np.ndarray):
            count = count.copy()
        return ChainState(self.r.copy(), self.p.copy(), self.t_micro, count)


def _check_finite(r: np.ndarray, p: np.ndarray) -> None:
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(p))):
        bad = np.argwhere(~(np.isfinite(r) & np.isfinite(p)))
        idx = tuple(bad[0]) if len(bad) else None
        raise BlowUpError(f"non-finite chain state at index {idx}", index=idx)


def _verlet(r, p, dt, alpha, vprime, force=None):
    """One velocity-Verlet step of the stretch/momentum flow (periodic).

    Returns updated arrays plus the force V_eps'(r) at the new positions
    so callers stepping repeatedly evaluate the potential once per step.
    """
    if force is None:
        force = vprime(r)
    half = 0.5 * dt * alpha
    p = p + half * (np.roll(force, -1, axis=-1) - force)
    r = r + dt * alpha * (p - np.roll(p, 1, axis=-1))
    force = vprime(r)
    p = p + half * (np.roll(force, -1, axis=-1) - force)
    return r, p, force


def hamiltonian_step(
    state: ChainState, dt: float, pot: ScaledPotential, alpha: float
) -> ChainState:
    """Advance the deterministic flow by dt with one velocity-Verlet step."""
    r, p, _ = _verlet(state.r, state.p, dt, alpha, pot.derivative)
    _check_finite(r, p)
    return ChainState(r, p, state.t_micro + dt, state.exchange_count)


def _apply_swaps(p: np.ndarray, fired: np.ndarray) -> np.ndarray:
    """Swap momenta across fired bonds, even-indexed bonds first.

    Within each parity class the bonds are disjoint, so the swaps commute
    and vectorize; applying the two classes in sequence is a permutation.
    """
    p = p.copy()
    left = np.arange(p.shape[-1])
    right = (left + 1) % p.shape[-1]
    for parity in (0, 1):
        bonds = left[parity::2]
        mask = fired[..., bonds]
        lo, hi = bonds, right[parity::2]
        pl = p[..., lo]
        ph = p[..., hi]
        p[..., lo] = np.where(mask, ph, pl)
        p[..., hi] = np.where(mask, pl, ph)
    return p


def _exchange_arrays(p, dt, gamma, uniforms):
    """Thinned exchange sweep on raw arrays; returns (p, fired count)."""
    prob = -np.expm1(-gamma * dt / 2.0)
    fired = uniforms < prob
    return _apply_swaps(p, fired), fired.sum(axis=-1)


def exchange_sweep(
    state: ChainState, dt: float, gamma: float, rng: np.random.Generator
) -> ChainState:
    """Fire each bond independently with probability 1 - exp(-gamma dt / 2).

    Subdivides internally when gamma*dt/2 exceeds the thinning threshold.
    """
    if gamma == 0.0 or dt == 0.0:
        return state.copy()
    pieces = max(1, math.ceil((gamma * dt / 2.0) / MAX_EXCHANGE_PROB_STEP))
    p = state.p
    count = state.exchange_count
    for _ in range(pieces):
        u = rng.random(p.shape)
        p, fired = _exchange_arrays(p, dt / pieces, gamma, u)
        count = count + fired
    return ChainState(state.r.copy(), p, state.t_micro, count)


def _exact_sum(a: np.ndarray):
    """Correctly rounded lattice sum; invariant under permutations of a."""
    if a.ndim == 1:
        return math.fsum(a)
    return np.apply_along_axis(math.fsum, -1, a)


def conserved_totals(state: ChainState, pot: ScaledPotential):
    """Return (sum r, sum p, sum e) with e_j = p_j^2/2 + V_eps(r_j).

    Sums are exactly rounded, so momentum-exchange sweeps (which permute
    the momenta) leave sum p and the kinetic part bit-identical.
    """
    e = 0.5 * state.p**2 + pot.value(state.r)
    return (_exact_sum(state.r), _exact_sum(state.p), _exact_sum(e))


def _strang_steps(r, p, count, n_steps, dt, cfg, pot, rng):
    """Run n_steps of half-sweep / Verlet / half-sweep on raw arrays."""
    vprime = pot.derivative
    force = None
    alpha, gamma = cfg.alpha, cfg.gamma
    half_pieces = max(1, math.ceil((gamma * dt / 4.0) / MAX_EXCHANGE_PROB_STEP))
    for _ in range(n_steps):
        for _ in range(half_pieces):
            u = rng.random(p.shape)
            p, fired = _exchange_arrays(p, dt / (2 * half_pieces), gamma, u)
            count = count + fired
        r, p, force = _verlet(r, p, dt, alpha, vprime, force)
        for _ in range(half_pieces):
            u = rng.random(p.shape)
            p, fired = _exchange_arrays(p, dt / (2 * half_pieces), gamma, u)
            count = count + fired
    _check_finite(r, p)
    return r, p, count


def evolve_macro(
    state: ChainState,
    t_macro: float,
    cfg: ScalingConfig,
    pot: ScaledPotential,
    rng: np.random.Generator,
    hooks: Sequence[tuple[float, Callable[[ChainState, float], None]]] = (),
) -> ChainState:
    """Advance the accelerated dynamics by a macroscopic time span.

    hooks is a sorted sequence of (macro_time, callback); each callback
    receives a read-only snapshot at exactly its requested time (substep
    lengths are adjusted so hook times are hit on a substep boundary).
    """
    if t_macro < 0:
        raise ValueError("t_macro must be >= 0")
    cfg.validate_stability(pot)
    times = [t for t, _ in hooks]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("hooks must be sorted by time")
    accel = cfg.time_acceleration
    r, p = state.r.copy(), state.p.copy()
    count = state.exchange_count
    t0 = state.t_micro
    elapsed = 0.0  # macro time since entry

    def run_until(target_macro):
        nonlocal r, p, count, elapsed
        span = (target_macro - elapsed) * accel
        if span <= 1e-15 * max(1.0, abs(t0)):
            elapsed = target_macro
            return
        n_steps = max(1, math.ceil(span / cfg.dt_micro))
        dt = span / n_steps
        r, p, count = _strang_steps(r, p, count, n_steps, dt, cfg, pot, rng)
        elapsed = target_macro

    for t_hook, callback in hooks:
        if t_hook > t_macro + 1e-15:
            break
        run_until(t_hook)
        callback(ChainState(r, p, t0 + elapsed * accel, count), t_hook)
    run_until(t_macro)
    return ChainState(r, p, t0 + t_macro * accel, count)


def sample_equilibrium_state(
    cfg: ScalingConfig,
    pot: ScaledPotential,
    rng: np.random.Generator,
    replicas: Optional[int] = None,
) -> ChainState:
    """Draw a product-measure equilibrium state (stretches first, then momenta)."""
    from .potential import GibbsSampler

    shape = (cfg.lattice_len,) if replicas is None else (replicas, cfg.lattice_len)
    sampler = GibbsSampler(pot, cfg.beta, cfg.tau)
    r = sampler.sample(rng, int(np.prod(shape))).reshape(shape)
    p = rng.normal(cfg.mean_momentum, 1.0 / math.sqrt(cfg.beta), size=shape)
    count = 0 if replicas is None else np.zeros(replicas, dtype=np.int64)
    return ChainState(r, p, 0.0, count)


# ---------------------------------------------------------------------------
# Checkpoints: fixed little-endian byte layout for restartability
# ---------------------------------------------------------------------------

_CHECKPOINT_MAGIC = b"FLCHKPT1"


def config_hash(cfg: ScalingConfig) -> bytes:
    text = repr(sorted(cfg.__dict__.items())).encode()
    return hashlib.sha256(text).digest()


def save_checkpoint(path, state: ChainState, cfg: ScalingConfig) -> None:
    """Write magic, config hash, clock, exchange count, then r and p as <f8."""
    if state.r.ndim != 1:
        raise ValueError("checkpoints store a single chain, not an ensemble")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(config_hash(cfg))
        fh.write(struct.pack("<dqq", state.t_micro, int(state.exchange_count), state.lattice_len))
        fh.write(state.r.astype("<f8").tobytes())
        fh.write(state.p.astype("<f8").tobytes())


def load_checkpoint(path, cfg: ScalingConfig) -> ChainState:
    with open(path, "rb") as fh:
        if fh.read(8) != _CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not a chain checkpoint")
        if fh.read(32) != config_hash(cfg):
            raise ConfigError(f"{path}: checkpoint written under a different config")
        t_micro, count, length = struct.unpack("<dqq", fh.read(24))
        r = np.frombuffer(fh.read(8 * length), dtype="<f8").copy()
        p = np.frombuffer(fh.read(8 * length), dtype="<f8").copy()
    return ChainState(r, p, t_micro, count)
