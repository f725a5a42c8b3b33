"""Reference integrator for the limiting stochastic Burgers equation.

The limit equation on the circle is

    du = [ D u'' - Lambda (u^2)' + c u' ] dx-weak + noise_amp dW'(x, t)

with D = gamma/4, Lambda = sigma alpha c3 / (8 c2^2), a Galilean drift c
and conservative space-time white noise of amplitude sqrt(gamma/beta).
The discretisation keeps the lattice Gibbs picture: cell averages u_j on
a grid of spacing dx, second differences for diffusion, a conservative
three-point flux for the quadratic term and bond-noise differences so the
stationary measure of the linear part is exactly iid N(0, 2/(beta dx)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError

__all__ = [
    "SbeParams",
    "SbeField",
    "sbe_params_from_chain",
    "sbe_init_stationary",
    "sbe_step",
    "sbe_evolve",
    "ou_covariance",
    "ou_smoothed_pairing",
]


@dataclass(frozen=True)
class SbeParams:
    """Coefficients and grid for the Burgers integrator.

    The grid covers a circle of length ``cells * dx``.  ``drift`` is the
    constant transport speed left over after moving to the sound frame.
    """

    diffusion: float
    coupling: float
    noise_amp: float
    cells: int
    dx: float
    drift: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if self.diffusion <= 0 or self.dx <= 0 or self.cells < 8 or self.beta <= 0:
            raise ConfigError("need diffusion > 0, dx > 0, cells >= 8, beta > 0")
        if self.noise_amp < 0:
            raise ConfigError("noise amplitude must be >= 0")

    @property
    def length(self) -> float:
        return self.cells * self.dx

    def max_stable_dt(self) -> float:
        """Diffusive stability bound for the explicit scheme."""
        return 0.25 * self.dx**2 / self.diffusion

    def check_dt(self, dt: float) -> None:
        if dt <= 0 or dt > self.max_stable_dt():
            raise ConfigError(
                f"dt={dt:.3g} violates the diffusive bound {self.max_stable_dt():.3g}"
            )


def sbe_params_from_chain(
    sigma: int,
    alpha: float,
    gamma: float,
    beta: float,
    c2: float,
    c3: float,
    cells: int,
    dx: float,
    drift: float = 0.0,
) -> SbeParams:
    """Map chain parameters to the limit-equation coefficients."""
    if sigma not in (-1, 1):
        raise ConfigError("phonon branch sigma must be +/-1")
    return SbeParams(
        diffusion=gamma / 4.0,
        coupling=sigma * alpha * c3 / (8.0 * c2**2),
        noise_amp=math.sqrt(gamma / beta),
        cells=cells,
        dx=dx,
        drift=drift,
        beta=beta,
    )


@dataclass
class SbeField:
    u: np.ndarray
    t: float = 0.0

    def copy(self) -> "SbeField":
        return SbeField(self.u.copy(), self.t)


def sbe_init_stationary(
    params: SbeParams, rng: np.random.Generator, replicas: int | None = None
) -> SbeField:
    """Draw iid cell Gaussians with the stationary variance 2/(beta dx)."""
    shape = (params.cells,) if replicas is None else (replicas, params.cells)
    scale = math.sqrt(2.0 / (params.beta * params.dx))
    return SbeField(rng.normal(0.0, scale, size=shape), 0.0)


def _flux(u: np.ndarray) -> np.ndarray:
    """Conservative three-point average of u^2 on bond (j, j+1).

    The form (u_j^2 + u_j u_{j+1} + u_{j+1}^2)/3 keeps both sum(u) and
    sum(u^2) conserved by the deterministic quadratic term.
    """
    un = np.roll(u, -1, axis=-1)
    return (u * u + u * un + un * un) / 3.0


def sbe_step(
    field: SbeField, params: SbeParams, dt: float, rng: np.random.Generator
) -> SbeField:
    """One explicit Euler-Maruyama step; mutates and returns the field."""
    params.check_dt(dt)
    u = field.u
    dx = params.dx
    up = np.roll(u, -1, axis=-1)
    um = np.roll(u, 1, axis=-1)
    lap = (up - 2.0 * u + um) / dx**2
    flux = _flux(u)
    grad_flux = (flux - np.roll(flux, 1, axis=-1)) / dx
    grad_u = (up - um) / (2.0 * dx)
    # bond noise: dW on each bond, cell j gets (dW_j - dW_{j-1}) / dx,
    # with Var(dW) = dt / dx so the white-noise pairing is normalised
    dw = rng.normal(0.0, math.sqrt(dt / dx), size=u.shape)
    noise = (dw - np.roll(dw, 1, axis=-1)) / dx
    u += dt * (params.diffusion * lap - params.coupling * grad_flux + params.drift * grad_u)
    u += params.noise_amp * noise
    if not np.all(np.isfinite(u)):
        raise NumericError(f"Burgers field blew up at t={field.t:.4g}")
    field.t += dt
    return field


def sbe_evolve(
    field: SbeField,
    params: SbeParams,
    t_final: float,
    dt: float,
    rng: np.random.Generator,
    hooks=None,
) -> SbeField:
    """March to t_final with fixed dt, calling hooks at requested times.

    ``hooks`` is an iterable of (time, callback); each callback receives
    the field at the first step boundary at or past its time.
    """
    pending = sorted(hooks or [], key=lambda h: h[0])
    while field.t < t_final - 1e-12:
        step = min(dt, t_final - field.t)
        sbe_step(field, params, step, rng)
        while pending and field.t >= pending[0][0] - 1e-12:
            pending.pop(0)[1](field)
    for _, cb in pending:
        cb(field)
    return field


# ---------------------------------------------------------------------------
# Harmonic-limit covariance: Ornstein-Uhlenbeck heat kernel
# ---------------------------------------------------------------------------


def ou_covariance(x, t: float, beta: float, gamma: float):
    """Space-time covariance of the harmonic (Lambda = 0) limit field.

    Cov(u(x, t) u(0, 0)) = (2/beta) * heat kernel with variance gamma t / 2.
    At t = 0 this degenerates to a delta; require t > 0.
    """
    if t <= 0:
        raise ValueError("covariance kernel needs t > 0")
    var = gamma * t / 2.0
    x = np.asarray(x, dtype=float)
    return (2.0 / beta) * np.exp(-(x**2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def ou_smoothed_pairing(
    phi, psi, t: float, beta: float, gamma: float, span: float = 40.0, points: int = 4001
):
    """E[u_t(phi) u_0(psi)] for the harmonic limit by double quadrature.

    Computed as (2/beta) <phi, G_{gamma t / 2} * psi> on a symmetric grid
    wide enough to cover both supports.
    """
    x = np.linspace(-span / 2.0, span / 2.0, points)
    dx = x[1] - x[0]
    if t == 0.0:
        return (2.0 / beta) * np.trapezoid(phi(x) * psi(x), x)
    diffs = x[:, None] - x[None, :]
    kern = ou_covariance(diffs, t, beta, gamma)
    return float(phi(x) @ kern @ psi(x)) * dx * dx
