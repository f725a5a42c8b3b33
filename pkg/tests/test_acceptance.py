"""Quantitative acceptance suite.

Each test prints one summary line; the heavy trend tests (equipartition,
block replacement, wrong-frame decay) share a single trajectory ensemble
per chain size through module-scoped fixtures.  Runtimes range from
instant to tens of minutes for the n=64 ensemble.
"""

import math

import numpy as np
import pytest

from fluctchain.dynamics import (
    ChainState,
    ScalingConfig,
    conserved_totals,
    evolve_macro,
    exchange_sweep,
    hamiltonian_step,
    sample_equilibrium_state,
)
from fluctchain.estimators import (
    bg2_bound,
    bg2_integrand,
    equipartition_integrand,
    qv_estimate,
    qv_limit,
    run_time_integrals,
    wrong_frame_integrand,
)
from fluctchain.observables import (
    Frame,
    TestFunction as profile_fn,
    compute_modes,
    equilibrium_means,
    fluctuation_field,
)
from fluctchain.potential import (
    ScaledPotential,
    dv_constant,
    fput,
    gibbs_moments,
    harmonic,
    toda,
)
from fluctchain.rng import stream
from fluctchain.sbe import (
    ou_smoothed_pairing,
    sbe_evolve,
    sbe_init_stationary,
    sbe_params_from_chain,
)


def report(capsys, num, name, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def decaying(means, errs):
    """Ordinal decay verdict: strictly falling points, separated 1-sigma bands."""
    strict = all(a > b for a, b in zip(means, means[1:]))
    separated = means[0] - errs[0] > means[-1] + errs[-1]
    return strict and separated


def mean_err(values):
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def toda_chain(cfg):
    return ScaledPotential(base=toda(1.0), epsilon=cfg.epsilon)


# ---------------------------------------------------------------------------
# Shared trajectory ensembles for the trend criteria (5, 6, 7)
# ---------------------------------------------------------------------------

TREND_NS = (16, 32, 64)
TREND_REPLICAS = 160
TREND_T = 0.1
TREND_BOX = 32  # macroscopic box side, so lattice_len = 32 n
BG2_ELLS = (1, 2, 4, 8, 16, 32)
TREND_PHI = profile_fn("gaussian", center=16.0, width=1.0)


@pytest.fixture(scope="module")
def trend_runs():
    out = {}
    for n in TREND_NS:
        cfg = ScalingConfig(n=n, lattice_len=TREND_BOX * n)
        pot = toda_chain(cfg)
        fplus = Frame.for_mode(1, cfg, pot)
        fminus = Frame.for_mode(-1, cfg, pot)
        integrands = {
            "eq": equipartition_integrand(cfg, pot, TREND_PHI, fplus),
            "wf_linear": wrong_frame_integrand(
                cfg, 1, fminus.velocity, TREND_PHI, "linear"
            ),
            "wf_quadratic": wrong_frame_integrand(
                cfg, 1, fminus.velocity, TREND_PHI, "quadratic"
            ),
            "wf_cross": wrong_frame_integrand(cfg, 1, 0.0, TREND_PHI, "cross"),
            "ctrl_linear": wrong_frame_integrand(
                cfg, 1, fplus.velocity, TREND_PHI, "linear"
            ),
        }
        if n in (32, 64):
            for ell in BG2_ELLS:
                integrands[f"bg2_{ell}"] = bg2_integrand(
                    cfg, pot, TREND_PHI, fplus, ell
                )
        # snapshot spacing tracks the fastest sweep scale 1/n^2, so the
        # trapezoid error shrinks at the same rate as the signal
        acc, _ = run_time_integrals(
            cfg, pot, seed=101, replicas=TREND_REPLICAS, t_final=TREND_T,
            integrands=integrands, dt_snap=0.25 / n**2,
        )
        out[n] = acc
    return out


# ---------------------------------------------------------------------------
# 1. Exact conservation
# ---------------------------------------------------------------------------


def test_criterion_01_exact_conservation(capsys):
    cfg = ScalingConfig(n=8, lattice_len=256)
    pot = toda_chain(cfg)
    state = sample_equilibrium_state(cfg, pot, stream(1, 0))

    swapped = exchange_sweep(state, 2.0, cfg.gamma, stream(1, 1))
    assert int(swapped.exchange_count) > 0
    exchange_ok = (
        math.fsum(state.p) == math.fsum(swapped.p)
        and math.fsum(state.p**2) == math.fsum(swapped.p**2)
    )

    drift_r = drift_p = 0.0
    cur = state
    tot_r, tot_p, _ = conserved_totals(cur, pot)
    for _ in range(200):
        cur = hamiltonian_step(cur, 0.01, pot, cfg.alpha)
        new_r, new_p, _ = conserved_totals(cur, pot)
        drift_r = max(drift_r, abs(new_r - tot_r))
        drift_p = max(drift_p, abs(new_p - tot_p))
        tot_r, tot_p = new_r, new_p
    sums_ok = max(drift_r, drift_p) < 1e-12 * cfg.lattice_len * 200

    L = 256
    hpot = ScaledPotential(base=harmonic(1.0), epsilon=0.5)
    j = np.arange(L)
    mode = ChainState(np.cos(2.0 * np.pi * j / L), np.zeros(L))
    e0 = conserved_totals(mode, hpot)[2]
    for _ in range(100):
        for _ in range(100):
            mode = hamiltonian_step(mode, 0.01, hpot, 1.0)
    e1 = conserved_totals(mode, hpot)[2]
    energy_drift = abs(e1 - e0) / abs(e0)
    energy_ok = energy_drift < 1e-6

    report(
        capsys, 1, "exact conservation",
        exchange_ok and sums_ok and energy_ok,
        f"exchange bit-identical={exchange_ok}, "
        f"max per-step |d sum r|,|d sum p|={max(drift_r, drift_p):.2e}, "
        f"harmonic energy drift={energy_drift:.2e}",
    )


# ---------------------------------------------------------------------------
# 2. Gibbs stationarity under the accelerated dynamics
# ---------------------------------------------------------------------------


def test_criterion_02_gibbs_stationarity(capsys):
    cfg = ScalingConfig(n=32, lattice_len=256, beta=1.0)
    pot = toda_chain(cfg)
    state = sample_equilibrium_state(cfg, pot, stream(7, 0), 2000)
    final = evolve_macro(state, 0.1, cfg, pot, stream(7, 1))

    _, q_r, q_r2, q_vp = gibbs_moments(cfg.beta, cfg.tau, pot)
    samples = {
        "E[p]": (final.p, 0.0),
        "E[p^2]": (final.p**2, 1.0 / cfg.beta),
        "E[r]": (final.r, q_r),
        "E[r^2]": (final.r**2, q_r2),
        "E[V']": (pot.derivative(final.r), q_vp),
    }
    details = []
    ok = abs(q_vp - cfg.tau) < 1e-8  # quadrature mean force equals the tension
    for name, (arr, target) in samples.items():
        mean, err = mean_err(arr.ravel())
        pull = abs(mean - target) / err
        ok = ok and pull < 3.0
        details.append(f"{name}={mean:+.4f} (target {target:+.4f}, {pull:.1f} se)")
    report(capsys, 2, "Gibbs stationarity", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 3. Phonon variance and energy-field pairing
# ---------------------------------------------------------------------------


def test_criterion_03_mode_variances(capsys):
    cfg = ScalingConfig(n=32, lattice_len=256, beta=1.0)
    pot = toda_chain(cfg)
    state = sample_equilibrium_state(cfg, pot, stream(13, 0), 4000)
    modes = compute_modes(state, pot, cfg)

    target_xi = 2.0 / cfg.beta
    var_plus = float(np.mean(modes.centered(1) ** 2))
    var_minus = float(np.mean(modes.centered(-1) ** 2))
    dev_plus = abs(var_plus / target_xi - 1.0)
    dev_minus = abs(var_minus / target_xi - 1.0)
    phonon_ok = dev_plus < 0.02 and dev_minus < 0.02

    phi = profile_fn("gaussian", center=4.0, width=0.4)
    field = fluctuation_field(modes, 0, phi, Frame(0, 0.0), 0.0, cfg.n)
    var_field = float(np.mean(field**2))
    target_field = 3.0 / cfg.beta**2 * phi.l2_norm_sq(0)
    dev_field = abs(var_field / target_field - 1.0)
    energy_ok = dev_field < 0.05

    report(
        capsys, 3, "phonon variance and energy pairing",
        phonon_ok and energy_ok,
        f"Var(xi+)={var_plus:.4f}, Var(xi-)={var_minus:.4f} "
        f"(target {target_xi}, devs {dev_plus:.1%}/{dev_minus:.1%}); "
        f"energy field var={var_field:.4f} vs 3/beta^2 |phi|^2={target_field:.4f} "
        f"(dev {dev_field:.1%})",
    )


# ---------------------------------------------------------------------------
# 4. Quadratic variation of the martingale part
# ---------------------------------------------------------------------------


def test_criterion_04_quadratic_variation(capsys):
    cfg = ScalingConfig(n=32, lattice_len=832, beta=1.0)
    pot = toda_chain(cfg)
    phi = profile_fn("gaussian", center=13.0, width=1.0)
    frame = Frame.for_mode(1, cfg, pot)
    est = qv_estimate(cfg, pot, phi, frame, t_final=0.1, replicas=500, seed=11)
    rate = est.value / est.horizon
    target = qv_limit(phi, cfg, 1.0)
    dev = abs(rate / target - 1.0)
    report(
        capsys, 4, "quadratic variation rate",
        dev < 0.05,
        f"qv/t={rate:.5f} vs gamma/beta |phi'|^2={target:.5f} (dev {dev:.2%}, "
        f"stderr {est.stderr / est.horizon:.2e})",
    )


# ---------------------------------------------------------------------------
# 5. Equipartition decay with n
# ---------------------------------------------------------------------------


def test_criterion_05_equipartition_decay(capsys, trend_runs):
    means, errs = [], []
    for n in TREND_NS:
        m, e = mean_err(trend_runs[n]["eq"] ** 2)
        means.append(m)
        errs.append(e)
    ok = decaying(means, errs)
    detail = ", ".join(
        f"n={n}: {m:.4g}+-{e:.2g}" for n, m, e in zip(TREND_NS, means, errs)
    )
    report(capsys, 5, "equipartition second moment decay", ok, detail)


# ---------------------------------------------------------------------------
# 6. Block-replacement discrepancy: U shape and scaling bound
# ---------------------------------------------------------------------------


def test_criterion_06_bg2_shape_and_bound(capsys, trend_runs):
    stats = {
        n: {ell: mean_err(trend_runs[n][f"bg2_{ell}"] ** 2) for ell in BG2_ELLS}
        for n in (32, 64)
    }
    vals64 = [stats[64][ell][0] for ell in BG2_ELLS]
    k_min = int(np.argmin(vals64))
    ell_min = BG2_ELLS[k_min]
    u_shape = (
        all(a > b for a, b in zip(vals64[: k_min + 1], vals64[1 : k_min + 1]))
        and all(a < b for a, b in zip(vals64[k_min:], vals64[k_min + 1 :]))
    )
    root = math.sqrt(64)
    min_ok = root / 2.0 <= ell_min <= root * 2.0

    # one constant fitted on the n=32 points must also cover n=64
    c_fit = max(
        stats[32][ell][0] / bg2_bound(1.0, TREND_T, ell, 32, TREND_PHI)
        for ell in BG2_ELLS
    )
    bound_ok = all(
        stats[64][ell][0] <= c_fit * bg2_bound(1.0, TREND_T, ell, 64, TREND_PHI)
        for ell in BG2_ELLS
    )
    detail = (
        f"n=64 values {[f'{v:.3g}' for v in vals64]}, argmin ell={ell_min}, "
        f"U-shape={u_shape}, C fitted on n=32 = {c_fit:.3g}, bound holds={bound_ok}"
    )
    report(capsys, 6, "block replacement shape and bound",
           u_shape and min_ok and bound_ok, detail)


# ---------------------------------------------------------------------------
# 7. Wrong-frame decay, correct-frame control
# ---------------------------------------------------------------------------


def test_criterion_07_wrong_frame_decay(capsys, trend_runs):
    verdicts = {}
    details = []
    for label in ("wf_linear", "wf_quadratic", "wf_cross", "ctrl_linear"):
        means, errs = [], []
        for n in TREND_NS:
            m, e = mean_err(np.abs(trend_runs[n][label]))
            means.append(m)
            errs.append(e)
        verdicts[label] = decaying(means, errs)
        details.append(
            label + ": " + ", ".join(f"{m:.4g}" for m in means)
            + (" (decaying)" if verdicts[label] else " (not decaying)")
        )
    ok = (
        verdicts["wf_linear"]
        and verdicts["wf_quadratic"]
        and verdicts["wf_cross"]
        and not verdicts["ctrl_linear"]
    )
    report(capsys, 7, "wrong-frame decay", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 8. Harmonic chain against the Ornstein-Uhlenbeck limit
# ---------------------------------------------------------------------------


def test_criterion_08_harmonic_ou_oracle(capsys):
    cfg = ScalingConfig(n=32, lattice_len=1024, beta=1.0)
    pot = ScaledPotential(base=harmonic(1.0), epsilon=cfg.epsilon)
    phi = profile_fn("gaussian", center=24.0, width=0.75)
    phi_origin = profile_fn("gaussian", center=0.0, width=0.75)
    frame = Frame.for_mode(1, cfg, pot)
    replicas = 256

    state = sample_equilibrium_state(cfg, pot, stream(31, 0), replicas)
    means = equilibrium_means(pot, cfg)
    x0 = fluctuation_field(
        compute_modes(state, pot, cfg, means), 1, phi, frame, 0.0, cfg.n
    )
    products = {}

    def capture(snap, t):
        xt = fluctuation_field(
            compute_modes(snap, pot, cfg, means), 1, phi, frame, t, cfg.n
        )
        products[t] = xt * x0

    evolve_macro(
        state, 0.5, cfg, pot, stream(31, 1), hooks=[(0.1, capture), (0.5, capture)]
    )
    ok = True
    details = []
    for t in (0.1, 0.5):
        mean, err = mean_err(products[t])
        oracle = ou_smoothed_pairing(phi_origin, phi_origin, t, cfg.beta, cfg.gamma)
        pull = abs(mean - oracle) / err
        ok = ok and pull < 3.0
        details.append(f"t={t}: {mean:.3f}+-{err:.3f} vs OU {oracle:.3f} ({pull:.1f} se)")
    report(capsys, 8, "harmonic vs OU covariance", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# 9. Burgers integrator keeps white noise stationary
# ---------------------------------------------------------------------------


def test_criterion_09_sbe_stationarity(capsys):
    params = sbe_params_from_chain(
        1, 1.0, 1.0, 1.0, 1.0, -1.0, cells=256, dx=1.0 / 32.0
    )
    dt = 0.015 * params.dx**2 / params.diffusion
    field = sbe_init_stationary(params, stream(21, 0), replicas=64)
    target = 2.0 / (params.beta * params.dx)
    variances = {0.0: float(np.mean(field.u**2))}

    def capture_at(t):
        return lambda f: variances.setdefault(t, float(np.mean(f.u**2)))

    hooks = [(float(t), capture_at(float(t))) for t in (1, 2, 3, 4, 5)]
    sbe_evolve(field, params, 5.0, dt, stream(21, 1), hooks)
    devs = {t: abs(v / target - 1.0) for t, v in variances.items()}
    worst = max(devs.values())
    report(
        capsys, 9, "Burgers white-noise stationarity",
        worst < 0.05,
        f"Var(u)/target over t=0..5: "
        + ", ".join(f"{v / target:.3f}" for _, v in sorted(variances.items()))
        + f" (worst dev {worst:.1%})",
    )


# ---------------------------------------------------------------------------
# 10. Drift constant and pointwise mode identities
# ---------------------------------------------------------------------------


def test_criterion_10_identities(capsys):
    dv_ok = (
        dv_constant(1.0, 0.0, 0.0) == 0.0
        and dv_constant(2.0, 0.0, 0.0) == 0.0
        and dv_constant(1.0, -1.0, 1.0) == 1.0 / 24.0
    )

    cfg = ScalingConfig(n=16, lattice_len=64, beta=1.0)
    pot = ScaledPotential(base=fput(0.7, 1.3), epsilon=cfg.epsilon)
    rng = stream(41, 0)
    state = ChainState(rng.normal(size=(8, 64)), rng.normal(size=(8, 64)))
    modes = compute_modes(state, pot, cfg)
    m = modes.means
    pbar = state.p - m["p"]
    rbar_next = np.roll(state.r, -1, axis=-1) - m["r"]
    sqc2 = math.sqrt(pot.c2)

    lhs = modes.centered(1) ** 2 - modes.centered(-1) ** 2
    diff_sq = float(np.max(np.abs(lhs - 4.0 * sqc2 * pbar * rbar_next)))
    cross = modes.centered(1) * modes.centered(-1)
    diff_cross = float(
        np.max(np.abs(cross - (pot.c2 * rbar_next**2 - pbar**2)))
    )
    report(
        capsys, 10, "drift constant and mode identities",
        dv_ok and diff_sq < 1e-12 and diff_cross < 1e-12,
        f"dv cases exact={dv_ok}, |square identity|={diff_sq:.2e}, "
        f"|cross identity|={diff_cross:.2e}",
    )
