import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluctchain import potential as pmod
from fluctchain.dynamics import ChainState, ScalingConfig, sample_equilibrium_state
from fluctchain.errors import FrameWrapError
from fluctchain.observables import TestFunction as profile_fn
from fluctchain.observables import (
    Frame,
    block_average,
    compute_modes,
    energy_coupling,
    equilibrium_means,
    fluctuation_field,
    quadratic_field,
)
from fluctchain.rng import stream


def toda_setup(n=16, L=256, eps=None, beta=1.0):
    cfg = ScalingConfig(n=n, lattice_len=L, beta=beta)
    sp = pmod.ScaledPotential(base=pmod.toda(1.0), epsilon=cfg.epsilon if eps is None else eps)
    return cfg, sp


class TestTestFunction:
    def test_gaussian_norms(self):
        phi = profile_fn("gaussian", center=0.0, width=0.3)
        assert phi.l2_norm_sq(0) == pytest.approx(0.3 * math.sqrt(math.pi))
        assert phi.l2_norm_sq(1) == pytest.approx(math.sqrt(math.pi) / 0.6)

    @pytest.mark.parametrize("kind,params", [
        ("gaussian", dict(center=0.4, width=0.25)),
        ("hermite", dict(index=3, scale=0.5)),
        ("hermite", dict(index=0, scale=0.7, center=-0.2)),
    ])
    @pytest.mark.parametrize("deriv", [1, 2, 3])
    def test_derivatives_match_finite_difference(self, kind, params, deriv):
        phi = profile_fn(kind, **params)
        x = np.linspace(-1.5, 1.5, 41)
        h = 1e-5
        fd = (phi(x + h, deriv=deriv - 1) - phi(x - h, deriv=deriv - 1)) / (2 * h)
        scale = np.max(np.abs(phi(x, deriv=deriv))) + 1.0
        assert np.allclose(phi(x, deriv=deriv), fd, atol=5e-8 * scale)

    @pytest.mark.parametrize("index,scale", [(0, 1.0), (2, 0.6), (5, 0.4)])
    @pytest.mark.parametrize("deriv", [0, 1])
    def test_hermite_norms_match_quadrature(self, index, scale, deriv):
        phi = profile_fn("hermite", index=index, scale=scale)
        x = np.linspace(-phi.support_radius, phi.support_radius, 40001)
        num = np.trapezoid(phi(x, deriv=deriv) ** 2, x)
        assert phi.l2_norm_sq(deriv) == pytest.approx(num, rel=1e-9)

    def test_support_radius(self):
        phi = profile_fn("gaussian", width=0.5)
        assert abs(phi(phi.support_radius + 0.01)) < 1e-14
        assert abs(phi(0.9 * phi.support_radius)) > 0

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            profile_fn("gaussian", width=-1.0)
        with pytest.raises(ValueError):
            profile_fn("sinc")
        with pytest.raises(ValueError):
            profile_fn("gaussian", width=1.0, extra=2.0)


class TestFrame:
    def test_phonon_velocity(self):
        cfg, sp = toda_setup(n=16)
        f = Frame.for_mode(1, cfg, sp)
        assert f.velocity == pytest.approx(math.sqrt(sp.c2) * cfg.alpha * 16)
        assert Frame.for_mode(-1, cfg, sp).velocity == pytest.approx(-f.velocity)

    def test_energy_frame_static(self):
        cfg, sp = toda_setup()
        assert Frame.for_mode(0, cfg, sp).velocity == 0.0

    def test_corrected_velocity(self):
        cfg, sp = toda_setup(n=16)
        dv = pmod.dv_constant(sp.c2, sp.c3, sp.c4)
        f = Frame.for_mode(1, cfg, sp, corrected=True)
        assert f.velocity == pytest.approx(math.sqrt(sp.c2) * cfg.alpha * (16 + dv))

    def test_sign_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Frame(1, -3.0)


class TestModeIdentities:
    def rand_state(self, cfg, sp, seed=3):
        return sample_equilibrium_state(cfg, sp, stream(seed, 0))

    def test_difference_identity(self):
        # xi+ - xi- = 2 p, xi+ + xi- = 2 sqrt(c2) r_{j+1}
        cfg, sp = toda_setup()
        st_ = self.rand_state(cfg, sp)
        m = compute_modes(st_, sp, cfg)
        assert np.allclose(m.xi_plus - m.xi_minus, 2 * st_.p, atol=1e-12)
        assert np.allclose(m.xi_plus + m.xi_minus, 2 * math.sqrt(sp.c2) * np.roll(st_.r, -1), atol=1e-12)

    def test_centered_product_identity(self):
        # (xibar+)^2 - (xibar-)^2 = 4 sqrt(c2) pbar rbar_{j+1} pointwise
        cfg, sp = toda_setup()
        st_ = self.rand_state(cfg, sp)
        m = compute_modes(st_, sp, cfg)
        lhs = m.centered(1) ** 2 - m.centered(-1) ** 2
        rbar = np.roll(st_.r, -1) - m.means["r"]
        pbar = st_.p - m.means["p"]
        rhs = 4 * math.sqrt(sp.c2) * pbar * rbar
        # centered identity holds because the +/- means share the r part
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.max(np.abs(lhs)))

    def test_corrected_mode_identity(self):
        # xitilde_sigma - xi_sigma = eps * c3/(2 c2^{3/2}) * e pointwise
        cfg, sp = toda_setup()
        st_ = self.rand_state(cfg, sp)
        m = compute_modes(st_, sp, cfg)
        e = 0.5 * st_.p**2 + sp.value(st_.r)
        coup = sp.epsilon * energy_coupling(sp.c2, sp.c3)
        assert np.max(np.abs(m.xi_tilde_plus - m.xi_plus - coup * e)) < 1e-12
        assert np.max(np.abs(m.xi_tilde_minus - m.xi_minus - coup * e)) < 1e-12

    def test_corrector_is_small(self):
        cfg, sp = toda_setup(n=64)
        st_ = self.rand_state(cfg, sp)
        m = compute_modes(st_, sp, cfg)
        gap = np.std(m.centered(1, corrected=True) - m.centered(1))
        assert gap < 2.0 * sp.epsilon


class TestEquilibriumMeans:
    def test_harmonic_closed_form(self):
        cfg = ScalingConfig(n=16, lattice_len=64, beta=2.0)
        sp = pmod.ScaledPotential(base=pmod.harmonic(), epsilon=cfg.epsilon)
        means = equilibrium_means(sp, cfg)
        assert means["r"] == pytest.approx(0.0, abs=1e-10)
        assert means["r2"] == pytest.approx(0.5, rel=1e-8)
        assert means["p2"] == pytest.approx(0.5, rel=1e-12)
        # E[e] = 1/beta for a harmonic chain by equipartition
        assert means["xi_zero"] == pytest.approx(0.5, rel=1e-8)

    def test_sample_means_agree(self):
        cfg, sp = toda_setup(n=16, L=4096)
        means = equilibrium_means(sp, cfg)
        st_ = sample_equilibrium_state(cfg, sp, stream(21, 0))
        m = compute_modes(st_, sp, cfg)
        for key, arr in [
            ("xi_plus", m.xi_plus),
            ("xi_minus", m.xi_minus),
            ("xi_zero", m.xi_zero),
        ]:
            se = np.std(arr) / math.sqrt(arr.size)
            assert np.mean(arr) == pytest.approx(means[key], abs=4 * se)


class TestFluctuationField:
    def make(self, n=16, L=1024, seed=5):
        cfg, sp = toda_setup(n=n, L=L)
        st_ = sample_equilibrium_state(cfg, sp, stream(seed, 0))
        return cfg, sp, st_, compute_modes(st_, sp, cfg)

    def test_single_site_profile(self):
        # a profile narrow enough to weight one site gives a * phi(j0/n) / sqrt(n)
        cfg, sp = toda_setup(n=4, L=64)
        r = np.zeros(64)
        p = np.zeros(64)
        p[8] = 1.0
        st_ = ChainState(r, p, 0.0, 0)
        m = compute_modes(st_, sp, cfg)
        phi = profile_fn("gaussian", center=2.0, width=0.02)
        val = fluctuation_field(m, 1, phi, Frame(0, 0.0), 0.0, cfg.n)
        mean_contrib = -np.sum(phi(np.arange(64) / 4.0)) * m.means["xi_plus"]
        assert val == pytest.approx((1.0 * phi(2.0) + mean_contrib) / 2.0, rel=1e-12)

    def test_linearity_in_profile(self):
        cfg, sp, st_, m = self.make()
        f0 = Frame(0, 0.0)
        a = profile_fn("gaussian", center=20.0, width=1.0)
        b = profile_fn("hermite", index=2, scale=1.0, center=20.0)
        grid = np.arange(st_.lattice_len) / cfg.n
        va = fluctuation_field(m, 1, a, f0, 0.0, cfg.n)
        vb = fluctuation_field(m, 1, b, f0, 0.0, cfg.n)
        combo = m.centered(1) @ (2.0 * a(grid) - 0.5 * b(grid)) / math.sqrt(cfg.n)
        assert combo == pytest.approx(2.0 * va - 0.5 * vb, rel=1e-12)

    def test_frame_shift_matches_recentered_profile(self):
        # evaluating in the moving frame equals shifting the profile by v t
        cfg, sp, st_, m = self.make()
        v = Frame.for_mode(1, cfg, sp).velocity
        t = 0.05
        moving = fluctuation_field(m, 1, profile_fn("gaussian", center=30.0, width=1.0),
                                   Frame(1, v), t, cfg.n)
        shifted = fluctuation_field(m, 1, profile_fn("gaussian", center=30.0 - v * t, width=1.0),
                                    Frame(0, 0.0), 0.0, cfg.n)
        assert moving == pytest.approx(shifted, rel=1e-12)

    def test_frame_wrap_detected(self):
        cfg, sp, st_, m = self.make(n=16, L=256)
        phi = profile_fn("gaussian", center=8.0, width=1.0)
        v = Frame.for_mode(1, cfg, sp).velocity
        with pytest.raises(FrameWrapError):
            fluctuation_field(m, 1, phi, Frame(1, v), 1.0, cfg.n)

    def test_ensemble_shape(self):
        cfg, sp = toda_setup(n=8, L=256)
        st_ = sample_equilibrium_state(cfg, sp, stream(6, 0), replicas=12)
        m = compute_modes(st_, sp, cfg)
        phi = profile_fn("gaussian", center=16.0, width=1.0)
        vals = fluctuation_field(m, 0, phi, Frame(0, 0.0), 0.0, cfg.n)
        assert vals.shape == (12,)

    def test_phonon_field_variance(self):
        # static-frame field at t=0: Var = (1/n) sum phi(j/n)^2 Var(xi)
        # with Var(xi+) = c2 Var(r) + Var(p) -> 2/beta as eps -> 0
        cfg, sp = toda_setup(n=32, L=2048)
        R = 4000
        st_ = sample_equilibrium_state(cfg, sp, stream(13, 0), replicas=R)
        m = compute_modes(st_, sp, cfg)
        phi = profile_fn("gaussian", center=32.0, width=1.0)
        vals = fluctuation_field(m, 1, phi, Frame(0, 0.0), 0.0, cfg.n)
        grid = np.arange(cfg.lattice_len) / cfg.n
        target = np.sum(phi(grid) ** 2) / cfg.n * 2.0 / cfg.beta
        rel_se = math.sqrt(2.0 / R)
        assert np.var(vals) == pytest.approx(target, rel=0.05 + 4 * rel_se)


class TestQuadraticField:
    def test_matches_direct_sum(self):
        cfg, sp = toda_setup(n=8, L=256)
        st_ = sample_equilibrium_state(cfg, sp, stream(17, 0))
        m = compute_modes(st_, sp, cfg)
        phi = profile_fn("gaussian", center=16.0, width=1.0)
        val = quadratic_field(m, 1, phi, Frame(0, 0.0), 0.0, cfg.n, deriv=1)
        x = m.centered(1)
        direct = np.sum(x * np.roll(x, -1) * phi(np.arange(256) / 8.0, deriv=1))
        assert val == pytest.approx(direct, rel=1e-12)


class TestBlockAverage:
    def test_periodic_wraparound(self):
        g = np.arange(8.0)
        out = block_average(g, 4, 0.0)
        assert out[6] == pytest.approx((6 + 7 + 0 + 1) / 4.0)

    def test_ell_one_is_centering(self):
        g = np.array([1.0, 3.0, 5.0])
        assert np.allclose(block_average(g, 1, 3.0), [-2.0, 0.0, 2.0])

    def test_variance_clt(self):
        rng = stream(23, 0)
        g = rng.normal(0.0, 1.0, size=(2000, 512))
        out = block_average(g, 16, 0.0)
        assert np.mean(out**2) == pytest.approx(1.0 / 16, rel=0.05)

    @given(st.integers(min_value=1, max_value=16))
    @settings(max_examples=20, deadline=None)
    def test_mean_preserved(self, ell):
        rng = np.random.default_rng(ell)
        g = rng.normal(size=64)
        out = block_average(g, ell, 0.25)
        # periodic block averaging preserves the total of the centered field
        assert np.sum(out) == pytest.approx(np.sum(g - 0.25), abs=1e-9)

    def test_bad_ell(self):
        with pytest.raises(ValueError):
            block_average(np.zeros(8), 5, 0.0)
