import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langinv.exceptions import ConfigError, DegenerateNoiseError
from langinv.schedule import (
    DETECTION_PRESETS,
    AnnealSchedule,
    DynamicsParams,
    build_schedule,
    detection_step_sizes,
    estimation_step_sizes,
    geometric_sigmas,
    mass_from_preconditioner,
    spectral_preconditioner,
)


class TestGeometricSigmas:
    def test_endpoints_and_terminal_zero(self):
        s = geometric_sigmas(0.4, 0.02, 5)
        assert s.shape == (6,)
        np.testing.assert_allclose(s[0], 0.4)
        np.testing.assert_allclose(s[4], 0.02)
        assert s[5] == 0.0

    def test_interior_value(self):
        s = geometric_sigmas(0.4, 0.02, 5)
        # midpoint of the geometric ladder: 0.4 * sqrt(0.02/0.4)
        np.testing.assert_allclose(s[2], 0.08944271909999159, rtol=1e-12)

    def test_constant_ratio(self):
        s = geometric_sigmas(1.0, 0.01, 10)[:-1]
        ratios = s[1:] / s[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    def test_single_level(self):
        np.testing.assert_allclose(geometric_sigmas(0.5, 0.5, 1), [0.5, 0.0])

    def test_bad_order_rejected(self):
        with pytest.raises(ConfigError):
            geometric_sigmas(0.01, 0.4, 5)


class TestStepSizes:
    def test_detection_constant(self):
        s = geometric_sigmas(0.4, 0.02, 5)
        eps = detection_step_sizes(6e-4, s)
        np.testing.assert_allclose(eps, np.full(5, 1.5))

    def test_estimation_proportional(self):
        s = geometric_sigmas(1.0, 0.01, 58)
        eps = estimation_step_sizes(2.2e-10, s)
        np.testing.assert_allclose(eps[-1], 2.2e-10, rtol=1e-12)
        np.testing.assert_allclose(eps / s[:-1] ** 2, eps[0] / s[0] ** 2, rtol=1e-12)
        # a level with sigma_l = 10 * sigma_last runs at 100x the base step
        idx = np.argmin(np.abs(s[:-1] / 0.01 - 10.0))
        np.testing.assert_allclose(eps[idx] / 2.2e-10, (s[idx] / 0.01) ** 2,
                                   rtol=1e-12)

    def test_estimation_nonincreasing(self):
        s = geometric_sigmas(1.0, 0.01, 20)
        eps = estimation_step_sizes(1e-9, s)
        assert np.all(np.diff(eps) < 0)


class TestSpectralPreconditioner:
    def test_low_branch_value(self):
        c = spectral_preconditioner(0.1, np.array([1.0]), 0.2, 1)
        np.testing.assert_allclose(c, [0.0075])

    def test_high_branch_value(self):
        c = spectral_preconditioner(1.0, np.array([1.0]), 0.5, 1)
        np.testing.assert_allclose(c, [0.75])

    def test_zero_singular_value_padding(self):
        # padded coordinates sit on the low branch and give sigma_l^2 exactly
        c = spectral_preconditioner(0.3, np.array([2.0]), 0.1, 3)
        np.testing.assert_allclose(c[1:], [0.09, 0.09])

    def test_boundary_clamped(self):
        # sigma_l * s == sigma0 makes both branches vanish; the floor applies
        c = spectral_preconditioner(0.5, np.array([2.0]), 1.0, 1)
        np.testing.assert_allclose(c, [1e-12 * 0.25])

    def test_degenerate_noise(self):
        with pytest.raises(DegenerateNoiseError):
            spectral_preconditioner(0.5, np.array([0.0, 1.0]), 0.0, 2)

    def test_noiseless_high_branch_ok(self):
        c = spectral_preconditioner(0.5, np.array([1.0]), 0.0, 1)
        np.testing.assert_allclose(c, [0.25])

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(1e-3, 10.0),
        st.floats(0.0, 20.0),
        st.floats(1e-3, 5.0),
    )
    def test_positive_and_finite(self, sigma_l, s_j, sigma0):
        c = spectral_preconditioner(sigma_l, np.array([s_j]), sigma0, 1)
        assert np.isfinite(c).all()
        assert c[0] >= 1e-12 * sigma_l**2
        assert c[0] <= sigma_l**2 * (1.0 + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.1, 2.0), st.floats(0.1, 3.0))
    def test_branches_agree_at_crossover(self, sigma_l, s_j):
        sigma0 = sigma_l * s_j
        lo = sigma_l**2 * (1.0 - (sigma_l * s_j) ** 2 / sigma0**2)
        hi = sigma_l**2 - (sigma0 / s_j) ** 2
        assert abs(lo - hi) < 1e-12 * sigma_l**2 + 1e-15


class TestMass:
    def test_inverse_scaling(self):
        m = mass_from_preconditioner(np.array([0.0075]), 1.0)
        np.testing.assert_allclose(m, [33.333333333333336])

    def test_gamma_square(self):
        m = mass_from_preconditioner(np.array([2.0, 0.5]), 3.0)
        np.testing.assert_allclose(m, [9.0 / 8.0, 9.0 / 2.0])

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            mass_from_preconditioner(np.array([0.0]), 1.0)


class TestAnnealSchedule:
    def _ok(self):
        return dict(
            sigmas=geometric_sigmas(0.4, 0.02, 3),
            epsilons=np.full(3, 0.1),
            precond=np.ones((3, 2)),
            mass=np.ones((3, 2)),
            tau=0.5,
            t_inner=4,
        )

    def test_valid(self):
        sched = AnnealSchedule(**self._ok())
        assert sched.n_levels == 3
        assert sched.dim == 2

    @pytest.mark.parametrize("mutate", [
        dict(sigmas=np.array([0.4, 0.1, 0.2, 0.0])),
        dict(sigmas=np.array([0.4, 0.1, 0.02])),
        dict(epsilons=np.array([0.1, -0.1, 0.1])),
        dict(epsilons=np.full(2, 0.1)),
        dict(precond=np.zeros((3, 2))),
        dict(mass=np.ones((2, 2))),
        dict(tau=0.0),
        dict(t_inner=0),
    ])
    def test_invalid(self, mutate):
        kw = self._ok()
        kw.update(mutate)
        with pytest.raises((ConfigError, ValueError)):
            AnnealSchedule(**kw)


class TestBuildSchedule:
    def test_spectral_composition(self):
        s = np.array([3.0, 1.0, 0.2])
        sched = build_schedule(
            dim=4, n_levels=5, sigma1=0.4, sigma_last=0.02, eps0=6e-4,
            t_inner=30, tau=0.01, s=s, sigma0=0.3,
        )
        assert sched.precond.shape == (5, 4)
        for l, sig in enumerate(sched.sigmas[:-1]):
            np.testing.assert_allclose(
                sched.precond[l], spectral_preconditioner(sig, s, 0.3, 4))
            np.testing.assert_allclose(
                sched.mass[l], 0.25 / sched.precond[l])
        np.testing.assert_allclose(sched.epsilons, np.full(5, 1.5))

    def test_identity_scalar(self):
        sched = build_schedule(
            dim=3, n_levels=4, sigma1=1.0, sigma_last=0.1, eps0=1e-6,
            t_inner=3, tau=1.0, step_rule="estimation",
            precond="identity", mass_mode="scalar:2",
        )
        np.testing.assert_allclose(sched.precond, np.ones((4, 3)))
        np.testing.assert_allclose(sched.mass, np.full((4, 3), 2.0))
        np.testing.assert_allclose(sched.epsilons[-1], 1e-6)

    def test_spectral_requires_svd(self):
        with pytest.raises(ConfigError):
            build_schedule(dim=2, n_levels=2, sigma1=1.0, sigma_last=0.1,
                           eps0=1e-3, t_inner=2, tau=1.0)

    def test_bad_modes(self):
        common = dict(dim=2, n_levels=2, sigma1=1.0, sigma_last=0.1,
                      eps0=1e-3, t_inner=2, tau=1.0, precond="identity")
        with pytest.raises(ConfigError):
            build_schedule(**common, mass_mode="scalar:-1")
        with pytest.raises(ConfigError):
            build_schedule(**common, mass_mode="cubic")


class TestPresets:
    def test_keys_cover_orders_and_depths(self):
        orders = {k[0] for k in DETECTION_PRESETS}
        depths = {k[1] for k in DETECTION_PRESETS}
        assert orders == {1, 2, 3}
        assert depths == {5, 10, 20}

    def test_shallow_presets(self):
        assert DETECTION_PRESETS[(3, 5)] == dict(
            sigma1=0.4, sigma_last=0.02, eps0=2.2e-4, t_inner=30, tau=0.023)
        assert DETECTION_PRESETS[(2, 5)] == dict(
            sigma1=0.4, sigma_last=0.02, eps0=6e-4, t_inner=30, tau=0.01)

    def test_effective_steps_per_level(self):
        # the shallow third-order preset runs at eps0 / sigma_last^2 = 0.55
        p = DETECTION_PRESETS[(3, 5)]
        sig = geometric_sigmas(p["sigma1"], p["sigma_last"], 5)
        np.testing.assert_allclose(detection_step_sizes(p["eps0"], sig)[0], 0.55)


def test_dynamics_params_defaults():
    p = DynamicsParams()
    assert (p.gamma, p.lam, p.alpha) == (1.0, 1.0, 1.2)
    with pytest.raises(ValueError):
        DynamicsParams(gamma=0.0)
