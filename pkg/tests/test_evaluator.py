import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import struve, y0

from lazy_newton.constants import G
from lazy_newton.errors import SingularApproach
from lazy_newton.evaluator import (
    AdaptiveSimpson,
    GaussLegendre,
    KernelParams,
    Source,
    delayed_field,
    delayed_potential,
    delayed_potential_naive,
    kernel_weights,
    prepare_scene,
    scene_potential_field,
    superposed_potential,
)
from lazy_newton.frames import PointMassField, UniformField, ZeroField
from lazy_newton.kinematics import (
    CircularOrbit,
    PiecewiseStatic,
    Sampled,
    Static,
    UniformAcceleration,
    UniformVelocity,
)


def truncated_moment(k, tau_g, t_max):
    """Oracle: k-th moment of the truncated exponential kernel via quadrature."""
    # dimensionless lag keeps the integrand O(1) for the quadrature
    val, err = quad(
        lambda u: u**k * math.exp(-u), 0.0, t_max / tau_g, epsabs=1e-14, epsrel=1e-13, limit=200
    )
    assert err < 1e-12 * max(val, 1e-300)
    return val * tau_g**k


class TestKernelWeights:
    def test_normalization_and_moments(self):
        params = KernelParams(1e-3)
        nodes = kernel_weights(params)
        factor = params.t_max_factor
        assert abs(nodes.weights.sum() - (1.0 - math.exp(-factor))) < 1e-15
        # truncated closed forms
        mean = float(nodes.weights @ nodes.taus)
        m2 = float(nodes.weights @ nodes.taus**2)
        mean_exact = 1e-3 * (1.0 - math.exp(-factor) * (1.0 + factor))
        m2_exact = 2e-6 * (1.0 - math.exp(-factor) * (1.0 + factor + factor**2 / 2.0))
        assert abs(mean - mean_exact) < 1e-13 * mean_exact
        assert abs(m2 - m2_exact) < 1e-13 * m2_exact
        # untruncated targets for the full-line kernel
        assert abs(mean - 1e-3) < 1e-10 * 1e-3
        assert abs(m2 - 2e-6) < 1e-10 * 2e-6
        # independent quadrature oracle
        assert abs(mean - truncated_moment(1, 1e-3, params.t_max)) < 1e-13 * mean
        assert abs(m2 - truncated_moment(2, 1e-3, params.t_max)) < 1e-13 * m2

    def test_node_layout(self):
        params = KernelParams(1e-3)
        nodes = kernel_weights(params)
        # 40 tau_g span / (tau_g/2 per segment) = 80 segments of order 32
        assert nodes.n_segments == 80
        assert len(nodes) == 80 * 32
        assert np.all(np.diff(nodes.taus) > 0)
        assert np.all(nodes.weights > 0)
        assert nodes.taus[0] > 0 and nodes.taus[-1] < params.t_max
        # iterates as (tau, weight) pairs
        tau0, w0 = next(iter(nodes))
        assert tau0 == nodes.taus[0] and w0 == nodes.weights[0]

    def test_breakpoints_split_segments(self):
        params = KernelParams(1e-3)
        base = kernel_weights(params)
        split = kernel_weights(params, breakpoints=[1.23e-4])
        assert split.n_segments > base.n_segments
        assert abs(split.weights.sum() - base.weights.sum()) < 1e-16
        # breakpoints outside (0, t_max) are ignored
        same = kernel_weights(params, breakpoints=[-1.0, 0.0, params.t_max, 2.0])
        assert same.n_segments == base.n_segments

    def test_rejects_instantaneous_and_adaptive(self):
        with pytest.raises(ValueError):
            kernel_weights(KernelParams(0.0))
        with pytest.raises(ValueError):
            kernel_weights(KernelParams(1e-3, quadrature=AdaptiveSimpson()))

    @settings(max_examples=40, deadline=None)
    @given(
        tau_g=st.floats(1e-6, 1e3),
        factor=st.floats(20.0, 80.0),
        cut=st.floats(0.01, 0.99),
    )
    def test_normalization_property(self, tau_g, factor, cut):
        params = KernelParams(tau_g, t_max_factor=factor)
        nodes = kernel_weights(params, breakpoints=[cut * params.t_max])
        total = nodes.weights.sum()
        assert abs(total - (1.0 - math.exp(-factor))) < 1e-14


class TestParamsValidation:
    def test_kernel_params(self):
        with pytest.raises(ValueError):
            KernelParams(-1e-3)
        with pytest.raises(ValueError):
            KernelParams(float("nan"))
        with pytest.raises(ValueError):
            KernelParams(1e-3, t_max_factor=19.0)
        with pytest.raises(ValueError):
            KernelParams(1e-3, softening_eps=0.0)
        assert KernelParams(2e-3).t_max == pytest.approx(0.08)

    def test_quadrature_specs(self):
        with pytest.raises(ValueError):
            GaussLegendre(order=1)
        with pytest.raises(ValueError):
            GaussLegendre(max_segment_tau_g=0.0)
        with pytest.raises(ValueError):
            AdaptiveSimpson(rel_tol=0.0)
        with pytest.raises(ValueError):
            AdaptiveSimpson(rel_tol=2e-6)

    def test_source_mass(self):
        with pytest.raises(ValueError):
            Source(0.0, Static((0, 0, 0)))
        with pytest.raises(ValueError):
            Source(-1.0, Static((0, 0, 0)))


class TestNaivePotential:
    def test_static_source_any_tau(self):
        src = Source(1.0, Static((0, 0, 0)))
        r = np.array([1.0, 0.0, 0.0])
        for tau_g in (1e-6, 1e-3, 10.0):
            phi = delayed_potential_naive(src, r, 0.0, KernelParams(tau_g))
            # kernel tail beyond 40 tau_g is dropped, not renormalized
            assert abs(phi - (1.0 - math.exp(-40.0)) * (-G)) < 1e-16

    def test_jump_mixture_closed_form(self):
        tau_g = 1e-3
        params = KernelParams(tau_g)
        a = np.array([0.0, 0.0, 0.01])
        src = Source(2.0, PiecewiseStatic([(-100.0, (0, 0, 0)), (0.0, a)]))
        r = np.array([0.0, 0.1, 0.0])
        phi_old = -G * 2.0 / np.linalg.norm(r)
        phi_new = -G * 2.0 / np.linalg.norm(r - a)
        for t in (1e-4, 5e-4, 2e-3, 1e-2, 3.9e-2):
            phi = delayed_potential_naive(src, r, t, params)
            w_new = 1.0 - math.exp(-t / tau_g)
            exact = w_new * phi_new + (math.exp(-t / tau_g) - math.exp(-40.0)) * phi_old
            assert abs(phi - exact) < 1e-13 * abs(exact)
            mixture = math.exp(-t / tau_g) * phi_old + w_new * phi_new
            assert abs(phi - mixture) < 1e-12 * abs(mixture)

    def test_perpendicular_drift_ratio(self):
        # source sliding along x, probe 1 m off-axis: |r - x(-u tau_g)| grows
        # as sqrt(1 + u^2) once v tau_g = 1 m
        tau_g = 1e-3
        src = Source(1.0, UniformVelocity((0, 0, 0), (-1000.0, 0.0, 0.0)))
        r = np.array([0.0, 1.0, 0.0])
        phi = delayed_potential_naive(src, r, 0.0, KernelParams(tau_g))
        ratio = phi / (-G * 1.0)
        oracle, err = quad(
            lambda u: math.exp(-u) / math.sqrt(1.0 + u * u), 0.0, 40.0, epsabs=1e-13, epsrel=1e-13
        )
        assert err < 1e-10
        assert abs(ratio - oracle) < 1e-9
        closed_form = math.pi / 2.0 * (struve(0, 1.0) - y0(1.0))
        assert abs(ratio - closed_form) < 1e-12

    def test_drift_ratio_decreases_with_speed(self):
        tau_g = 1e-3
        r = np.array([0.0, 1.0, 0.0])
        ratios = []
        for v in (0.0, 500.0, 1000.0, 4000.0):
            src = Source(1.0, UniformVelocity((0, 0, 0), (-v, 0.0, 0.0)))
            phi = delayed_potential_naive(src, r, 0.0, KernelParams(tau_g))
            ratios.append(phi / (-G))
        assert all(a > b for a, b in zip(ratios, ratios[1:]))

    def test_explicit_path_overrides_trajectory(self):
        src = Source(1.0, UniformVelocity((0, 0, 0), (9.0, 0, 0)))
        r = np.array([1.0, 0.0, 0.0])
        held = lambda s: np.zeros(3) if np.isscalar(s) else np.zeros((len(s), 3))
        phi = delayed_potential_naive(src, r, 0.0, KernelParams(1e-3), path=held)
        assert abs(phi - (1.0 - math.exp(-40.0)) * (-G)) < 1e-16

    def test_newtonian_limit_is_exact(self):
        params = KernelParams(0.0)
        trajectories = [
            Static((0.3, -0.2, 0.5)),
            UniformVelocity((0, 0, 0), (2.0, 0, 0)),
            UniformAcceleration((0, 0, 0), (1.0, 0, 0), (0, 0, -9.81)),
            CircularOrbit((0, 0, 0), 1.0, 10.0),
            PiecewiseStatic([(-1.0, (0, 0, 0)), (0.5, (0, 0, 1.0))]),
            Sampled([-1.0, 0.0, 1.0, 2.0], [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]),
        ]
        r = np.array([3.0, 1.0, -2.0])
        t = 0.75
        for traj in trajectories:
            src = Source(4.2, traj)
            u = r - traj.position(t)
            newton = -G * 4.2 / float(np.sqrt(u @ u))
            assert delayed_potential_naive(src, r, t, params) == newton
            assert delayed_potential(src, ZeroField(), r, t, params) == newton
            g_newton = (-G * 4.2 / float(np.sqrt(u @ u)) ** 3) * u
            np.testing.assert_array_equal(delayed_field(src, ZeroField(), r, t, params), g_newton)

    def test_singular_past_path_raises(self):
        # probe sits exactly where the source used to be
        src = Source(1.0, PiecewiseStatic([(-100.0, (0, 0, 0)), (0.0, (1.0, 0, 0))]))
        r = np.array([0.0, 0.0, 0.0])
        with pytest.raises(SingularApproach) as exc:
            delayed_potential_naive(src, r, 1e-3, KernelParams(1e-3))
        assert exc.value.distance == 0.0
        assert exc.value.when is not None and exc.value.when < 0.0

    def test_softening_is_a_guard_not_a_smoother(self):
        src = Source(1.0, Static((0, 0, 0)))
        params = KernelParams(1e-3, softening_eps=0.5)
        with pytest.raises(SingularApproach):
            delayed_potential_naive(src, np.array([0.4, 0.0, 0.0]), 0.0, params)
        # just outside the guard the value is the plain unsoftened potential
        phi = delayed_potential_naive(src, np.array([0.6, 0.0, 0.0]), 0.0, params)
        assert abs(phi - (1.0 - math.exp(-40.0)) * (-G / 0.6)) < 1e-15


class TestFramedPotential:
    def test_matches_naive_for_unaccelerated_source(self):
        # zero ambient, static source: the frame is inertial and coincident
        src = Source(3.0, Static((0.5, 0, 0)))
        r = np.array([2.0, 1.0, 0.0])
        params = KernelParams(1e-3)
        phi_naive = delayed_potential_naive(src, r, 0.0, params)
        phi_framed = delayed_potential(src, ZeroField(), r, 0.0, params)
        assert abs(phi_framed - phi_naive) < 1e-16

    def test_restoration_uniform_ambient(self):
        g = np.array([0.0, 0.0, -9.81])
        src = Source(5e3, UniformAcceleration((0, 0, 0), (3.0, 0, 0), g))
        amb = UniformField(g)
        rng = np.random.default_rng(3)
        for tau_g in (1e-3, 0.1):
            params = KernelParams(tau_g)
            for _ in range(5):
                r = rng.uniform(-2, 2, 3) + np.array([0.0, 0.0, 5.0])
                phi = delayed_potential(src, amb, r, 0.4, params)
                newton = -G * 5e3 / np.linalg.norm(r - src.trajectory.position(0.4))
                assert abs(phi - newton) < 1e-12 * abs(newton)

    def test_restoration_point_mass_ambient(self):
        omega = 2.0 / (40.0 * 1e-3)
        orbit = CircularOrbit((0, 0, 0), 1.0, omega)
        amb = PointMassField((0, 0, 0), omega**2 / G)
        src = Source(5e3, orbit)
        params = KernelParams(1e-3)
        rng = np.random.default_rng(4)
        for _ in range(5):
            r = rng.uniform(-0.3, 0.3, 3) + np.array([2.5, 0.0, 0.0])
            phi = delayed_potential(src, amb, r, 0.0, params)
            newton = -G * 5e3 / np.linalg.norm(r - orbit.position(0.0))
            assert abs(phi - newton) < 1e-10 * abs(newton)

    def test_supported_static_source_shows_upward_shift(self):
        g0, tau_g = 9.81, 1e-3
        src = Source(1.0, Static((0, 0, 0)))
        amb = UniformField((0, 0, -g0))
        params = KernelParams(tau_g)
        delta = g0 * tau_g**2
        r = np.array([0.0, 0.0, 1.0])
        phi = delayed_potential(src, amb, r, 0.0, params)
        shifted = -G / abs(1.0 - delta)
        # agreement to O((delta/d)^2) of the shifted point-mass potential
        assert abs(phi - shifted) < 10.0 * delta**2 * abs(shifted)

    def test_orbit_center_enhancement(self):
        tau_g, omega = 1e-3, 10.0
        src = Source(1.0, CircularOrbit((0, 0, 0), 1.0, omega))
        phi = delayed_potential(src, ZeroField(), np.zeros(3), 0.0, KernelParams(tau_g))
        ratio = abs(phi) / G
        assert abs(ratio - (1.0 + omega**2 * tau_g**2)) < 1e-2 * omega**2 * tau_g**2 + 1e-15

    def test_gl_and_adaptive_agree(self):
        src = Source(1.0, CircularOrbit((0, 0, 0), 1.0, 10.0))
        r = np.array([0.3, -0.1, 0.2])
        gl = delayed_potential(src, ZeroField(), r, 0.0, KernelParams(1e-3))
        ad = delayed_potential(
            src, ZeroField(), r, 0.0, KernelParams(1e-3, quadrature=AdaptiveSimpson(1e-12))
        )
        assert abs(gl - ad) < 1e-11 * abs(gl)

    def test_adaptive_handles_path_kinks(self):
        tau_g = 1e-3
        a = np.array([0.0, 0.0, 0.01])
        src = Source(2.0, PiecewiseStatic([(-100.0, (0, 0, 0)), (0.0, a)]))
        r = np.array([0.0, 0.1, 0.0])
        t = 7e-4
        phi = delayed_potential_naive(
            src, r, t, KernelParams(tau_g, quadrature=AdaptiveSimpson(1e-12))
        )
        phi_old = -G * 2.0 / np.linalg.norm(r)
        phi_new = -G * 2.0 / np.linalg.norm(r - a)
        exact = (1.0 - math.exp(-t / tau_g)) * phi_new + (
            math.exp(-t / tau_g) - math.exp(-40.0)
        ) * phi_old
        assert abs(phi - exact) < 1e-11 * abs(exact)


class TestDelayedField:
    def test_static_source_field(self):
        src = Source(3.0, Static((0, 0, 0)))
        r = np.array([2.0, 0.0, 0.0])
        g = delayed_field(src, ZeroField(), r, 0.0, KernelParams(1e-3))
        expected = (1.0 - math.exp(-40.0)) * np.array([-G * 3.0 / 4.0, 0.0, 0.0])
        np.testing.assert_allclose(g, expected, rtol=1e-14, atol=1e-26)

    @pytest.mark.parametrize(
        "src,amb,r",
        [
            (Source(1.0, Static((0, 0, 0))), UniformField((0, 0, -9.81)), [0.0, 0.0, 1.0]),
            (Source(1.0, CircularOrbit((0, 0, 0), 1.0, 10.0)), ZeroField(), [0.3, 0.2, 0.1]),
            (
                Source(2.0, PiecewiseStatic([(-100.0, (0, 0, 0)), (0.0, (0, 0, 0.01))])),
                ZeroField(),
                [0.0, 0.1, 0.0],
            ),
        ],
    )
    def test_matches_finite_differences(self, src, amb, r):
        params = KernelParams(1e-3)
        r = np.array(r)
        t = 5e-4
        g = delayed_field(src, amb, r, t, params)
        h = 1e-6 * np.linalg.norm(r)
        fd = np.empty(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd[i] = -(
                delayed_potential(src, amb, r + e, t, params)
                - delayed_potential(src, amb, r - e, t, params)
            ) / (2.0 * h)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6 * np.linalg.norm(g))


class TestSuperposition:
    def test_empty_scene(self):
        assert superposed_potential([], ZeroField(), np.ones(3), 0.0, KernelParams(1e-3)) == 0.0

    def test_two_symmetric_sources(self):
        params = KernelParams(1e-3)
        pair = [Source(1.0, Static((1.0, 0, 0))), Source(1.0, Static((-1.0, 0, 0)))]
        r = np.array([0.0, 2.0, 0.0])
        single = delayed_potential(pair[0], ZeroField(), r, 0.0, params)
        total = superposed_potential(pair, ZeroField(), r, 0.0, params)
        assert abs(total - 2.0 * single) < 1e-15 * abs(total)

    def test_singular_source_is_identified(self):
        params = KernelParams(1e-3)
        sources = [
            Source(1.0, Static((1.0, 0, 0))),
            Source(1.0, Static((0.0, 0, 0))),
        ]
        with pytest.raises(SingularApproach) as exc:
            superposed_potential(sources, ZeroField(), np.zeros(3), 0.0, params)
        assert exc.value.source_index == 1


class TestSceneEvaluation:
    def scene(self):
        sources = [
            Source(2.0, Static((0, 0, 0))),
            Source(1.0, CircularOrbit((0, 0, 0), 1.0, 10.0)),
        ]
        return sources, UniformField((0, 0, -9.81))

    def test_prepared_scene_weight_totals(self):
        sources, amb = self.scene()
        params = KernelParams(1e-3)
        scene = prepare_scene(sources, amb, 0.0, params)
        expected = -G * (2.0 + 1.0) * (1.0 - math.exp(-40.0))
        assert abs(scene.weights.sum() - expected) < 1e-15 * abs(expected)
        assert scene.positions.shape == scene.weights.shape + (3,)

    def test_prepare_scene_rejects_adaptive(self):
        sources, amb = self.scene()
        with pytest.raises(ValueError):
            prepare_scene(sources, amb, 0.0, KernelParams(1e-3, quadrature=AdaptiveSimpson()))

    def test_matches_per_point_evaluators(self):
        sources, amb = self.scene()
        params = KernelParams(1e-3)
        rng = np.random.default_rng(11)
        pts = rng.uniform(-1, 1, (7, 3)) + np.array([0.0, 0.0, 3.0])
        phi, grad, singular = scene_potential_field(sources, amb, pts, 0.0, params)
        assert not singular.any()
        for k, r in enumerate(pts):
            expected = superposed_potential(sources, amb, r, 0.0, params)
            assert abs(phi[k] - expected) < 1e-12 * abs(expected)
            gsum = sum(delayed_field(s, amb, r, 0.0, params) for s in sources)
            np.testing.assert_allclose(grad[k], gsum, rtol=1e-12, atol=1e-25)

    def test_singular_points_masked_not_fatal(self):
        sources, amb = self.scene()
        params = KernelParams(1e-3)
        pts = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 0.0], [0.0, 0.0, -2.0]])
        phi, grad, singular = scene_potential_field(sources, amb, pts, 0.0, params)
        assert list(singular) == [False, True, False]
        assert np.isnan(phi[1]) and np.isnan(grad[1]).all()
        assert np.isfinite(phi[[0, 2]]).all() and np.isfinite(grad[[0, 2]]).all()

    def test_thread_count_does_not_change_bytes(self):
        sources, amb = self.scene()
        params = KernelParams(1e-3)
        rng = np.random.default_rng(5)
        pts = rng.uniform(-2, 2, (1100, 3)) + np.array([0.0, 0.0, 4.0])
        phi1, grad1, _ = scene_potential_field(sources, amb, pts, 0.0, params, threads=1)
        phi5, grad5, _ = scene_potential_field(sources, amb, pts, 0.0, params, threads=5)
        assert phi1.tobytes() == phi5.tobytes()
        assert grad1.tobytes() == grad5.tobytes()

    def test_adaptive_scheme_scene_agrees(self):
        sources, amb = self.scene()
        pts = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 0.0], [1.5, -0.5, 1.0]])
        gl = scene_potential_field(sources, amb, pts, 0.0, KernelParams(1e-3))
        ad = scene_potential_field(
            sources, amb, pts, 0.0, KernelParams(1e-3, quadrature=AdaptiveSimpson(1e-12))
        )
        assert list(gl[2]) == list(ad[2])
        good = ~gl[2]
        np.testing.assert_allclose(ad[0][good], gl[0][good], rtol=1e-10)
        np.testing.assert_allclose(ad[1][good], gl[1][good], rtol=1e-9, atol=1e-22)
