import math

import numpy as np
import pytest

from hamstab.errors import OrbitError, ProjectionError
from hamstab.experiments import destabilization_run, planar_decay_fit, stabilization_run
from hamstab.fields import ScalarField, hamiltonian_field
from hamstab.integrate import IntegratorConfig, integrate
from hamstab.orbits import (fit_exponential_rate, find_periodic_orbit, floquet_analysis,
                            offset_from_orbit, orbit_distance, orbit_integral, phase_align,
                            predicted_multipliers, project_to_fiber, project_to_level)
from hamstab.perturbation import Mode, PerturbationSpec
from hamstab.systems import harmonic2d, rigid_body


def spec(sys, mode, h=-1.0, c=2.0, gain=1.0):
    g = ScalarField.constant(gain)
    return PerturbationSpec(sys, h, c, mode, g, g)


class TestProjection:
    def test_on_fiber_unchanged(self, rik):
        assert np.allclose(project_to_fiber(rik, -1, 2, [1, 1, 1]), [1, 1, 1], atol=1e-14)

    def test_converges(self, rik):
        u = project_to_fiber(rik, -1, 2, [1.05, 0.95, 1.0])
        assert abs(rik.H.eval(u) + 1) <= 1e-12 and abs(rik.C.eval(u) - 2) <= 1e-12
        assert np.linalg.norm(u - [1.05, 0.95, 1.0]) < 0.2

    def test_equilibrium_guess_fails(self, rik):
        with pytest.raises(ProjectionError):
            project_to_fiber(rik, -1, 2, [0, 0, 1])

    def test_level(self, rik):
        u = project_to_level(rik.C, 3.0, [1, 1, 1])
        assert rik.C.eval(u) == pytest.approx(3.0, abs=1e-12)


class TestFindOrbit:
    def test_rikitake(self, rik, rik_orbit):
        o = rik_orbit
        assert np.allclose(o.anchor, [1, 1, 1])
        assert o.period > 0 and o.closure <= 1e-6
        assert o.n_samples >= 256 and o.fiber_residual <= 1e-6 and o.min_speed > 0
        X = hamiltonian_field(rik)
        end = integrate(X, o.anchor, o.period, IntegratorConfig("dop853", 1e-12, 1e-14)).final
        assert np.linalg.norm(end - o.anchor) <= 1e-6

    def test_rikitake_fiber_has_no_equilibria(self, rik):
        # on (x,0,1) and (0,0,z) the condition H = -1 forces x = 0 or z = 1, where C = 1;
        # on (0,y,-1) H = y^2/4 + 1 never reaches -1
        for u in ([0.0, 0.0, 1.0],):
            assert rik.H.eval(u) == -1.0 and rik.C.eval(u) == 1.0
        ys = np.linspace(-10, 10, 2001)
        assert min(rik.H.eval([0.0, y, -1.0]) for y in ys) >= 1.0

    def test_harmonic_period(self, circle_orbit):
        assert circle_orbit.period == pytest.approx(2 * np.pi, abs=1e-6)

    def test_rigid_body_orbit(self):
        sys = rigid_body(1, 2, 3)
        u = np.array([1.0, 0.2, 0.1])
        o = find_periodic_orbit(sys, sys.H.eval(u), sys.C.eval(u), u)
        assert o.closure <= 1e-6

    def test_equilibrium_anchor(self, rik):
        # (1,0,1) is on an equilibrium line; project to its own fiber keeps it there
        u = np.array([1.0, 0.0, 1.0])
        with pytest.raises(OrbitError):
            find_periodic_orbit(rik, rik.H.eval(u), rik.C.eval(u), u)

    def test_no_return(self):
        sys = harmonic2d().embedded()
        with pytest.raises(OrbitError):
            find_periodic_orbit(sys, 0.5, 0.0, [1, 0, 0], t_max=1.0)

    def test_interpolant(self, rik_orbit):
        o = rik_orbit
        X = hamiltonian_field(o.system)
        end = integrate(X, o.anchor, o.period / 3, IntegratorConfig("dop853", 1e-12, 1e-14)).final
        assert np.linalg.norm(o.at(o.period / 3) - end) <= 1e-8
        assert np.allclose(o.at(o.period), o.anchor, atol=1e-9)
        assert np.allclose(o.velocity(0.7), X(o.at(0.7)), atol=1e-6)


class TestDistanceAndPhase:
    def test_anchor(self, rik_orbit):
        assert orbit_distance(rik_orbit, rik_orbit.anchor) <= 1e-9

    def test_small_normal_offset(self, rik_orbit):
        x = hamiltonian_field(rik_orbit.system)(rik_orbit.anchor)
        n = np.cross(x, [0.0, 0.0, 1.0])
        u = rik_orbit.anchor + 1e-3 * n / np.linalg.norm(n)
        assert 0.5e-3 <= orbit_distance(rik_orbit, u) <= 1.5e-3

    def test_circle(self, circle_orbit):
        assert orbit_distance(circle_orbit, [2.0, 0, 0]) == pytest.approx(1.0, abs=1e-6)
        assert orbit_distance(circle_orbit, [0.3, 0.4, 0.0]) == pytest.approx(0.5, abs=1e-6)

    def test_phase_of_orbit_itself(self, rik_orbit):
        o = rik_orbit
        theta, resid = phase_align(o, o.at, (0.0, 3 * o.period))
        assert min(theta, o.period - theta) <= 1e-6 and resid <= 1e-9

    def test_phase_shift(self, rik_orbit):
        o = rik_orbit
        X = hamiltonian_field(o.system)
        traj = integrate(X, o.at(o.period / 3), 2 * o.period,
                         IntegratorConfig("dop853", 1e-12, 1e-14, max_step=o.period / 500))
        theta, resid = phase_align(o, traj, (o.period, 2 * o.period))
        assert theta == pytest.approx(o.period / 3, abs=1e-4 * o.period)
        assert resid <= 1e-7

    def test_bad_window(self, rik_orbit):
        with pytest.raises(ValueError):
            phase_align(rik_orbit, rik_orbit.at, (1.0, 1.0))


class TestFloquet:
    @pytest.mark.parametrize("mode", list(Mode))
    def test_matches_prediction(self, rik, rik_orbit, mode):
        rep = floquet_analysis(spec(rik, mode), rik_orbit)
        assert rep.matches(1e-3), rep.to_dict()
        assert rep.trivial_count() == (1 if mode.is_full else 2)
        assert rep.unstable == (not mode.stabilizing)
        assert rep.abel_liouville_error <= 1e-3
        assert np.min(np.abs(rep.computed - 1)) <= 1e-3

    def test_preserve_c_prediction_has_two_ones(self, rik, rik_orbit):
        pred, (eh, ec) = predicted_multipliers(spec(rik, Mode.PRESERVE_C_STABILIZE), rik_orbit)
        assert list(pred[:2]) == [1.0, 1.0] and ec == 0.0
        assert pred[2] == pytest.approx(math.exp(eh))

    def test_destabilizing_prediction_reciprocal(self, rik, rik_orbit):
        p1, _ = predicted_multipliers(spec(rik, Mode.PRESERVE_C_STABILIZE), rik_orbit)
        p2, _ = predicted_multipliers(spec(rik, Mode.PRESERVE_C_DESTABILIZE), rik_orbit)
        assert p2[0] == pytest.approx(1 / p1[-1]) and p2[0] > 1

    def test_rikitake_exponent(self, rik, rik_orbit):
        # the exponent equals -alpha * int |X|^2 dt since nu = 1
        X = hamiltonian_field(rik)
        integral = orbit_integral(rik_orbit, lambda u: X(u) @ X(u))
        _, (eh, _) = predicted_multipliers(spec(rik, Mode.PRESERVE_C_STABILIZE), rik_orbit)
        assert eh == pytest.approx(-integral, rel=1e-12)

    def test_harmonic_multiplier(self, circle_orbit):
        sys = circle_orbit.system
        rep = floquet_analysis(spec(sys, Mode.PRESERVE_C_STABILIZE, 0.5, 0.0), circle_orbit)
        assert abs(rep.computed[-1] - math.exp(-2 * math.pi)) <= 1e-4
        assert rep.predicted[-1] == pytest.approx(math.exp(-2 * math.pi), rel=1e-9)

    def test_report_dict(self, rik, rik_orbit):
        d = floquet_analysis(spec(rik, Mode.FULL_STABILIZE), rik_orbit).to_dict()
        assert set(d) >= {"computed", "predicted", "relative_errors", "exponent_H", "exponent_C",
                          "trivial_count", "match", "unstable"}
        assert len(d["computed"]) == 3


class TestRuns:
    def test_offset_respects_preserved_integral(self, rik, rik_orbit):
        u = offset_from_orbit(rik_orbit, Mode.PRESERVE_C_STABILIZE, 1e-2)
        assert rik.C.eval(u) == pytest.approx(2.0, abs=1e-13)
        assert 0.5e-2 <= orbit_distance(rik_orbit, u) <= 1.5e-2
        u = offset_from_orbit(rik_orbit, Mode.PRESERVE_H_STABILIZE, 1e-2)
        assert rik.H.eval(u) == pytest.approx(-1.0, abs=1e-13)

    def test_preserve_c_decay_rate(self, rik, rik_orbit):
        s = spec(rik, Mode.PRESERVE_C_STABILIZE, gain=0.1)
        res = stabilization_run(s, rik_orbit, delta=1e-3, efolds=25)
        assert np.max(np.abs(res.C_err)) <= 1e-6
        assert res.envelope_monotone
        assert res.fitted_rate == pytest.approx(res.rate, rel=0.1)

    def test_preserve_h_stabilizes(self, rik, rik_orbit):
        s = spec(rik, Mode.PRESERVE_H_STABILIZE, gain=0.2)
        res = stabilization_run(s, rik_orbit, delta=1e-3, efolds=30)
        assert np.max(np.abs(res.H_err)) <= 1e-6
        assert res.final_distance <= 1e-6

    def test_destabilizing_run_grows(self, rik, rik_orbit):
        res = destabilization_run(spec(rik, Mode.PRESERVE_H_DESTABILIZE, gain=0.1), rik_orbit)
        assert res.growth >= 10 and res.t_growth10 <= res.t_end

    def test_stabilization_rejects_destabilizing(self, rik, rik_orbit):
        with pytest.raises(ValueError):
            stabilization_run(spec(rik, Mode.FULL_DESTABILIZE_FLIP_ALPHA), rik_orbit)

    def test_planar_fit(self):
        p = harmonic2d()
        rate, _ = planar_decay_fit(p.mu, p.Hcal, ScalarField.constant(2.0, dim=2), 0.5, [1.0, 0.0],
                                   t_end=15.0)
        assert rate == pytest.approx(-2.0, rel=0.02)


def test_fit_exponential_rate_exact():
    t = np.linspace(0, 10, 1001)
    assert fit_exponential_rate(t, 3 * np.exp(-0.7 * t) * (1 + 0.5 * np.cos(20 * t) ** 2), 1.0) \
        == pytest.approx(-0.7, rel=1e-2)
    with pytest.raises(ValueError):
        fit_exponential_rate(t, np.zeros_like(t), 1.0)
