import math

import mpmath
import numpy as np
import pytest

from ridgeloc import (ALGORITHMS, CameraIntrinsics, EmptyCell, GeometryInfeasible, NoiseSpec, ScenarioSpec,
                      UnboundedError, aggregate_stats, generate_arc_scenario, inject_noise, intersection_error_bound,
                      run_monte_carlo, synthesize_observations, vision_residuals)
from ridgeloc.simulation import TrialRecord, trial_rng

from conftest import QUIET, SIM_NOISE


def los_angle(sc, i, j):
    a = sc.target - sc.true_poses[i].position
    b = sc.target - sc.true_poses[j].position
    return math.acos(np.clip(a @ b / np.linalg.norm(a) / np.linalg.norm(b), -1, 1))


class TestScenario:
    def test_observation_angle(self):
        sc = generate_arc_scenario(ScenarioSpec(gamma=45, height=2000, slant_range=5000))
        for p in sc.true_poses:
            los = sc.target - p.position
            theta = math.degrees(math.acos(-los[2] / np.linalg.norm(los)))
            assert theta == pytest.approx(66.42, abs=0.01)

    @pytest.mark.parametrize("gamma", [10, 33.3, 60, 80])
    def test_end_rays_subtend_gamma(self, gamma):
        sc = generate_arc_scenario(ScenarioSpec(gamma=gamma, n_obs=7))
        assert los_angle(sc, 0, -1) == pytest.approx(math.radians(gamma), abs=1e-9)

    def test_two_poses(self):
        sc = generate_arc_scenario(ScenarioSpec(gamma=60, n_obs=2))
        assert len(sc.true_poses) == 2
        assert los_angle(sc, 0, 1) == pytest.approx(math.radians(60), abs=1e-9)

    def test_line_trajectory(self):
        sc = generate_arc_scenario(ScenarioSpec(gamma=30, n_obs=5, trajectory="line"))
        assert los_angle(sc, 0, -1) == pytest.approx(math.radians(30), abs=1e-9)

    def test_unreachable_angle(self):
        with pytest.raises(GeometryInfeasible):
            generate_arc_scenario(ScenarioSpec(gamma=170))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ScenarioSpec(height=6000)
        with pytest.raises(ValueError):
            ScenarioSpec(n_obs=1)


class TestSynthesize:
    def test_boresight_pixels(self):
        cam = CameraIntrinsics(1200, 1200, 320, 240)
        obs = synthesize_observations(generate_arc_scenario(ScenarioSpec(gamma=40, camera=cam)))
        np.testing.assert_allclose(obs.pixels, np.tile([320, 240], (10, 1)), atol=1e-9)

    def test_ranges_equal_slant(self):
        obs = synthesize_observations(generate_arc_scenario(ScenarioSpec(gamma=40)))
        np.testing.assert_allclose([r.range for r in obs.ranges], 5000.0, atol=1e-9)

    def test_residuals_vanish_at_truth(self):
        sc = generate_arc_scenario(ScenarioSpec(gamma=40))
        np.testing.assert_allclose(vision_residuals(synthesize_observations(sc).vision, sc.target), 0, atol=1e-9)


class TestNoise:
    def setup_method(self):
        self.sc = generate_arc_scenario(ScenarioSpec(gamma=30))
        self.obs = synthesize_observations(self.sc)

    def test_zero_sigmas_change_nothing(self):
        out = inject_noise(self.sc, self.obs, QUIET, 1)
        np.testing.assert_array_equal(out.pixels, self.obs.pixels)
        for a, b in zip(out.vision, self.obs.vision):
            np.testing.assert_allclose(a.projection.array, b.projection.array, rtol=1e-15, atol=1e-9)
        assert [r.range for r in out.ranges] == [r.range for r in self.obs.ranges]

    def test_same_seed_same_output(self):
        a = inject_noise(self.sc, self.obs, SIM_NOISE, 42)
        b = inject_noise(self.sc, self.obs, SIM_NOISE, 42)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        assert [r.range for r in a.ranges] == [r.range for r in b.ranges]
        assert all(x.projection == y.projection for x, y in zip(a.vision, b.vision))

    def test_range_sigma(self):
        sc = generate_arc_scenario(ScenarioSpec(gamma=30, n_obs=1000))
        obs = synthesize_observations(sc)
        noise = NoiseSpec(0.0, 2.5, 0.0, 0.0)
        draws = np.concatenate([[r.range for r in inject_noise(sc, obs, noise, trial_rng(7, t)).ranges]
                                for t in range(100)]) - 5000.0
        assert draws.size == 100_000
        assert 2.46 <= np.std(draws, ddof=1) <= 2.54

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            NoiseSpec(pos_sigma=-1.0)


class TestMonteCarlo:
    def test_noise_free_single_trial(self):
        recs = run_monte_carlo(ScenarioSpec(gamma=25), QUIET, ALGORITHMS, trials=1, seed=0)
        assert [r.algorithm for r in recs] == list(ALGORITHMS)
        assert all(r.error < 1e-6 for r in recs)

    def test_repeatable(self):
        a = run_monte_carlo(ScenarioSpec(gamma=20), SIM_NOISE, ALGORITHMS, trials=20, seed=5)
        b = run_monte_carlo(ScenarioSpec(gamma=20), SIM_NOISE, ALGORITHMS, trials=20, seed=5)
        assert a == b

    def test_engines_agree(self):
        spec = ScenarioSpec(gamma=15)
        a = run_monte_carlo(spec, SIM_NOISE, ALGORITHMS, trials=40, seed=3, engine="batch")
        b = run_monte_carlo(spec, SIM_NOISE, ALGORITHMS, trials=40, seed=3, engine="scalar")
        assert [(r.trial, r.algorithm, r.converged, r.iterations) for r in a] == \
               [(r.trial, r.algorithm, r.converged, r.iterations) for r in b]
        np.testing.assert_allclose([r.error for r in a], [r.error for r in b], rtol=0, atol=1e-8)

    def test_trial_streams_are_independent_of_count(self):
        a = run_monte_carlo(ScenarioSpec(gamma=40), SIM_NOISE, ("vision",), trials=5, seed=1)
        b = run_monte_carlo(ScenarioSpec(gamma=40), SIM_NOISE, ("vision",), trials=3, seed=1)
        assert a[:3] == b

    def test_narrow_angle_hurts_vision(self):
        med = {}
        for g in (10.0, 80.0):
            recs = run_monte_carlo(ScenarioSpec(gamma=g), SIM_NOISE, ("vision",), trials=1000, seed=42)
            med[g] = np.median([r.error for r in recs if r.converged])
        assert med[10.0] / med[80.0] > 3

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            run_monte_carlo(ScenarioSpec(), SIM_NOISE, ("vision",), trials=0)
        with pytest.raises(ValueError):
            run_monte_carlo(ScenarioSpec(), SIM_NOISE, ("sonar",), trials=1)


class TestAggregate:
    @staticmethod
    def recs(errors, algo="fused", converged=None):
        converged = converged or [True] * len(errors)
        return [TrialRecord(30.0, i, algo, e, c, 3) for i, (e, c) in enumerate(zip(errors, converged))]

    def test_median(self):
        assert aggregate_stats(self.recs([1.0, 2.0, 3.0]))[0].median_error == 2.0

    def test_rms(self):
        assert aggregate_stats(self.recs([3.0, 4.0]))[0].rms_error == pytest.approx(math.sqrt(12.5))

    def test_empty(self):
        with pytest.raises(EmptyCell):
            aggregate_stats([])

    def test_unconverged_trials_are_excluded(self):
        s = aggregate_stats(self.recs([1.0, 100.0, 3.0], converged=[True, False, True]))[0]
        assert s.median_error == 2.0 and s.trials == 3 and s.converged_fraction == pytest.approx(2 / 3)

    def test_cells_are_sorted(self):
        recs = self.recs([1.0], "vision") + self.recs([1.0], "fused")
        assert [s.algorithm for s in aggregate_stats(recs)] == ["fused", "vision"]


class TestErrorBound:
    def test_zero_delta(self):
        for g in (5.0, 60.0, 170.0):
            assert intersection_error_bound(g, 0.0, 1000.0) == 0.0

    def test_unbounded(self):
        with pytest.raises(UnboundedError):
            intersection_error_bound(90.0, 45.0, 1000.0)

    def test_high_precision_value(self):
        mpmath.mp.dps = 40
        ref = 1000 / mpmath.tan(mpmath.radians(29.9)) - 1000 / mpmath.tan(mpmath.radians(30))
        got = intersection_error_bound(60.0, 0.1, 1000.0)
        assert got == pytest.approx(float(ref), rel=1e-12)
        assert got == pytest.approx(7.0, abs=0.01)

    def test_grows_as_angle_narrows(self):
        g = np.linspace(10, 170, 50)
        e = [intersection_error_bound(x, 0.1, 1000.0) for x in g]
        assert all(a > b for a, b in zip(e, e[1:]))
