import math

import numpy as np
import pytest
from pytest import approx

from ricci_forge.constructions import eguchi_hanson_chart
from ricci_forge.curvature import BergerMetric, WarpedMetric, berger_conditions, ricci_warped
from ricci_forge.errors import OracleError, ParameterError, PreconditionError
from ricci_forge.profiles import PolyTerm, ScalarProfile, SinTerm
from ricci_forge.tensor_oracle import (
    ChartMetric,
    berger_metric_chart,
    christoffel,
    euclidean_chart,
    model_rho_chart,
    model_u_chart,
    ricci_eigen_min,
    ricci_eigenvalues,
    ricci_tensor,
    round_s2_chart,
    warped_chart,
    warped_metric_chart,
)

EH_POINT = (2.0, math.pi / 3, 1.0, 2.0)


def sphere_chart():
    return warped_chart(np.sin, 3, (0.0, math.pi), name="s4")


class TestChristoffel:
    def test_flat(self):
        gamma = christoffel(euclidean_chart(), (0.3, -1.0, 2.0, 0.5))
        assert np.max(np.abs(gamma)) < 1e-10

    def test_round_sphere_symbols(self):
        gamma = christoffel(round_s2_chart(), (math.pi / 3, 1.0))
        assert gamma[0, 1, 1] == approx(-math.sqrt(3) / 4, abs=1e-6)
        assert gamma[1, 0, 1] == approx(1 / math.tan(math.pi / 3), abs=1e-6)

    def test_symmetric_in_lower_indices(self):
        gamma = christoffel(eguchi_hanson_chart(1.0), EH_POINT)
        assert gamma == approx(np.swapaxes(gamma, 1, 2), abs=1e-8)
        assert np.all(np.isfinite(gamma))

    def test_singular_metric(self):
        def degenerate(x):
            out = np.zeros((x.shape[0], 2, 2))
            out[:, 0, 0] = 1.0
            return out

        chart = ChartMetric(2, degenerate, "degenerate", ((-1.0, 1.0), (-1.0, 1.0)))
        with pytest.raises(OracleError) as info:
            christoffel(chart, (0.0, 0.0))
        assert info.value.condition_number is not None

    def test_point_too_close_to_boundary(self):
        with pytest.raises(PreconditionError):
            christoffel(round_s2_chart(), (1e-5, 1.0))

    def test_invalid_step(self):
        with pytest.raises(ParameterError):
            christoffel(euclidean_chart(), (0.0, 0.0, 0.0, 0.0), h=0.0)


class TestRicciTensor:
    def test_flat(self):
        ricci = ricci_tensor(euclidean_chart(), (0.1, 0.2, 0.3, 0.4))
        assert np.max(np.abs(ricci)) < 1e-8

    def test_round_sphere_is_einstein(self):
        chart = sphere_chart()
        x = (math.pi / 3, 1.0, 1.2, 2.0)
        ricci = ricci_tensor(chart, x)
        metric = chart.metric_at(x)
        assert ricci == approx(3 * metric, rel=1e-4, abs=1e-6)

    def test_eguchi_hanson_is_ricci_flat(self):
        chart = eguchi_hanson_chart(1.0)
        rng = np.random.default_rng(20)
        points = [EH_POINT] + [
            (r, theta, phi, psi)
            for r, theta, phi, psi in zip(rng.uniform(1.1, 5.0, 5), rng.uniform(0.3, 2.8, 5),
                                          rng.uniform(0.3, 5.9, 5), rng.uniform(0.3, 5.9, 5))
        ]
        for point in points:
            ricci = ricci_tensor(chart, point, richardson=True)
            assert np.max(np.abs(ricci)) <= 1e-4


class TestEigenvalues:
    def test_flat(self):
        assert ricci_eigen_min(euclidean_chart(), (0.0, 0.0, 0.0, 0.0)) == approx(0.0, abs=1e-8)

    def test_round_sphere(self):
        assert ricci_eigen_min(sphere_chart(), (1.0, 1.0, 1.0, 1.0)) == approx(3.0, abs=1e-3)

    def test_model_metric_lower_bound(self):
        assert ricci_eigen_min(model_u_chart(), (1.0, 1.0, 1.0, 1.0)) == approx(12.0, abs=1e-2)

    def test_model_metric_bound_across_radii(self):
        for u in np.geomspace(0.1, 10.0, 10):
            assert ricci_eigen_min(model_u_chart(), (u, 1.0, 1.2, 2.0)) >= 12.0 - 1e-2

    def test_model_metric_is_a_small_round_sphere(self):
        warp = ScalarProfile.piecewise([(0.0, math.pi / 2, SinTerm(amplitude=0.5, frequency=2.0))])
        for sigma in (0.2, 0.5, 1.0, 1.4):
            assert ricci_warped(WarpedMetric(warp), sigma) == approx((12.0, 12.0), abs=1e-6)

    def test_model_metric_charts_agree(self):
        angles = (1.0, 1.2, 2.0)
        for rho in (0.5, 1.0, 2.0):
            u = math.tan(rho / 2)
            in_u = ricci_eigenvalues(model_u_chart(), (u,) + angles)
            in_rho = ricci_eigenvalues(model_rho_chart(), (rho,) + angles)
            assert in_u == approx(in_rho, abs=1e-3)

    def test_matches_closed_form_warped(self):
        warp = ScalarProfile.piecewise([(0.0, 2.0, PolyTerm((0.0, 1.0, 0.0, -0.1)))])
        metric = WarpedMetric(warp)
        chart = warped_metric_chart(metric)
        rng = np.random.default_rng(11)
        for r in rng.uniform(0.2, 1.8, 10):
            point = (r, 1.0, 1.3, 2.0)
            expected = min(ricci_warped(metric, r))
            assert ricci_eigen_min(chart, point, richardson=True) == approx(expected, abs=1e-4)

    @pytest.mark.parametrize("term, sign", [
        (SinTerm(), 1.0),
        (PolyTerm((1.0, 0.0, 1.0)), -1.0),
    ])
    def test_berger_condition_signs_match_oracle(self, term, sign):
        profile = ScalarProfile.piecewise([(0.1, 2.5, term)])
        metric = BergerMetric(profile, profile)
        chart = berger_metric_chart(metric)
        for r in (0.5, 1.0, 2.0):
            conditions = min(berger_conditions(metric, r))
            oracle = ricci_eigen_min(chart, (r, 0.6, 1.0, 2.0), richardson=True)
            assert math.copysign(1.0, conditions) == sign
            assert math.copysign(1.0, oracle) == sign


def random_berger_pair(seed):
    """Парні seed: угнуті профілі (усі умови > 0), непарні: опуклі (q1 < 0)"""
    rng = np.random.default_rng(seed)
    sign = -1.0 if seed % 2 == 0 else 1.0
    rho0 = rng.uniform(1.0, 2.0)
    profiles = []
    for value in (rho0, rho0 * rng.uniform(0.9, 1.1)):
        coefficients = (value, rng.uniform(-0.2, 0.2), sign * rng.uniform(0.3, 0.6), rng.uniform(-0.2, 0.2))
        profiles.append(ScalarProfile.piecewise([(0.7, 1.3, PolyTerm(coefficients, origin=1.0))]))
    return BergerMetric(*profiles), rng.uniform(0.8, 1.2, 10)


class TestRandomBerger:
    @pytest.mark.parametrize("seed", range(10))
    def test_conditions_are_scaled_oracle_eigenvalues(self, seed):
        metric, radii = random_berger_pair(seed)
        chart = berger_metric_chart(metric)
        for r in radii:
            q1, q2, q3 = berger_conditions(metric, r)
            rho, phi = metric.rho(r), metric.phi(r)
            # рамка (e_r, e_fiber, e_2, e_3) діагоналізує Ric
            expected = np.sort([q1, q2 / rho ** 2, q3 / phi ** 2, q3 / phi ** 2])
            oracle = ricci_eigenvalues(chart, (r, 0.6, 1.0, 2.0), richardson=True)
            assert oracle == approx(expected, rel=1e-4, abs=2e-4)
            assert math.copysign(1.0, min(q1, q2, q3)) == (1.0 if seed % 2 == 0 else -1.0)
