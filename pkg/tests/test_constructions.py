import json
import math

import numpy as np
import pytest
from pytest import approx

from ricci_forge.config import BERGER_THRESHOLD_N4
from ricci_forge.constructions import (
    MetricFamilySpec,
    build_family,
    build_m_closed_profile,
    build_m_profile,
    build_n_closed_profiles,
    build_n_profiles,
    cone_chart,
    conformal_factor_profile,
    conformal_modified,
    eguchi_hanson_chart,
    eguchi_hanson_u_chart,
    eh_angular_involution,
    eh_embedding,
    eh_sigma_z_coefficient,
    limit_suspension,
    make_params,
    model_sigma_chart,
    round_sphere_family,
    warped_family,
)
from ricci_forge.curvature import ricci_warped
from ricci_forge.errors import ParameterError
from ricci_forge.groups import iota
from ricci_forge.profiles import check_regularity, sine_profile

ANGLES = (1.0, 2.0, 2.5)


class TestParams:
    def test_ranges(self):
        with pytest.raises(ParameterError):
            make_params(d=0.7)
        with pytest.raises(ParameterError):
            make_params(b=0.5, b_prime=0.4)
        with pytest.raises(ParameterError):
            make_params(a=-1.0)

    def test_half_cap_allowed(self):
        assert make_params(c=0.05, d=0.5).d == 0.5

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            build_family("taub_nut", make_params(c=0.1))


class TestEguchiHanson:
    def test_radial_coefficient(self):
        metric = eguchi_hanson_chart(1.0).metric_at((2.0,) + ANGLES)
        assert metric[0, 0] == approx(16 / 15)

    def test_fiber_degenerates_at_bolt(self):
        assert eh_sigma_z_coefficient(1.0, 1.0 + 1e-9) == approx(0.0, abs=1e-8)
        assert eh_sigma_z_coefficient(1.0, 2.0) == approx(4 * (1 - 1 / 16))

    def test_small_scale_approaches_cone(self):
        x = (2.0,) + ANGLES
        assert eguchi_hanson_chart(1e-4).metric_at(x) == approx(cone_chart().metric_at(x), abs=1e-12)

    def test_metric_is_positive_definite(self):
        chart = eguchi_hanson_chart(1.0)
        assert chart.is_positive_definite(chart.sample_points(20, margin=0.01))

    def test_angular_involution_comes_from_iota(self):
        x = np.array([[2.0, 1.0, 2.0, 2.5], [3.0, 0.4, 5.0, 0.3]])
        image = eh_embedding(eh_angular_involution(x))
        expected = eh_embedding(x) @ iota().matrices[1].T
        for got, want in zip(image, expected):
            assert np.allclose(got, want, atol=1e-12) or np.allclose(got, -want, atol=1e-12)

    def test_angular_involution_is_an_isometry(self):
        chart = eguchi_hanson_chart(1.0)
        flip = np.diag([1.0, -1.0, 1.0, -1.0])
        for point in ((2.0, 1.0, 2.0, 2.5), (1.5, 2.2, 0.7, 4.0)):
            moved = eh_angular_involution(np.array(point))[0]
            assert flip @ chart.metric_at(tuple(moved)) @ flip == approx(chart.metric_at(point), abs=1e-12)

    def test_invalid_scale(self):
        with pytest.raises(ParameterError):
            eguchi_hanson_chart(0.0)


class TestConformal:
    def test_factor_profile_shape(self):
        h = conformal_factor_profile()
        flat = np.linspace(0.0, 0.25, 20)
        assert h(flat) == approx(np.ones_like(flat), abs=1e-12)
        assert h(2.0) == approx(5.0, abs=1e-10)
        assert check_regularity(h, np.linspace(0.0, 3.0, 3001)).convex

    def test_modified_chart(self):
        a = 0.05
        chart = conformal_modified(make_params(a=a), conformal_factor_profile(), certify=False)
        t_of_u = chart.metadata["t_of_u"]
        u = np.linspace(0.0, 3.0, 301)
        assert t_of_u(0.0) == approx(0.0, abs=1e-14)
        assert np.all(np.diff(t_of_u(u)) > 0)

        inner = (0.1,) + ANGLES
        assert chart.metric_at(inner) == approx(eguchi_hanson_u_chart(a).metric_at(inner), rel=1e-12)

        model = model_sigma_chart()
        for value in (0.9, 1.0, 1.15):
            x = (value,) + ANGLES
            assert np.max(np.abs(chart.metric_at(x) - model.metric_at(x))) < 1e-2

    @pytest.mark.slow
    def test_certified_build(self):
        chart = conformal_modified(make_params(a=0.05), conformal_factor_profile())
        assert chart.metadata["certificate"].passed


class TestMOpen:
    def test_cone_region_and_relation(self):
        spec = build_m_profile(None, 0.3)
        c = spec.params.c
        assert c == approx(math.sin(0.3) / 2, abs=1e-12)
        assert spec.profiles["warp"](2.0) == approx(3 * c, rel=1e-14)
        assert spec.group == "iota"
        assert spec.passed

    def test_profile_is_concave_and_one_lipschitz(self):
        spec = build_m_profile(None, 0.3)
        report = spec.regularity["warp"]
        assert report.concave
        assert report.lipschitz_constant <= 1 + 1e-9

    def test_relation_enforced(self):
        with pytest.raises(ParameterError):
            build_m_profile(0.2, 0.3)


class TestMClosed:
    C, D = 0.05, 0.25

    @pytest.fixture(scope="class")
    def spec(self):
        return build_m_closed_profile(self.C, self.D)

    def test_mirror_symmetry(self, spec):
        warp = spec.profiles["warp"]
        grid = np.linspace(0.0, math.pi, 1001)
        assert np.max(np.abs(warp(grid) - warp(math.pi - grid))) <= 1e-12

    def test_middle_formula(self, spec):
        c, d = self.C, self.D
        expected = c / 2 - c / 2 * math.sin(0.9 * d) + c * d
        assert spec.profiles["warp"](math.pi / 2) == approx(expected, rel=1e-14)
        assert spec.residuals["middle_vs_built"] == approx(0.0, abs=1e-14)
        assert "middle_vs_stated" in spec.residuals

    def test_close_to_limit(self, spec):
        assert spec.residuals["limit_deviation"] <= self.C * self.D + 1e-12

    def test_caps_close_up(self, spec):
        warp = spec.profiles["warp"]
        assert warp(1e-4) <= 1e-4
        assert warp(math.pi - 1e-4) <= 1e-4
        assert abs(spec.residuals["endpoint_left"]) <= 1e-6

    def test_certificate_and_regularity(self, spec):
        assert spec.passed
        assert spec.regularity["warp"].concave
        assert spec.quotient_order == 4
        assert spec.closed

    def test_certificate_grid_reaches_the_cap(self, spec):
        cap_scale = spec.scale_factors["cap_scale"]
        assert spec.certificate.grid.lo <= 0.01 * cap_scale * (1 + 1e-12)
        assert spec.certificate.grid.hi >= math.pi - 0.01 * cap_scale * (1 + 1e-12)

    def test_invalid_cap(self):
        with pytest.raises(ParameterError):
            build_m_closed_profile(0.05, 0.6)
        with pytest.raises(ParameterError):
            build_m_closed_profile(0.6, 0.25)


class TestNOpen:
    def test_exact_regions(self):
        spec = build_n_profiles(4, 0.01, certify=False)
        assert spec.profiles["rho"](0.5) == approx(2.0, rel=1e-15)
        assert spec.profiles["phi"](0.5) == approx(4.0, rel=1e-15)
        assert spec.profiles["phi"](3.0) == approx(4.02, rel=1e-15)

    def test_parity_near_origin(self):
        spec = build_n_profiles(4, 0.01, certify=False)
        assert spec.residuals["rho_odd"] <= 1e-12
        assert spec.residuals["phi_even"] <= 1e-12

    def test_invalid(self):
        with pytest.raises(ParameterError):
            build_n_profiles(0, 0.01)
        with pytest.raises(ParameterError):
            build_n_profiles(4, 5.0)

    def test_serialized_spec_restores(self):
        spec = build_n_profiles(4, 0.01, r_max=10.0, certify=False)
        data = json.loads(json.dumps(spec.to_dict()))
        restored = MetricFamilySpec.from_dict(data)
        grid = np.linspace(0.0, 10.0, 41)
        assert restored.kind == "N_open"
        assert restored.quotient_order == 4
        assert restored.profiles["rho"](grid) == approx(spec.profiles["rho"](grid), abs=1e-12)

    def test_reproducible(self):
        first = build_n_profiles(4, 0.01, r_max=10.0, certify=False).to_dict()
        second = build_n_profiles(4, 0.01, r_max=10.0, certify=False).to_dict()
        assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)


class TestNClosed:
    C, D = BERGER_THRESHOLD_N4 / 2, 0.25

    @pytest.fixture(scope="class")
    def spec(self):
        return build_n_closed_profiles(self.C, self.D)

    def test_certificate(self, spec):
        assert spec.passed
        assert spec.group == "mu_4"

    def test_mirror_symmetry(self, spec):
        grid = np.linspace(0.0, math.pi, 1001)
        for name in ("rho", "phi"):
            profile = spec.profiles[name]
            assert np.max(np.abs(profile(grid) - profile(math.pi - grid))) <= 1e-12

    def test_middle_matches_warped_family(self, spec):
        m_closed = build_m_closed_profile(self.C, self.D)
        grid = np.linspace(self.D, math.pi - self.D, 101)
        assert spec.profiles["rho"](grid) == approx(m_closed.profiles["warp"](grid), rel=1e-13)
        assert spec.residuals["rho_phi_shared"] <= 1e-13

    def test_certificate_grid_reaches_the_core(self, spec):
        factor = spec.scale_factors["lambda"] * spec.scale_factors["cap_scale"]
        grid = spec.certificate.grid
        assert grid.lo <= 0.75 * factor
        assert grid.hi >= math.pi - 0.75 * factor

    def test_large_c_fails_in_the_core(self):
        spec = build_n_closed_profiles(0.3, self.D)
        factor = spec.scale_factors["lambda"] * spec.scale_factors["cap_scale"]
        certificate = spec.certificate
        assert not certificate.passed
        failing = [w for value, w in zip(certificate.min_values, certificate.witness_points)
                   if value < -certificate.tolerance]
        assert failing
        for w in failing:
            assert 0.75 * factor <= min(w, math.pi - w) <= 1.25 * factor
        assert not build_n_profiles(4, 0.3).certificate.passed


class TestLimitSuspension:
    def test_peak_and_curvature(self):
        spec = limit_suspension(0.5)
        assert spec.profiles["warp"](math.pi / 2) == approx(0.5)
        assert spec.passed
        radial, spherical = ricci_warped(spec.metric(), 1.0)
        assert radial == approx(3.0)
        assert spherical > 3.0

    def test_unit_scale_is_round(self):
        assert ricci_warped(limit_suspension(1.0).metric(), 1.0) == approx((3.0, 3.0))

    def test_invalid(self):
        with pytest.raises(ParameterError):
            limit_suspension(0.0)


def test_generic_families():
    spec = warped_family(sine_profile())
    assert spec.passed
    assert round_sphere_family().group == "trivial"
