import math

import numpy as np
import pytest
from pytest import approx
from scipy import integrate

from ricci_forge.errors import PreconditionError, ProfileDomainError, UnsupportedOrderError
from ricci_forge.profiles import (
    AffineTerm,
    MollifierKernel,
    ScalarProfile,
    affine_profile,
    check_regularity,
    concave_smooth,
    eval_profile,
    mollify,
    sine_profile,
)


def corner_profile(n=4.0, c=0.1, lo=-1.0, hi=10.0):
    """n r до r = 1, далі n + c (r - 1)"""
    return ScalarProfile.piecewise([
        (lo, 1.0, AffineTerm(0.0, n)),
        (1.0, hi, AffineTerm(n, c, 1.0)),
    ], "rho_hat")


def min_profile():
    return ScalarProfile.piecewise([
        (0.0, 1.0, AffineTerm(0.0, 1.0)),
        (1.0, 3.0, AffineTerm(1.0, 0.0)),
    ], "min")


class TestEvalProfile:
    def test_sine_values(self):
        p = sine_profile()
        assert eval_profile(p, math.pi / 2, 0) == approx(1.0)
        assert eval_profile(p, math.pi / 2, 1) == approx(0.0, abs=1e-15)
        assert eval_profile(p, math.pi / 2, 2) == approx(-1.0)

    def test_affine_slope(self):
        p = affine_profile(4.0, 0.1, anchor=1.0)
        assert eval_profile(p, 3.0, 0) == approx(4.2)
        assert eval_profile(p, 3.0, 1) == approx(0.1)
        assert eval_profile(p, 3.0, 2) == 0.0

    def test_vectorized_matches_scalar(self):
        p = corner_profile()
        grid = np.linspace(0.0, 3.0, 7)
        values = eval_profile(p, grid)
        assert values == approx([eval_profile(p, float(r)) for r in grid])

    def test_breakpoint_uses_right_piece(self):
        p = corner_profile()
        assert eval_profile(p, 1.0, 1) == approx(0.1)

    def test_out_of_domain(self):
        with pytest.raises(ProfileDomainError):
            eval_profile(sine_profile(), 4.0)

    def test_unsupported_order(self):
        with pytest.raises(UnsupportedOrderError):
            eval_profile(sine_profile(), 1.0, 3)

    def test_discontinuous_pieces_rejected(self):
        with pytest.raises(PreconditionError):
            ScalarProfile.piecewise([(0.0, 1.0, AffineTerm(0.0, 1.0)), (1.0, 2.0, AffineTerm(2.0))])

    def test_dict_restores_profile(self):
        p = corner_profile()
        restored = ScalarProfile.from_dict(p.to_dict())
        grid = np.linspace(-0.5, 9.5, 11)
        assert eval_profile(restored, grid) == approx(eval_profile(p, grid))


class TestKernel:
    def test_unit_mass(self):
        assert MollifierKernel(0.25).mass() == approx(1.0, abs=1e-10)

    def test_even_with_compact_support(self):
        kernel = MollifierKernel(0.25)
        s = np.linspace(-0.24, 0.24, 13)
        assert kernel(s) == approx(kernel(-s))
        assert kernel(0.25) == 0.0
        assert kernel(-0.3) == 0.0

    def test_invalid_radius(self):
        with pytest.raises(PreconditionError):
            MollifierKernel(0.0)


class TestMollify:
    def test_constant_and_identity_unchanged(self):
        kernel = MollifierKernel(0.25)
        constant = mollify(affine_profile(4.0, 0.0, lo=0.0, hi=5.0), kernel)
        identity = mollify(affine_profile(0.0, 1.0, lo=0.0, hi=5.0), kernel)
        assert constant(2.0) == approx(4.0)
        assert identity(2.0) == approx(2.0)

    def test_output_domain_shrinks_by_radius(self):
        smoothed = mollify(corner_profile(), MollifierKernel(0.25))
        assert smoothed.domain == approx((-0.75, 9.75))

    def test_unchanged_away_from_corner(self):
        p = corner_profile()
        smoothed = mollify(p, MollifierKernel(0.25))
        for r in (0.0, 0.5, 0.74, 1.26, 3.0, 9.0):
            assert smoothed(r) == approx(p(r), abs=1e-12)

    def test_matches_direct_convolution_near_corner(self):
        p = corner_profile()
        kernel = MollifierKernel(0.25)
        smoothed = mollify(p, kernel)
        for r in (0.8, 0.95, 1.0, 1.1, 1.2):
            direct, _ = integrate.quad(lambda s: p(r - s) * kernel(s), -0.25, 0.25,
                                       points=[r - 1.0], epsabs=1e-13, limit=200)
            assert smoothed(r) == approx(direct, abs=1e-8)

    def test_result_is_concave_and_smooth(self):
        smoothed = mollify(corner_profile(), MollifierKernel(0.25))
        report = check_regularity(smoothed, np.linspace(0.0, 3.0, 3001))
        assert report.concave
        assert report.lipschitz_constant <= 4.0 + 1e-9
        assert report.max_jump(1) < 1e-6

    def test_second_derivative_is_the_kernel(self):
        kernel = MollifierKernel(0.25)
        smoothed = mollify(corner_profile(n=4.0, c=0.1), kernel)
        for r in (0.76, 0.8, 0.9, 1.0, 1.13, 1.2, 1.24):
            assert smoothed(r, 2) == approx((0.1 - 4.0) * kernel(r - 1.0), rel=1e-10, abs=1e-14)
        # між будь-якими вузлами сітки, а не лише у вузлах таблиці
        grid = np.linspace(0.75, 1.25, 10007)
        assert np.all(smoothed(grid, 2) <= 0.0)
        assert np.all(smoothed(grid, 1) >= 0.1 - 1e-12)

    def test_seam_survives_rescaling_and_mirroring(self):
        smoothed = mollify(corner_profile(), MollifierKernel(0.25))
        scaled = smoothed.transformed(0.5, 4.0, 0.0)
        mirrored = smoothed.transformed(2.0, -1.0, 2.0)
        for r in (0.8, 1.0, 1.1, 1.24):
            assert scaled(r / 4.0) == approx(0.5 * smoothed(r), abs=1e-12)
            assert scaled(r / 4.0, 2) == approx(8.0 * smoothed(r, 2), rel=1e-10)
            assert mirrored(2.0 - r) == approx(2.0 * smoothed(r), abs=1e-12)
            assert mirrored(2.0 - r, 1) == approx(-2.0 * smoothed(r, 1), abs=1e-12)
            assert mirrored(2.0 - r, 2) == approx(2.0 * smoothed(r, 2), rel=1e-10)

    def test_window_too_wide(self):
        with pytest.raises(ProfileDomainError):
            mollify(affine_profile(1.0, 0.0, lo=0.0, hi=0.4), MollifierKernel(0.25))


class TestConcaveSmooth:
    def test_replaces_corner_with_concave_insert(self):
        p = min_profile()
        smoothed = concave_smooth(p, 1.0, 0.05)
        grid = np.linspace(0.5, 1.5, 2001)
        report = check_regularity(smoothed, grid)
        assert report.concave
        assert report.lipschitz_constant <= 1.0 + 1e-9
        assert np.all(smoothed(grid) <= p(grid) + 1e-12)
        for r in (0.5, 0.9, 1.1, 2.0):
            assert smoothed(r) == approx(p(r))

    def test_insert_matches_second_derivative_at_edges(self):
        smoothed = concave_smooth(min_profile(), 1.0, 0.05)
        for edge in (0.95, 1.05):
            for order in (0, 1, 2):
                left = smoothed.one_sided(edge, order, "left")
                right = smoothed.one_sided(edge, order, "right")
                assert left == approx(right, abs=1e-9)

    def test_smooth_input_is_returned_unchanged(self):
        p = sine_profile()
        assert concave_smooth(p, math.pi / 4, 0.1) is p

    def test_convex_corner_rejected(self):
        convex = ScalarProfile.piecewise([
            (0.0, 1.0, AffineTerm(1.0, 0.0)),
            (1.0, 3.0, AffineTerm(1.0, 0.5, 1.0)),
        ])
        with pytest.raises(PreconditionError):
            concave_smooth(convex, 1.0, 0.1)

    def test_window_outside_domain(self):
        with pytest.raises(ProfileDomainError):
            concave_smooth(min_profile(), 1.0, 2.0)


class TestRegularity:
    def test_sine_is_concave_and_one_lipschitz(self):
        report = check_regularity(sine_profile(), np.linspace(0.0, math.pi / 2, 501))
        assert report.concave
        assert report.lipschitz_constant <= 1.0 + 1e-9
        assert report.breakpoint_jumps == []

    def test_corner_jump_reported(self):
        report = check_regularity(min_profile(), np.linspace(0.5, 2.0, 301))
        assert report.concave
        assert report.max_jump(1) == approx(1.0)
        assert report.max_jump(0) == 0.0

    def test_lipschitz_constant(self):
        report = check_regularity(affine_profile(0.0, 2.0, hi=1.0), np.linspace(0.0, 1.0, 50))
        assert report.lipschitz_constant == approx(2.0)

    def test_needs_enough_nodes(self):
        with pytest.raises(PreconditionError):
            check_regularity(sine_profile(), np.linspace(0.1, 1.0, 5))
