import math

import numpy as np
import pytest
from pytest import approx

from ricci_forge.config import BERGER_THRESHOLD_N4
from ricci_forge.constructions import build_n_profiles, limit_suspension, round_sphere_family
from ricci_forge.errors import CertificateFailure, ConvergenceFailure, ParameterError, PreconditionError
from ricci_forge.gh import (
    ConvergenceTable,
    Correspondence,
    ConvergenceRow,
    _require_certified,
    convergence_experiment,
    gh_lower,
    gh_upper,
    gh_upper_report,
    require_monotone,
    shared_coordinate_correspondence,
)
from ricci_forge.spaces import diameter, rescale, sample_space


@pytest.fixture(scope="module")
def sphere():
    return sample_space(round_sphere_family(), 200, 1e-3, seed=2)


@pytest.fixture(scope="module")
def suspension():
    return sample_space(limit_suspension(0.1), 120, 1e-3, seed=4)


def table_of(gh_mn, resolution=0.01):
    rows = [ConvergenceRow(i=i, d=1 / i, gh_mn=value, gh_mx=value, gh_nx=value, resolution=resolution,
                           gh_lower_mn=0.0, witness_r_mn=(0.0, 1.0), diameter_m=1.0, diameter_n=1.0,
                           volume_m=1.0, volume_n=1.0, coarse=False)
            for i, value in zip([2, 4, 8, 16], gh_mn)]
    return ConvergenceTable(c=0.065, limit_c=0.0325, n_points=100, seed=7, rows=rows, monotone=True,
                            fitted_c_mn=0.0, fitted_c_mx=0.0, fitted_c_nx=0.0, limit_diameter=1.0,
                            limit_volume=1.0, volume_lower_bound=1.0)


class TestMonotone:
    def test_decreasing_column_passes(self):
        table = table_of([0.4, 0.2, 0.1, 0.05])
        assert require_monotone(table) is table

    def test_increase_within_slack_passes(self):
        require_monotone(table_of([0.4, 0.41, 0.1, 0.05], resolution=0.01))

    def test_increasing_column_fails_with_table(self):
        table = table_of([0.4, 0.2, 0.3, 0.05])
        with pytest.raises(ConvergenceFailure) as info:
            require_monotone(table)
        assert info.value.table is table
        assert "0.3" in str(info.value)


class TestCorrespondence:
    def test_identity_is_surjective(self):
        corr = Correspondence.identity(5).validate()
        assert corr.covers_a.all() and corr.covers_b.all()

    def test_missing_points_rejected(self):
        corr = Correspondence(np.array([[0, 0], [1, 1]]), 3, 2)
        with pytest.raises(PreconditionError):
            corr.validate()

    def test_identical_samples_give_identity(self, suspension):
        corr = shared_coordinate_correspondence(suspension, suspension)
        assert np.array_equal(corr.pairs, Correspondence.identity(suspension.size).pairs)

    def test_nearest_matching_covers_both_sides(self, suspension):
        other = sample_space(limit_suspension(0.1), 90, 1e-3, seed=8)
        corr = shared_coordinate_correspondence(suspension, other).validate()
        assert corr.size_a == suspension.size
        assert corr.size_b == other.size


class TestUpperBound:
    def test_self_distance_is_zero(self, suspension):
        assert gh_upper(suspension, suspension, Correspondence.identity(suspension.size)) == 0.0

    def test_scaled_sphere(self, sphere):
        scaled = rescale(sphere, 2.0)
        value = gh_upper(sphere, scaled, Correspondence.identity(sphere.size))
        assert value == approx(0.5 * diameter(sphere), rel=1e-12)
        assert value == approx(math.pi / 2, abs=3 * sphere.resolution)

    def test_size_mismatch(self, sphere, suspension):
        with pytest.raises(PreconditionError):
            gh_upper(sphere, suspension, Correspondence.identity(sphere.size))

    def test_relabeling_invariance(self, sphere):
        scaled = rescale(sphere, 1.5)
        corr = Correspondence.identity(sphere.size)
        order = np.random.default_rng(1).permutation(sphere.size)
        base = gh_upper(sphere, scaled, corr)
        moved = gh_upper(sphere.permuted(order), scaled, corr.permuted(order, np.arange(sphere.size)))
        assert moved == base

    def test_report_carries_witness_and_lower_bound(self, sphere):
        scaled = rescale(sphere, 0.5)
        report = gh_upper_report(sphere, scaled, Correspondence.identity(sphere.size), threads=2)
        p, q = report.witness_pairs
        assert abs(sphere.distances[p, q] - scaled.distances[p, q]) == approx(2 * report.value)
        assert report.lower <= report.value + report.resolution
        assert report.resolution == approx(sphere.resolution + scaled.resolution)


class TestLowerBound:
    def test_same_space(self, sphere):
        assert gh_lower(sphere, sphere) == 0.0

    def test_half_sphere(self, sphere):
        half = rescale(sphere, 0.5)
        assert gh_lower(sphere, half) == approx(0.5 * diameter(sphere) * 0.5)
        assert gh_lower(sphere, half) == approx(math.pi / 4, abs=2 * sphere.resolution)


class TestConvergence:
    def test_rejects_bad_inputs(self):
        with pytest.raises(ParameterError):
            convergence_experiment(0.05, [4, 2], 50, seed=0)
        with pytest.raises(ParameterError):
            convergence_experiment(0.05, [1, 2], 50, seed=0)
        with pytest.raises(ParameterError):
            convergence_experiment(BERGER_THRESHOLD_N4, [2], 50, seed=0)

    def test_failed_certificate_carries_spec(self):
        spec = build_n_profiles(4, 0.99)
        with pytest.raises(CertificateFailure) as info:
            _require_certified(spec)
        assert info.value.spec is spec

    def test_small_table(self):
        table = convergence_experiment(0.05, [2, 4], 60, seed=3, strict=False)
        assert isinstance(table, ConvergenceTable)
        assert [row.i for row in table.rows] == [2, 4]
        assert [row.d for row in table.rows] == [0.5, 0.25]
        assert table.limit_c == approx(0.025)
        for row in table.rows:
            assert row.gh_lower_mn <= row.gh_mn + 2 * row.resolution
            assert min(row.gh_mn, row.gh_mx, row.gh_nx) >= 0.0
            assert row.diameter_m <= 1.0 + row.resolution
            assert row.volume_m > 0 and row.volume_n > 0
        assert table.limit_diameter == approx(1.0, abs=3 * table.rows[0].resolution)
        assert table.csv_rows()[0][:2] == [2, 0.5]
        assert len(table.csv_rows()[0]) == len(ConvergenceTable.CSV_COLUMNS)

    @pytest.mark.slow
    def test_reference_run(self):
        table = convergence_experiment(BERGER_THRESHOLD_N4 / 2, [2, 4, 8, 16], 2000, seed=7)
        assert table.monotone
        gh_mn = [row.gh_mn for row in table.rows]
        assert gh_mn[-1] < gh_mn[0]
        for row in table.rows:
            assert row.gh_nx <= table.fitted_c_nx / row.i + 2 * row.resolution + 1e-12
