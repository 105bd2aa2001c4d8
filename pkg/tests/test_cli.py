import math

import pytest
from pytest import approx

from app.db.models import RunStatus
from app.db.repositories.runs import RunRepository
from app.db.session import get_db_session
from app.storage.repositories.reports import ReportRepository
from ricci_forge.cli import EXIT_CERTIFICATE, EXIT_ERROR, EXIT_OK, resolve_config, run
from ricci_forge.config import BERGER_THRESHOLD_N4
from ricci_forge import cli
from ricci_forge.errors import ConvergenceFailure, UsageError
from ricci_forge.gh import ConvergenceRow, ConvergenceTable


def report(out, name):
    found = sorted(out.glob(f"*/{name}"))
    assert len(found) == 1, found
    return ReportRepository.load_json(found[0])


def statuses(out):
    with get_db_session(out) as session:
        return [record.status for record in RunRepository(session).get_recent()]


class TestResolveConfig:
    def test_flags_override_config_file(self, tmp_path):
        config_file = tmp_path / "run.env"
        config_file.write_text("family=suspension\nc=0.2\ngrid=0.01:3:0.01\nseed=5\n")
        config = resolve_config(["volume", "--config", str(config_file), "--c", "0.1"])
        assert config.c == 0.1
        assert config.seed == 5
        assert config.grid == (0.01, 3.0, 0.01)
        assert config.kind == "suspension_limit"

    def test_auto_c(self):
        config = resolve_config(["converge", "--c", "auto", "--i", "2,4"])
        assert config.c == approx(BERGER_THRESHOLD_N4 / 2)
        assert config.i_list == (2, 4)

    def test_run_id_ignores_output_location(self):
        first = resolve_config(["displacement", "--group", "iota", "--out", "a"])
        second = resolve_config(["displacement", "--group", "iota", "--out", "b"])
        third = resolve_config(["displacement", "--group", "mu_4"])
        assert first.run_id() == second.run_id()
        assert first.run_id() != third.run_id()
        assert first.run_id().startswith("displacement-")

    @pytest.mark.parametrize("argv", [
        ["threshold", "--family", "berger"],
        ["verify-curvature"],
        ["displacement"],
        ["converge", "--c", "0.05"],
        ["volume", "--family", "suspension", "--grid", "1:0:0.1"],
        ["volume", "--family", "klein-bottle"],
        ["volume", "--family", "suspension", "--unknown"],
        ["build-spec", "--family", "n-open"],
        ["volume", "--family", "suspension"],
        ["diameter", "--family", "m-closed", "--c", "0.1"],
        ["gh", "--family", "suspension", "--c", "0.1", "--family-b", "n-closed"],
        ["bend-metric"],
    ])
    def test_usage_errors(self, argv):
        with pytest.raises(UsageError):
            resolve_config(argv)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(UsageError):
            resolve_config(["volume", "--family", "suspension", "--config", str(tmp_path / "absent.env")])


class TestRun:
    def test_verify_passing_family(self, tmp_path):
        code = run(["verify-curvature", "--family", "n-open", "--n", "4", "--c", "0.01",
                    "--grid", "0.01:50:0.001", "--out", str(tmp_path)])
        assert code == EXIT_OK
        envelope = report(tmp_path, "certificate.json")
        assert envelope.kind == "curvature_certificate"
        assert envelope.payload["passed"] is True
        assert envelope.config["c"] == 0.01
        assert statuses(tmp_path) == [RunStatus.completed.value]

    def test_verify_failing_family(self, tmp_path):
        code = run(["verify-curvature", "--family", "n-open", "--c", "0.99",
                    "--grid", "0.01:10:0.01", "--out", str(tmp_path)])
        assert code == EXIT_CERTIFICATE
        envelope = report(tmp_path, "certificate.json")
        assert envelope.payload["passed"] is False
        assert envelope.payload["witness_points"]
        assert statuses(tmp_path) == [RunStatus.certificate_failed.value]

    def test_usage_error_exit_code(self, tmp_path):
        assert run(["threshold", "--family", "berger", "--out", str(tmp_path)]) == EXIT_ERROR
        assert run(["volume", "--family", "suspension", "--bogus", "--out", str(tmp_path)]) == EXIT_ERROR

    def test_build_spec_then_reload(self, tmp_path):
        assert run(["build-spec", "--family", "suspension", "--c", "0.3", "--out", str(tmp_path)]) == EXIT_OK
        spec_path = sorted(tmp_path.glob("*/suspension_limit_spec.json"))[0]
        assert sorted(tmp_path.glob("*/suspension_limit_warp.csv"))
        code = run(["verify-curvature", "--spec", str(spec_path), "--grid", "0.01:3.1:0.001",
                    "--out", str(tmp_path)])
        assert code == EXIT_OK

    def test_volume_with_monte_carlo(self, tmp_path):
        code = run(["volume", "--family", "suspension", "--c", "0.1", "--samples", "20000",
                    "--seed", "1", "--out", str(tmp_path)])
        assert code == EXIT_OK
        payload = report(tmp_path, "volume.json").payload
        assert payload["volume"] == approx(2 / 3 * math.pi ** 2 * 1e-3, rel=1e-8)
        assert payload["mc_stderr"] > 0
        assert payload["mc_sigmas"] <= 3

    def test_volume_scaling(self, tmp_path):
        assert run(["volume", "--family", "suspension", "--c", "0.1", "--scale", "2",
                    "--out", str(tmp_path)]) == EXIT_OK
        assert report(tmp_path, "volume.json").payload["volume"] == approx(
            16 * 2 / 3 * math.pi ** 2 * 1e-3, rel=1e-8)

    def test_displacement(self, tmp_path):
        assert run(["displacement", "--group", "iota", "--samples", "2000", "--out", str(tmp_path)]) == EXIT_OK
        payload = report(tmp_path, "displacement.json").payload
        assert payload["value"] == approx(math.pi / 2, abs=1e-9)
        assert payload["trivial"] is False

    def test_threshold_without_sign_change_fails(self, tmp_path):
        code = run(["threshold", "--family", "m-open", "--bracket", "0.05:0.1",
                    "--grid", "0.01:10:0.01", "--out", str(tmp_path)])
        assert code == EXIT_ERROR
        assert statuses(tmp_path) == [RunStatus.failed.value]

    def test_output_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RICCI_FORGE_OUT", str(tmp_path / "env-out"))
        assert run(["displacement", "--group", "mu_4", "--samples", "500"]) == EXIT_OK
        assert report(tmp_path / "env-out", "displacement.json").kind == "displacement"
        assert (tmp_path / "env-out" / "runs.db").is_file()

    def test_sample_writes_space_tables(self, tmp_path):
        code = run(["sample", "--family", "suspension", "--c", "0.1", "--points", "40",
                    "--seed", "2", "--out", str(tmp_path)])
        assert code == EXIT_OK
        payload = report(tmp_path, "sample.json").payload
        assert payload["points"] == 40
        assert sorted(tmp_path.glob("*/space_points.csv"))
        assert sorted(tmp_path.glob("*/space_distances.csv"))

    def test_missing_family_parameter_fails_cleanly(self, tmp_path):
        assert run(["build-spec", "--family", "n-open", "--out", str(tmp_path)]) == EXIT_ERROR
        assert not list(tmp_path.glob("*/N_open_spec.json"))

    def test_unexpected_error_marks_run_failed(self, tmp_path, monkeypatch):
        def broken(config, reports):
            raise RuntimeError("boom")

        monkeypatch.setitem(cli.HANDLERS, "displacement", broken)
        assert run(["displacement", "--group", "iota", "--out", str(tmp_path)]) == EXIT_ERROR
        assert statuses(tmp_path) == [RunStatus.failed.value]

    def test_non_monotone_convergence_fails_and_keeps_table(self, tmp_path, monkeypatch):
        rows = [ConvergenceRow(i=i, d=1 / i, gh_mn=value, gh_mx=value, gh_nx=value, resolution=0.01,
                               gh_lower_mn=0.0, witness_r_mn=(0.0, 1.0), diameter_m=1.0, diameter_n=1.0,
                               volume_m=1.0, volume_n=1.0, coarse=False)
                for i, value in ((2, 0.1), (4, 0.5))]
        table = ConvergenceTable(c=0.05, limit_c=0.025, n_points=500, seed=0, rows=rows, monotone=False,
                                 fitted_c_mn=0.0, fitted_c_mx=0.0, fitted_c_nx=0.0, limit_diameter=1.0,
                                 limit_volume=1.0, volume_lower_bound=1.0)

        def rising(*args, **kwargs):
            raise ConvergenceFailure("column rises", table=table)

        monkeypatch.setattr(cli, "convergence_experiment", rising)
        code = run(["converge", "--c", "0.05", "--i", "2,4", "--out", str(tmp_path)])
        assert code == EXIT_ERROR
        assert statuses(tmp_path) == [RunStatus.failed.value]
        assert sorted(tmp_path.glob("*/convergence.*"))
