import math

import numpy as np
import pytest

from app.db.models import RunStatus
from app.db.repositories.runs import RunRepository
from app.db.session import get_db_session
from app.storage.models import csv_number, plain
from app.storage.paths import resolve_output_dir
from app.storage.repositories.reports import ReportRepository
from app.storage.repositories.spaces import SpaceRepository
from app.storage.repositories.specs import SpecRepository
from ricci_forge.config import TOOLKIT_VERSION
from ricci_forge.constructions import limit_suspension
from ricci_forge.spaces import sample_space


@pytest.fixture
def reports(tmp_path):
    return ReportRepository(tmp_path, "run-1", {"command": "volume", "c": 0.1})


class TestReportRepository:
    def test_json_envelope(self, reports, tmp_path):
        path = reports.save_json("volume.json", "volume", {"volume": np.float64(2.5), "bound": math.inf})
        assert path == tmp_path / "run-1" / "volume.json"
        envelope = ReportRepository.load_json(path)
        assert envelope.kind == "volume"
        assert envelope.run_id == "run-1"
        assert envelope.toolkit_version == TOOLKIT_VERSION
        assert envelope.config == {"command": "volume", "c": 0.1}
        assert envelope.payload["volume"] == 2.5
        assert envelope.payload["bound"] == math.inf

    def test_csv_with_comments(self, reports):
        path = reports.save_csv("table.csv", ["i", "value"], [[2, 0.1], [4, math.nan]],
                                comments={"seed": 7})
        table = ReportRepository.load_csv(path)
        assert table["comments"] == {"seed": "7"}
        assert table["header"] == ["i", "value"]
        assert table["rows"] == [["2", "0.1"], ["4", "nan"]]


class TestSpecRepository:
    def test_spec_reload(self, reports):
        specs = SpecRepository(reports)
        spec = limit_suspension(0.3)
        restored = specs.load_spec(specs.save_spec(spec))
        assert restored.kind == "suspension_limit"
        assert restored.group == spec.group
        assert restored.profiles["warp"](1.0) == pytest.approx(spec.profiles["warp"](1.0), abs=1e-14)

    def test_profile_table(self, reports):
        specs = SpecRepository(reports)
        paths = specs.save_profile(limit_suspension(0.3).profiles["warp"], np.linspace(0.5, 1.5, 5), stem="w")
        table = ReportRepository.load_csv(paths["csv"])
        assert table["header"] == ["r", "value", "d1", "d2"]
        r, value, d1, d2 = (float(x) for x in table["rows"][0])
        assert (r, value) == pytest.approx((0.5, 0.3 * math.sin(0.5)))
        assert d1 == pytest.approx(0.3 * math.cos(0.5))
        assert d2 == pytest.approx(-0.3 * math.sin(0.5))

    def test_certificate(self, reports):
        specs = SpecRepository(reports)
        envelope = ReportRepository.load_json(specs.save_certificate(limit_suspension(0.3).certificate))
        assert envelope.kind == "curvature_certificate"
        assert envelope.payload["passed"] is True


def test_space_tables(reports):
    space = sample_space(limit_suspension(0.1), 30, 1e-3, seed=1)
    paths = SpaceRepository(reports).save_space(space)
    points = ReportRepository.load_csv(paths["points"])
    distances = ReportRepository.load_csv(paths["distances"])
    assert points["header"] == ["r", "x1", "x2", "x3", "x4", "orbit_label"]
    assert len(points["rows"]) == 30
    assert distances["comments"]["group"] == "mu_4"
    assert float(distances["rows"][0][-1]) == space.distances[0, -1]


class TestHelpers:
    def test_plain(self):
        data = plain({"a": np.arange(3), "b": (np.int64(1), np.float32(0.5)), 3: None})
        assert data == {"a": [0, 1, 2], "b": [1, 0.5], "3": None}

    def test_csv_number(self):
        assert csv_number(0.1) == "0.1"
        assert csv_number(-math.inf) == "-inf"
        assert csv_number(np.float64(1.5)) == "1.5"

    def test_output_dir_priority(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RICCI_FORGE_OUT", str(tmp_path / "env"))
        assert resolve_output_dir(tmp_path / "flag") == tmp_path / "flag"
        assert resolve_output_dir() == tmp_path / "env"
        assert (tmp_path / "env").is_dir()


class TestRunRepository:
    def test_lifecycle(self, tmp_path):
        with get_db_session(tmp_path) as session:
            runs = RunRepository(session)
            record = runs.create("r1", "volume", "{}", TOOLKIT_VERSION, seed=3)
            assert record.status == RunStatus.running.value
            runs.create("r2", "gh", "{}", TOOLKIT_VERSION)

            finished = runs.finish("r1", RunStatus.completed, 0, report_path="out/volume.json")
            assert finished.exit_code == 0
            assert finished.duration_sec >= 0
            runs.finish("r2", RunStatus.certificate_failed, 2, error_message="x" * 3000)

            assert [run.id for run in runs.get_by_status(RunStatus.completed.value)] == ["r1"]
            assert len(runs.get_by_id("r2").error_message) == 2000
            assert {run.id for run in runs.get_recent(command="gh")} == {"r2"}
            assert runs.finish("missing", RunStatus.failed, 1) is None
