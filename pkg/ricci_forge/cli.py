"""
Командний рядок: побудова сімейств, сертифікати, пороги, об'єми,
діаметри, вибірки, оцінки GH та експеримент збіжності.

Коди виходу: 0 - успіх, 2 - сертифікат не пройдено, 1 - помилка
використання або предметної області.
"""
import argparse
import hashlib
import json
import logging
import math
import uuid
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.db.models import RunStatus
from app.db.repositories.runs import RunRepository
from app.db.session import get_db_session
from app.storage.paths import resolve_output_dir
from app.storage.repositories import ConvergenceRepository, ReportRepository, SpaceRepository, SpecRepository

from .config import BERGER_THRESHOLD_N4, DEFAULT_CERT_TOL, THRESHOLD_TOL, TOOLKIT_VERSION
from .constructions import (
    MetricFamilySpec,
    berger_metric_for,
    build_family,
    build_m_profile,
    build_n_profiles,
    make_params,
    round_sphere_family,
)
from .curvature import make_grid, threshold_search, verify_nonneg
from .errors import CertificateFailure, ConvergenceFailure, ParameterError, RicciForgeError, UsageError
from .gh import (
    convergence_experiment,
    gh_upper_report,
    shared_coordinate_correspondence,
)
from .groups import group_by_label, psi_map
from .spaces import diameter, level_layout, min_displacement, rescale, sample_space, triangle_violation, volume_closed, volume_mc

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CERTIFICATE = 2

COMMANDS = ("build-spec", "verify-curvature", "threshold", "volume", "diameter",
            "displacement", "sample", "gh", "converge")

FAMILY_ALIASES = {
    "m-open": "M_open",
    "m-closed": "M_closed",
    "n-open": "N_open",
    "n-closed": "N_closed",
    "suspension": "suspension_limit",
    "eh": "EH",
    "eh-conformal": "EH_conformal",
    "round-sphere": "round_sphere",
    "berger": "N_open",
}

FAMILY_INPUTS = {
    "M_open": ("c",),
    "M_closed": ("c", "d"),
    "N_open": ("c",),
    "N_closed": ("c", "d"),
    "suspension_limit": ("c",),
}

DEFAULT_GRIDS = {
    "N_open": (0.01, 50.0, 1e-3),
    "M_open": (0.01, 10.0, 1e-3),
}


class RunConfig(BaseModel):
    """Повна розв'язана конфігурація запуску (вбудовується в кожен звіт)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Literal[COMMANDS]
    family: Optional[str] = None
    family_b: Optional[str] = None
    spec: Optional[str] = None
    spec_b: Optional[str] = None
    a: float = Field(1.0, gt=0)
    b: Optional[float] = None
    b_prime: Optional[float] = None
    c: Optional[float] = Field(None, gt=0)
    d: Optional[float] = None
    n: int = Field(4, ge=1)
    grid: Optional[Tuple[float, float, float]] = None
    tolerance: float = Field(DEFAULT_CERT_TOL, gt=0)
    bracket: Optional[Tuple[float, float]] = None
    threshold_tol: float = Field(THRESHOLD_TOL, gt=0)
    resolution: float = Field(1e-3, gt=0)
    points: int = Field(500, ge=2)
    samples: Optional[int] = Field(None, ge=1)
    seed: int = 0
    scale: float = Field(1.0, gt=0)
    group: Optional[str] = None
    psi_b: bool = False
    i_list: Optional[Tuple[int, ...]] = None
    threads: Optional[int] = Field(None, ge=1)
    out: Optional[str] = None

    @model_validator(mode="after")
    def check_command_inputs(self) -> "RunConfig":
        if self.family is not None and self.family not in FAMILY_ALIASES:
            raise ValueError(f"unknown family {self.family!r}; choose from {sorted(FAMILY_ALIASES)}")
        if self.family_b is not None and self.family_b not in FAMILY_ALIASES:
            raise ValueError(f"unknown family {self.family_b!r}")
        if self.grid is not None:
            lo, hi, step = self.grid
            if not (hi > lo and step > 0):
                raise ValueError(f"grid must be lo:hi:step with hi > lo and step > 0, got {self.grid}")
        if self.bracket is not None and not 0 < self.bracket[0] < self.bracket[1]:
            raise ValueError(f"bracket must satisfy 0 < low < high, got {self.bracket}")
        needs_family = {"build-spec", "verify-curvature", "threshold", "volume", "diameter", "sample"}
        if self.command in needs_family and self.family is None and self.spec is None:
            raise ValueError(f"command {self.command} needs --family or --spec")
        if self.command == "gh" and (self.family is None and self.spec is None
                                     or self.family_b is None and self.spec_b is None):
            raise ValueError("command gh needs two spaces (--family/--spec and --family-b/--spec-b)")
        if self.command in needs_family - {"threshold"} | {"gh"}:
            for family, spec in ((self.family, self.spec), (self.family_b, self.spec_b)):
                if family is None or spec is not None:
                    continue
                missing = [f"--{name}" for name in FAMILY_INPUTS.get(FAMILY_ALIASES[family], ())
                           if getattr(self, name) is None]
                if missing:
                    raise ValueError(f"family {family} needs {', '.join(missing)}")
        if self.command == "displacement" and self.group is None:
            raise ValueError("command displacement needs --group")
        if self.command == "converge":
            if self.c is None or not self.i_list:
                raise ValueError("command converge needs --c and --i")
        if self.command == "threshold" and self.bracket is None:
            raise ValueError("command threshold needs --bracket low:high")
        return self

    @property
    def kind(self) -> Optional[str]:
        return FAMILY_ALIASES.get(self.family) if self.family else None

    def grid_array(self, kind: Optional[str] = None):
        lo, hi, step = self.grid or DEFAULT_GRIDS.get(kind or self.kind or "", (0.01, 10.0, 1e-3))
        return make_grid(lo, hi, step)

    def run_id(self) -> str:
        """Детермінований ідентифікатор за вмістом конфігурації"""
        digest = hashlib.sha1(self.model_dump_json(exclude={"out", "threads"}).encode()).hexdigest()
        return f"{self.command}-{digest[:10]}"


# ---------------------------------------------------------------------------
# Розбір аргументів
# ---------------------------------------------------------------------------

def _pair(text: str) -> Tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected low:high, got {text!r}")
    return float(parts[0]), float(parts[1])


def _triple(text: str) -> Tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}")
    return float(parts[0]), float(parts[1]), float(parts[2])


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(item) for item in text.split(",") if item.strip())


def _c_value(text: str) -> Any:
    return text if text == "auto" else float(text)


class _CliError(argparse.ArgumentParser):
    """argparse без sys.exit: помилки стають UsageError"""

    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="файл key=value; прапорці мають пріоритет")
    common.add_argument("--out", help="директорія звітів (інакше RICCI_FORGE_OUT)")
    common.add_argument("--threads", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--family", choices=sorted(FAMILY_ALIASES))
    common.add_argument("--spec", help="JSON сімейства, збережений build-spec")
    common.add_argument("--a", type=float)
    common.add_argument("--b", type=float)
    common.add_argument("--b-prime", dest="b_prime", type=float)
    common.add_argument("--c", type=_c_value, help="число або 'auto' (половина записаного порогу)")
    common.add_argument("--d", type=float)
    common.add_argument("--n", type=int)
    common.add_argument("--grid", type=_triple, help="lo:hi:step")
    common.add_argument("--tolerance", type=float)
    common.add_argument("--resolution", type=float)
    common.add_argument("--points", type=int)
    common.add_argument("--scale", type=float, help="масштаб lambda перед вимірюванням")

    parser = _CliError(prog="ricci-forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_CliError)
    sub.add_parser("build-spec", parents=[common])
    sub.add_parser("verify-curvature", parents=[common])
    threshold = sub.add_parser("threshold", parents=[common])
    threshold.add_argument("--bracket", type=_pair, help="low:high")
    threshold.add_argument("--threshold-tol", dest="threshold_tol", type=float)
    volume = sub.add_parser("volume", parents=[common])
    volume.add_argument("--samples", type=int, help="також оцінка Монте-Карло")
    sub.add_parser("diameter", parents=[common])
    displacement = sub.add_parser("displacement", parents=[common])
    displacement.add_argument("--group", help="mu_k, iota, nu_4, trivial")
    displacement.add_argument("--samples", type=int)
    sub.add_parser("sample", parents=[common])
    gh = sub.add_parser("gh", parents=[common])
    gh.add_argument("--family-b", dest="family_b", choices=sorted(FAMILY_ALIASES))
    gh.add_argument("--spec-b", dest="spec_b")
    gh.add_argument("--psi-b", dest="psi_b", action="store_true", default=None,
                    help="шар B у координатах Psi (mu_4 проти nu_4)")
    converge = sub.add_parser("converge", parents=[common])
    converge.add_argument("--i", dest="i_list", type=_int_list, help="2,4,8,16")
    return parser


FILE_PARSERS: Dict[str, Callable[[str], Any]] = {
    "grid": _triple,
    "bracket": _pair,
    "i_list": _int_list,
    "c": _c_value,
    "psi_b": lambda text: text.strip().lower() in ("1", "true", "yes"),
}


def _read_config_file(path: str) -> Dict[str, Any]:
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    values: Dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        if raw is None:
            continue
        key = key.strip().lower().replace("-", "_")
        values[key] = FILE_PARSERS.get(key, lambda text: text)(raw)
    return values


def resolve_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """Аргументи + файл конфігурації -> перевірений RunConfig"""
    namespace = vars(build_parser().parse_args(argv))
    values: Dict[str, Any] = {}
    if namespace.get("config"):
        values.update(_read_config_file(namespace["config"]))
    values.update({key: value for key, value in namespace.items() if value is not None and key != "config"})
    if values.get("c") == "auto":
        values["c"] = BERGER_THRESHOLD_N4 / 2
    try:
        return RunConfig(**values)
    except ValidationError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Обробники
# ---------------------------------------------------------------------------

def _params(config: RunConfig):
    return make_params(a=config.a, b=config.b, b_prime=config.b_prime, c=config.c, d=config.d, n=config.n)


def _load_or_build(config: RunConfig, specs: SpecRepository, second: bool = False) -> MetricFamilySpec:
    path = config.spec_b if second else config.spec
    if path:
        return specs.load_spec(Path(path))
    family = config.family_b if second else config.family
    kind = FAMILY_ALIASES[family]
    if kind == "round_sphere":
        return round_sphere_family()
    if kind == "N_open" and config.grid is not None:
        return build_n_profiles(config.n, config.c, r_max=max(60.0, config.grid[1] + 1.0), certify=False)
    if kind == "M_open" and config.grid is not None:
        return build_m_profile(config.c, config.b if config.b is not None else math.asin(2 * config.c),
                               config.b_prime, r_max=max(10.0, config.grid[1]))
    return build_family(kind, _params(config))


def _exit_for(passed: Optional[bool]) -> int:
    return EXIT_OK if passed in (True, None) else EXIT_CERTIFICATE


def _cmd_build_spec(config: RunConfig, reports: ReportRepository) -> Tuple[int, Path]:
    specs = SpecRepository(reports)
    spec = _load_or_build(config, specs)
    path = specs.save_spec(spec)
    specs.save_spec_profiles(spec)
    return _exit_for(spec.certificate.passed if spec.certificate else None), path


def _cmd_verify(config: RunConfig, reports: ReportRepository) -> Tuple[int, Path]:
    specs = SpecRepository(reports)
    spec = _load_or_build(config, specs)
    if "warp" in spec.profiles or spec.is_berger:
        certificate = verify_nonneg(spec.metric(), config.grid_array(spec.kind), config.tolerance)
    elif spec.certificate is not None:
        certificate = spec.certificate
    else:
        raise UsageError(f"family {spec.kind} has no certificate to verify")
    path = specs.save_certificate(certificate)
    return _exit_for(certificate.passed), path


def _cmd_threshold(config: RunConfig, reports: ReportRepository) -> Tuple[int, Path]:
    kind = config.kind or "N_open"
    grid = config.grid_array(kind)
    grid_hi = float(grid[-1])
    if kind == "N_open":
        builder = lambda c: berger_metric_for(config.n, c, grid_hi)
    elif kind == "M_open":
        def builder(c: float):
            if not 2 * c < 1:
                raise ParameterError(f"M family needs 2c < 1, got c={c}")
            return build_m_profile(c, math.asin(2 * c), r_max=grid_hi).metric()
    else:
        raise UsageError(f"threshold search supports families berger, n-open and m-open, got {config.family}")
    result = threshold_search(builder, config.bracket, grid, config.threshold_tol, config.tolerance)
    path = SpecRepository(reports).save_threshold(result)
    return _exit_for(result.certificate.passed), path


def _cmd_volume(config: RunConfig, reports: ReportRepository) -> Tuple[int, Path]:
    spec = rescale(_load_or_build(config, SpecRepository(reports)), config.scale)
    payload: Dict[str, Any] = {"kind": spec.kind, "scale": config.scale, "volume": volume_closed(spec)}
    if config.samples:
        estimate, stderr = volume_mc(spec, config.samples, config.seed)
        payload.update(mc_estimate=estimate, mc_stderr=stderr,
                       mc_sigmas=abs(estimate - payload["volume"]) / stderr if stderr > 0 else 0.0)
    return EXIT_OK, reports.save_json("volume.json", "volume", payload)


def _sample(config: RunConfig, spec: MetricFamilySpec, fiber_map=None, levels: Optional[int] = None):
    return sample_space(spec, config.points, config.resolution, config.seed,
                        fiber_map=fiber_map, threads=config.threads, levels=levels)


def _cmd_diameter(config: RunConfig, reports: ReportRepository) -> Tuple[int, Path]:
    space = rescale(_sample(config, _load_or_build(config, SpecRepository(reports))), config.scale)
    payload = {"kind": space.source_kind, "scale": config.scale, "diameter": diameter(space),
               "error_bar": space.resolution, "points": space.size, "coarse_warning": space.coarse_warning}
    return EXIT_OK, reports.save_json("diameter.json", "diameter", payload)


def _cmd_displacement(config: RunConfig, reports: ReportRepository) -> Tuple[int, Path]:
    report = min_displacement(group_by_label(config.group), config.samples or 10_000, config.seed)
    return EXIT_OK, reports.save_json("displacement.json", "displacement", report)


def _cmd_sample(config: RunConfig, reports: ReportRepository) -> Tuple[int, Path]:
    space = _sample(config, _load_or_build(config, SpecRepository(reports)))
    SpaceRepository(reports).save_space(space)
    payload = {"kind": space.source_kind, "points": space.size, "resolution": space.resolution,
               "diameter": diameter(space), "triangle_violation": triangle_violation(space, seed=config.seed),
               "coarse_warning": space.coarse_warning, "metadata": space.metadata}
    return EXIT_OK, reports.save_json("sample.json", "sample", payload)


def _cmd_gh(config: RunConfig, reports: ReportRepository) -> Tuple[int, Path]:
    specs = SpecRepository(reports)
    psi = psi_map() if config.psi_b else None
    spec_a = _load_or_build(config, specs)
    # спільні радіальні рівні, щоб кореспонденція зіставляла однакові координати
    levels = level_layout(spec_a, config.points, config.resolution).count
    space_a = _sample(config, spec_a, levels=levels)
    space_b = _sample(config, _load_or_build(config, specs, second=True), fiber_map=psi, levels=levels)
    corr = shared_coordinate_correspondence(space_a, space_b, fiber_map_b=psi)
    estimate = gh_upper_report(space_a, space_b, corr, config.threads)
    payload = dict(estimate.model_dump(), kinds=[space_a.source_kind, space_b.source_kind],
                   pairs=int(corr.pairs.shape[0]))
    return EXIT_OK, reports.save_json("gh.json", "gh_estimate", payload)


def _cmd_converge(config: RunConfig, reports: ReportRepository) -> Tuple[int, Path]:
    try:
        table = convergence_experiment(config.c, config.i_list, config.points, config.seed,
                                       config.resolution, config.threads)
    except CertificateFailure as exc:
        if exc.spec is not None:
            SpecRepository(reports).save_spec(exc.spec, name="failing_spec.json")
        raise
    except ConvergenceFailure as exc:
        if exc.table is not None:
            ConvergenceRepository(reports).save_table(exc.table)
        raise
    paths = ConvergenceRepository(reports).save_table(table)
    return EXIT_OK, paths["json"]


HANDLERS: Dict[str, Callable[[RunConfig, ReportRepository], Tuple[int, Path]]] = {
    "build-spec": _cmd_build_spec,
    "verify-curvature": _cmd_verify,
    "threshold": _cmd_threshold,
    "volume": _cmd_volume,
    "diameter": _cmd_diameter,
    "displacement": _cmd_displacement,
    "sample": _cmd_sample,
    "gh": _cmd_gh,
    "converge": _cmd_converge,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Точка входу; повертає код виходу"""
    try:
        config = resolve_config(argv)
    except RicciForgeError as exc:
        logger.error(f"❌ {exc}")
        return EXIT_ERROR

    output_dir = resolve_output_dir(config.out)
    run_id = config.run_id()
    config_dump = json.loads(config.model_dump_json())
    reports = ReportRepository(output_dir, run_id, config_dump)
    logger.info(f"🚀 {config.command} (run {run_id}, версія {TOOLKIT_VERSION}) -> {output_dir}")

    with get_db_session(output_dir) as session:
        runs = RunRepository(session)
        record_id = uuid.uuid4().hex
        runs.create(record_id, config.command, json.dumps(config_dump), TOOLKIT_VERSION, config.seed)
        try:
            code, report_path = HANDLERS[config.command](config, reports)
        except CertificateFailure as exc:
            logger.error(f"❌ Сертифікат не пройдено: {exc}")
            runs.finish(record_id, RunStatus.certificate_failed, EXIT_CERTIFICATE, error_message=str(exc))
            return EXIT_CERTIFICATE
        except RicciForgeError as exc:
            logger.error(f"❌ {type(exc).__name__}: {exc}")
            runs.finish(record_id, RunStatus.failed, EXIT_ERROR, error_message=str(exc))
            return EXIT_ERROR
        except Exception as exc:
            logger.error(f"❌ Непередбачена помилка {type(exc).__name__}: {exc}", exc_info=True)
            runs.finish(record_id, RunStatus.failed, EXIT_ERROR, error_message=f"{type(exc).__name__}: {exc}")
            return EXIT_ERROR
        status = RunStatus.completed if code == EXIT_OK else RunStatus.certificate_failed
        runs.finish(record_id, status, code, report_path=str(report_path))
    logger.info(f"✅ {config.command} завершено з кодом {code}: {report_path}")
    return code
