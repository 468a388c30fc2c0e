"""Experiment configuration and serialized reports.

Configurations round-trip losslessly through JSON (``parse(serialize(c))``
equals ``c``), reports validate against the schema shipped in
``schemas/report.schema.json``, and serialized output is byte-identical
across runs of the same configuration and seed.  Wall-clock time is kept
out of the serialized artifact for that reason; runners print it to the
console instead.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, fields, replace
from importlib import resources

import jsonschema

from . import __version__

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "CheckResult",
    "Table",
    "Report",
    "ConfigError",
    "default_config",
    "config_to_dict",
    "config_from_dict",
    "render_csv",
    "report_to_json",
    "validate_report_dict",
]

EXPERIMENTS = (
    "dice",
    "dice-concentration",
    "bernoulli",
    "theorem1",
    "windows",
    "gsm",
    "cf-check",
)

FORMATS = ("json", "csv")
CSV_SIGNIFICANT_DIGITS = 12


class ConfigError(ValueError):
    """A configuration that cannot be run."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment run.

    ``baseline`` and ``constraint`` are small declarative specs
    (e.g. ``{"kind": "uniform", "k": 6}`` and
    ``{"kind": "halfspace", "target": 0.75}``); grids are tuples so the
    config is hashable and comparable.
    """

    experiment: str
    baseline: tuple[tuple[str, object], ...] = ()
    constraint: tuple[tuple[str, object], ...] = ()
    n_grid: tuple[int, ...] = ()
    m: int = 1
    t_grid: tuple[float, ...] = ()
    samples: int = 10**5
    method: str = "tilt-importance"
    seed: int = 0
    out: str | None = None
    format: str = "json"
    interval: tuple[float, float] = (1.786, 1.792)
    block_size: int = 1000
    amplitude: float | None = None
    exponent: float = 0.25
    gsm_targets: tuple[float, float] = (0.0, 1.0)
    gsm_epsilon: float = 0.1
    gsm_n: int = 200
    gsm_block: int = 5
    threads: int = 0

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}; choose from {FORMATS}")
        if self.experiment in ("bernoulli", "theorem1", "windows") and not self.n_grid:
            raise ConfigError(f"experiment {self.experiment} needs a nonempty n grid")
        if self.experiment == "cf-check" and not self.t_grid:
            raise ConfigError("cf-check needs a nonempty t grid")
        if self.seed is None:
            raise ConfigError("a seed is required (default 0)")

    def baseline_dict(self) -> dict:
        return dict(self.baseline)

    def constraint_dict(self) -> dict:
        return dict(self.constraint)


def _freeze(d: dict) -> tuple[tuple[str, object], ...]:
    return tuple(sorted(d.items()))


_DEFAULTS: dict[str, dict] = {
    "dice": dict(
        baseline=_freeze({"kind": "uniform", "k": 6}),
        constraint=_freeze({"kind": "equality", "target": 4.5}),
    ),
    "dice-concentration": dict(
        baseline=_freeze({"kind": "uniform", "k": 6}),
        samples=10**5,
        block_size=1000,
        interval=(1.786, 1.792),
    ),
    "bernoulli": dict(
        baseline=_freeze({"kind": "bernoulli", "p": 0.5}),
        constraint=_freeze({"kind": "halfspace", "target": 0.75}),
        n_grid=tuple(range(20, 401, 20)),
        m=1,
    ),
    "theorem1": dict(
        baseline=_freeze({"kind": "bernoulli", "p": 0.5}),
        constraint=_freeze({"kind": "halfspace", "target": 0.75}),
        n_grid=tuple(range(20, 401, 20)),
        m=1,
    ),
    "windows": dict(
        baseline=_freeze({"kind": "bernoulli", "p": 0.5}),
        constraint=_freeze({"kind": "equality", "target": 0.75}),
        n_grid=(25, 50, 100, 150),
        m=1,
        samples=4 * 10**5,
        exponent=0.25,
    ),
    "gsm": dict(samples=12000),
    "cf-check": dict(t_grid=(0.0, 0.5, 1.0, 2.0), samples=10**5),
}


def default_config(experiment: str) -> ExperimentConfig:
    """The zero-argument configuration of an experiment."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    return ExperimentConfig(experiment=experiment, **_DEFAULTS.get(experiment, {}))


def config_to_dict(config: ExperimentConfig) -> dict:
    """A JSON-serializable view of a config."""
    out: dict = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name in ("baseline", "constraint"):
            value = dict(value)
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Rebuild a config from its dict form; inverse of :func:`config_to_dict`."""
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "experiment" not in raw:
        raise ConfigError("config needs an 'experiment' key")
    kwargs: dict = {}
    for f in fields(ExperimentConfig):
        if f.name not in raw:
            continue
        value = raw[f.name]
        if f.name in ("baseline", "constraint"):
            value = _freeze(dict(value))
        elif f.name in ("n_grid",):
            value = tuple(int(v) for v in value)
        elif f.name in ("t_grid",):
            value = tuple(float(v) for v in value)
        elif f.name in ("interval", "gsm_targets"):
            value = tuple(float(v) for v in value)
        kwargs[f.name] = value
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def merge_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply non-None override values (e.g. CLI flags) on top of a config."""
    updates: dict = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("baseline", "constraint"):
            value = _freeze(value if isinstance(value, dict) else dict(value))
        updates[key] = value
    return replace(config, **updates) if updates else config


@dataclass(frozen=True)
class CheckResult:
    """One pass/fail verdict; ``invariant`` names the module property it
    instantiates and ``margin`` is the slack by which it holds (>= 0 passes)."""

    name: str
    invariant: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]


@dataclass(frozen=True)
class Report:
    """A full experiment result: config echo, tables, checks.

    ``wall_clock`` is carried for console display but never serialized, so
    repeated runs of the same config and seed produce byte-identical files.
    """

    experiment: str
    config: ExperimentConfig
    tables: dict[str, Table]
    checks: tuple[CheckResult, ...]
    primary_table: str
    wall_clock: float = 0.0
    version: str = __version__

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "version": self.version,
            "experiment": self.experiment,
            "config": config_to_dict(self.config),
            "tables": {
                name: {"columns": list(t.columns), "rows": [list(r) for r in t.rows]}
                for name, t in self.tables.items()
            },
            "checks": [
                {
                    "name": c.name,
                    "invariant": c.invariant,
                    "passed": c.passed,
                    "margin": c.margin,
                    "detail": c.detail,
                }
                for c in self.checks
            ],
        }


def _format_cell(value) -> object:
    if isinstance(value, bool) or not isinstance(value, float):
        return value
    return f"{value:.{CSV_SIGNIFICANT_DIGITS}g}"


def render_csv(table: Table) -> str:
    """RFC-style quoted CSV with a header row; floats carry 12 significant
    digits."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_format_cell(v) for v in row])
    return buffer.getvalue()


def report_to_json(report: Report) -> str:
    return json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"


def _schema() -> dict:
    text = resources.files("tiltlab").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def validate_report_dict(raw: dict) -> None:
    """Raise jsonschema.ValidationError if ``raw`` is not a valid report."""
    jsonschema.validate(raw, _schema())
