"""Command-line front end: YAML run configs and the pulse/cycle/sweep/fit commands.

Natural units throughout: omega0 = 1 unless overridden, times in 1/omega0.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

SCHEMA_VERSION = 1
SUBCOMMANDS = ("pulse", "cycle", "sweep", "fit")

log = logging.getLogger("superengine")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Flat run description shared by every subcommand.

    ``T`` is the initial temperature of a pulse run (negative for an inverted
    state) and the cold-bath temperature T_c of an engine run.  Optional
    numeric fields left at ``None`` are derived at run time.
    """

    N: int
    T: float
    schema_version: int = SCHEMA_VERSION
    omega0: float = 1.0
    gamma_down: float = 0.0
    gamma_up: float = 0.0
    gamma_phi: float = 0.0
    x: float = 3.5
    n_cycles: int = 5
    stroke_duration: float | None = None
    tau_switch: float | None = None
    hard_switch: bool = False
    thermal_contact_time: float = 0.0
    dt: float | None = None
    t_max: float | None = None
    sample_stride: int = 1
    renormalize_trace: bool = True
    sweep_axis: str | None = None
    sweep_grid: list[float] | None = None
    workers: int = 1
    input_csv: str | None = None
    out: str = "out"
    warnings: list[str] = field(default_factory=list, compare=False, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("warnings")
        return d


REQUIRED = ("N", "T")
_INT_FIELDS = {"N", "schema_version", "n_cycles", "sample_stride", "workers"}
_BOOL_FIELDS = {"hard_switch", "renormalize_trace"}
_STR_FIELDS = {"sweep_axis", "input_csv", "out"}
_POSITIVE = {"omega0", "stroke_duration", "tau_switch", "dt", "t_max"}
_NON_NEGATIVE = {"gamma_down", "gamma_up", "gamma_phi", "x", "thermal_contact_time"}


def _config_fields() -> dict[str, Any]:
    return {f.name: f for f in fields(RunConfig) if f.name != "warnings"}


def _coerce(name: str, value: Any) -> Any:
    if value is None:
        return None
    if name in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if name in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if name in _STR_FIELDS:
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    if name == "sweep_grid":
        if not isinstance(value, list) or not value:
            raise ConfigError("sweep_grid: expected a non-empty list of numbers")
        return [_coerce("x", v) for v in value]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    return float(value)


def validate(raw: dict) -> RunConfig:
    known = _config_fields()
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    missing = [k for k in REQUIRED if raw.get(k) is None]
    if missing:
        raise ConfigError(f"missing required fields: {', '.join(missing)}")
    values = {k: _coerce(k, v) for k, v in raw.items()}
    if values.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: only version {SCHEMA_VERSION} is supported")
    cfg = RunConfig(**values)
    if cfg.N < 1:
        raise ConfigError("N: must be a positive integer")
    if cfg.T == 0:
        raise ConfigError("T: must be nonzero")
    for name in _POSITIVE:
        v = getattr(cfg, name)
        if v is not None and not v > 0:
            raise ConfigError(f"{name}: must be positive")
    for name in _NON_NEGATIVE:
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name}: must be non-negative")
    for name in ("n_cycles", "sample_stride", "workers"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name}: must be >= 1")
    if cfg.x * cfg.gamma_down > 0.1 * cfg.omega0 * (1 + 1e-12):
        cfg.warnings.append(
            f"x*gamma_down={cfg.x * cfg.gamma_down:.3g} exceeds 0.1*omega0: outside the "
            "weak-coupling validity range"
        )
    return cfg


def parse_config(path: str | Path | None = None, overrides: Sequence[str] = ()) -> RunConfig:
    """Read a YAML config file and apply ``key=value`` overrides.

    Override values are parsed as YAML scalars, so ``x=3.5`` is a float and
    ``sweep_grid=[40, 80]`` a list.
    """
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
            raise ConfigError(f"{path}: {where}{getattr(exc, 'problem', exc)}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw.update(loaded)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            raw[key.strip()] = yaml.safe_load(value)
        except yaml.YAMLError:
            raise ConfigError(f"--set {key}: cannot parse {value!r}") from None
    return validate(raw)


def emit_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# outputs


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_columns(path: Path, columns: dict[str, np.ndarray]) -> Path:
    names = list(columns)
    n = len(next(iter(columns.values())))
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(f"{columns[c][i]:.12g}" for c in names) + "\n")
    return path


def read_pulse_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t", "intensity"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: needs 't' and 'intensity' columns")
        rows = [(float(r["t"]), float(r["intensity"])) for r in reader]
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _plan_from(cfg: RunConfig):
    from .cycle_driver import CyclePlan

    if not cfg.gamma_down > 0:
        raise ConfigError("gamma_down: engine runs need a positive decay rate")
    return CyclePlan(
        n_emitters=cfg.N, omega0=cfg.omega0, T_c=cfg.T, gamma_down=cfg.gamma_down, x=cfg.x,
        n_cycles=cfg.n_cycles, stroke_duration=cfg.stroke_duration, tau_switch=cfg.tau_switch,
        hard_switch=cfg.hard_switch, gamma_phi=cfg.gamma_phi,
        thermal_contact_time=cfg.thermal_contact_time, dt=cfg.dt,
        sample_stride=cfg.sample_stride, renormalize_trace=cfg.renormalize_trace,
    )


def run_pulse(cfg: RunConfig, out: Path) -> list[Path]:
    from .analysis import compare_mf_exact, exact_pulse, fit_sech2
    from .mean_field import pulse_curve

    if cfg.gamma_down == cfg.gamma_up:
        raise ConfigError("gamma_down/gamma_up: a pulse needs gamma_down != gamma_up")
    run = exact_pulse(cfg.N, cfg.T, cfg.gamma_down, cfg.gamma_up, cfg.omega0, t_max=cfg.t_max,
                      dt=cfg.dt, gamma_phi=cfg.gamma_phi, sample_stride=cfg.sample_stride,
                      renormalize_trace=cfg.renormalize_trace)
    mf = pulse_curve(run.params, run.times)
    paths = [
        _write_columns(out / "exact.csv", {"t": run.times, "intensity": run.intensity, "sz": run.sz}),
        _write_columns(out / "mean_field.csv", mf),
    ]
    summary = {
        "mean_field": run.params.to_dict(),
        "mean_field_peak": run.params.peak_intensity,
        "comparison": compare_mf_exact(mf, (run.times, run.intensity)),
        "exact_fit": fit_sech2(run.times, run.intensity).to_dict(),
        "warnings": cfg.warnings,
    }
    paths.append(_write_json(out / "comparison.json", summary))
    return paths


def run_cycle_cmd(cfg: RunConfig, out: Path) -> list[Path]:
    from .cycle_driver import run_engine

    report = run_engine(_plan_from(cfg))
    report.warnings = sorted(set(report.warnings) | set(cfg.warnings))
    return report.write(out)


def run_sweep(cfg: RunConfig, out: Path) -> list[Path]:
    from .analysis import scaling_exponent, sweep

    if not cfg.sweep_axis or not cfg.sweep_grid:
        raise ConfigError("sweep_axis/sweep_grid: both are required for a sweep")
    result = sweep(_plan_from(cfg), cfg.sweep_axis, cfg.sweep_grid, max_workers=cfg.workers)
    paths = result.write(out)
    if cfg.sweep_axis == "N":
        ok = [(n, p) for n, p in zip(result.grid, result.power) if p > 0]
        if len({n for n, _ in ok}) >= 3:
            fit = scaling_exponent([n for n, _ in ok], [p for _, p in ok])
            paths.append(_write_json(out / "scaling.json", fit.to_dict()))
            paths.append(_write_columns(out / "scaling.csv", {
                "N": np.array(fit.n_values), "power": np.array(fit.values)}))
    return paths


def run_fit(cfg: RunConfig, out: Path) -> list[Path]:
    from .analysis import fit_sech2

    if not cfg.input_csv:
        raise ConfigError("input_csv: required for the fit command")
    t, y = read_pulse_csv(cfg.input_csv)
    fit = fit_sech2(t, y)
    return [_write_json(out / "pulse_fit.json", fit.to_dict())]


_HANDLERS = {"pulse": run_pulse, "cycle": run_cycle_cmd, "sweep": run_sweep, "fit": run_fit}


def dispatch(subcommand: str, cfg: RunConfig, out_dir: str | Path | None = None,
             quiet: bool = False) -> int:
    """Run ``subcommand``; errors go to stderr as one JSON object, exit code 1."""
    if subcommand not in _HANDLERS:
        sys.stderr.write(f"unknown subcommand {subcommand!r}; choose from {', '.join(SUBCOMMANDS)}\n")
        return 2
    out = Path(out_dir if out_dir is not None else cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for w in cfg.warnings:
            log.warning(w)
        paths = _HANDLERS[subcommand](cfg, out)
    except Exception as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "subcommand": subcommand}, sort_keys=True) + "\n")
        return 1
    if not quiet:
        for p in paths:
            print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superengine",
        description="Collective superabsorption/superradiance engine simulations.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="YAML run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")
    parser.add_argument("--out", help="output directory (default: config 'out')")
    parser.add_argument("--quiet", action="store_true", help="do not list written files")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = parse_config(args.config, args.overrides)
    except (ConfigError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                                    sort_keys=True) + "\n")
        return 1
    return dispatch(args.subcommand, cfg, args.out, args.quiet)
