"""Config-driven experiment runner.

Usage::

    epsdyn run config.toml --override medium.alpha=2.0 --out results/ --quiet

The config is a TOML file with dotted sections (see ``DEFAULTS``). Each
enabled gauge is run three times with real drives (no field, Re E, Im E);
the phasor response is assembled from the three by linearity. Outputs are
``trajectory_<gauge>.csv`` per gauge and ``report.json``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .analytic_oracle import ConductivityResult, steady_state_conductivity
from .evolution import PropagatorConfig, Trajectory, gaussian_packet, propagate
from .hamiltonians import ChargedParticleMedium, DriveSpec, PhysicalConstants
from .observables import ObservableRecord, combine_quadratures, conductivity, modulus_equivalence_residual
from .phase_space_grid import GridSpec, make_grid

log = logging.getLogger("epsdyn")

SCHEMA_VERSION = 1
CSV_HEADER = [
    "t",
    "re_mean_p",
    "im_mean_p",
    "re_mean_qdot",
    "im_mean_qdot",
    "re_norm",
    "im_norm",
    "re_sigma",
    "im_sigma",
]

DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "gauges": ["a_gauge", "phi_gauge"],
    "seed": 0,
    "output_dir": "results",
    "constants": {"hbar": 1.0, "c": 1.0},
    "medium": {"m": 1.0, "e_charge": 1.0, "alpha": 1.0, "n_particles": 1},
    "drive": {"E0_re": 1.0, "E0_im": 0.0, "omega": 1.0},
    "grid": {"q_min": -20.0, "q_max": 20.0, "n_q": 256, "p_min": -10.0, "p_max": 10.0, "n_p": 256},
    "propagator": {"dt": 1e-3, "t_final": 10.0, "record_every": 10, "p_frame": "moving"},
    "packet": {"q0": 0.0, "p0": 0.0, "s_q": 1.0, "s_p": 1.0},
    # window bounds in units of 1/alpha unless window_start/window_end are given
    "conductivity": {"start_factor": 5.0, "end_factor": 10.0},
    "tolerances": {
        "sigma_relative": 1e-3,
        "cross_gauge_sigma": 1e-6,
        "modulus_equivalence": 1e-7,
        "norm_drift": 1e-12,
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PacketSpec:
    q0: float = 0.0
    p0: float = 0.0
    s_q: float = 1.0
    s_p: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    medium: ChargedParticleMedium
    drive: DriveSpec
    grid: GridSpec
    propagator: PropagatorConfig
    gauges: tuple[str, ...]
    packet: PacketSpec
    output_dir: Path
    seed: int
    constants: PhysicalConstants = PhysicalConstants()
    window: tuple[float, float] | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULTS["tolerances"]))
    raw: dict = field(default_factory=dict, repr=False)


def _merge(base: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in user.items():
        where = f"{path}{key}"
        if key not in base and not (path == "conductivity." and key in ("window_start", "window_end")):
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base.get(key), dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override '{key}' descends into a non-table")
    node[parts[-1]] = _parse_value(text.strip())


def _build(section: str, factory, values: dict):
    try:
        return factory(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def config_from_dict(user: dict, overrides: Sequence[str] = ()) -> ExperimentConfig:
    user = copy.deepcopy(user)
    for item in overrides:
        apply_override(user, item)
    raw = _merge(DEFAULTS, user)
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"schema_version {raw['schema_version']} unsupported (expected {SCHEMA_VERSION})")
    gauges = tuple(raw["gauges"])
    if not gauges or any(g not in ("a_gauge", "phi_gauge") for g in gauges):
        raise ConfigError(f"'gauges' must be a non-empty subset of [a_gauge, phi_gauge], got {list(gauges)}")
    d = raw["drive"]
    drive = _build("drive", DriveSpec, {"E0": complex(d["E0_re"], d["E0_im"]), "omega": d["omega"]})
    if drive.E0 == 0:
        raise ConfigError("[drive] |E0| must be > 0 for conductivity runs")
    medium = _build("medium", ChargedParticleMedium, raw["medium"])
    grid = _build("grid", GridSpec, raw["grid"])
    try:
        grid.validate()
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from exc
    propagator = _build("propagator", PropagatorConfig, raw["propagator"])
    packet = _build("packet", PacketSpec, raw["packet"])
    constants = _build("constants", PhysicalConstants, raw["constants"])
    cond = raw["conductivity"]
    if "window_start" in cond or "window_end" in cond:
        window = (float(cond["window_start"]), float(cond["window_end"]))
    elif medium.alpha > 0:
        window = (cond["start_factor"] / medium.alpha, cond["end_factor"] / medium.alpha)
    else:
        raise ConfigError("[conductivity] alpha = 0 needs explicit window_start/window_end")
    out_dir = Path(raw["output_dir"])
    return ExperimentConfig(
        medium, drive, grid, propagator, gauges, packet, out_dir, int(raw["seed"]),
        constants, window, dict(raw["tolerances"]), raw,
    )


def load_config(path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    path = Path(path)
    try:
        user = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(user, overrides)


@dataclass
class GaugeRun:
    gauge: str
    records: list[ObservableRecord]
    quadratures: dict[str, Trajectory]
    result: ConductivityResult | None
    norm_drift: float
    runtime_s: float


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    runs: dict[str, GaugeRun]
    cross_gauge: dict[str, float]
    checks: dict[str, dict]
    runtime_s: float

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        cfg = self.config
        gauges = {}
        for tag, run in self.runs.items():
            entry: dict[str, Any] = {"n_records": len(run.records), "norm_drift": run.norm_drift}
            if run.result is not None:
                entry.update(
                    sigma=[run.result.sigma.real, run.result.sigma.imag],
                    relative_error=run.result.relative_error,
                    window=list(run.result.transient_window),
                )
            gauges[tag] = entry
        theory = steady_state_conductivity(cfg.medium, cfg.drive)
        return {
            "schema_version": SCHEMA_VERSION,
            "epsdyn_version": __version__,
            "config": cfg.raw,
            "sigma_theory": [theory.real, theory.imag],
            "gauges": gauges,
            "cross_gauge": dict(self.cross_gauge),
            "checks": self.checks,
            "passed": self.passed,
            "timing": {"total_s": self.runtime_s, **{f"{k}_s": v.runtime_s for k, v in self.runs.items()}},
        }


def _run_gauge(cfg: ExperimentConfig, tag: str, chi0) -> GaugeRun:
    start = time.perf_counter()
    drives = {
        "base": DriveSpec(0.0, cfg.drive.omega, "re"),
        "re": cfg.drive.with_quadrature("re"),
        "im": cfg.drive.with_quadrature("im"),
    }
    trajs = {
        name: propagate(chi0, cfg.propagator, tag, cfg.medium, drive, cfg.constants)
        for name, drive in drives.items()
    }
    records = combine_quadratures(trajs["base"].records, trajs["re"].records, trajs["im"].records, cfg.medium, cfg.drive)
    drift = max(abs(r.norm - tr.records[0].norm) for tr in trajs.values() for r in tr.records)
    result = None
    if cfg.window is not None and cfg.propagator.t_final >= cfg.window[1] - 1e-9:
        result = conductivity(records, cfg.medium, cfg.drive, cfg.window)
    return GaugeRun(tag, records, trajs, result, float(drift), time.perf_counter() - start)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    start = time.perf_counter()
    grid = make_grid(config.grid)
    pk = config.packet
    chi0 = gaussian_packet(grid, pk.q0, pk.p0, pk.s_q, pk.s_p)
    runs = {}
    for tag in config.gauges:
        log.info("running %s", tag)
        runs[tag] = _run_gauge(config, tag, chi0)

    tol = config.tolerances
    checks: dict[str, dict] = {}

    def check(name, value, limit):
        checks[name] = {"value": float(value), "tolerance": float(limit), "passed": bool(value <= limit)}

    for tag, run in runs.items():
        check(f"{tag}.norm_drift", run.norm_drift, tol["norm_drift"])
        if run.result is not None:
            check(f"{tag}.sigma_relative_error", run.result.relative_error, tol["sigma_relative"])

    cross: dict[str, float] = {}
    if len(runs) == 2:
        ra, rp = runs["a_gauge"], runs["phi_gauge"]
        if ra.result is not None and rp.result is not None:
            cross["delta_sigma_rel"] = float(abs(ra.result.sigma - rp.result.sigma) / abs(ra.result.sigma))
            check("cross_gauge.delta_sigma_rel", cross["delta_sigma_rel"], tol["cross_gauge_sigma"])
        re_drive = config.drive.with_quadrature("re")
        cross["modulus_residual"] = modulus_equivalence_residual(
            ra.quadratures["re"].final, rp.quadratures["re"].final, config.medium, re_drive
        )
        check("cross_gauge.modulus_residual", cross["modulus_residual"], tol["modulus_equivalence"])
    return ExperimentReport(config, runs, cross, checks, time.perf_counter() - start)


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_csv(records: Sequence[ObservableRecord], path) -> Path:
    if not records:
        raise ValueError("cannot write an empty trajectory")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in records:
                writer.writerow([
                    _fmt(r.t),
                    _fmt(r.mean_p.real), _fmt(r.mean_p.imag),
                    _fmt(r.mean_qdot.real), _fmt(r.mean_qdot.imag),
                    _fmt(r.norm.real), _fmt(r.norm.imag),
                    _fmt(r.sigma_instant.real), _fmt(r.sigma_instant.imag),
                ])
    except OSError as exc:
        raise OSError(f"failed to write trajectory CSV {path}: {exc}") from exc
    return path


def read_csv(path) -> list[dict[str, float]]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [{k: float(v) for k, v in row.items()} for row in reader]


def emit_report(report: ExperimentReport | dict, path) -> Path:
    data = report.to_dict() if isinstance(report, ExperimentReport) else report
    path = Path(path)
    try:
        path.write_text(json.dumps(data, indent=2, default=str) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write report {path}: {exc}") from exc
    return path


def write_outputs(report: ExperimentReport, out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output_dir {out_dir} is not writable: {exc}") from exc
    paths = {tag: emit_csv(run.records, out_dir / f"trajectory_{tag}.csv") for tag, run in report.runs.items()}
    paths["report"] = emit_report(report, out_dir / "report.json")
    return paths


def _summary(report: ExperimentReport) -> str:
    lines = []
    theory = steady_state_conductivity(report.config.medium, report.config.drive)
    lines.append(f"sigma_theory = {theory:.6g}")
    for tag, run in report.runs.items():
        if run.result is not None:
            lines.append(f"{tag}: sigma = {run.result.sigma:.6g}  rel.err = {run.result.relative_error:.3g}")
        else:
            lines.append(f"{tag}: no conductivity window reached (t_final={report.config.propagator.t_final})")
    for name, chk in report.checks.items():
        mark = "PASS" if chk["passed"] else "FAIL"
        lines.append(f"[{mark}] {name}: {chk['value']:.3g} <= {chk['tolerance']:.3g}")
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="epsdyn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a TOML config")
    run.add_argument("config", help="path to the TOML config")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="override a dotted config key, e.g. medium.alpha=2.0")
    run.add_argument("--out", help="output directory (overrides output_dir)")
    run.add_argument("--quiet", action="store_true", help="suppress the summary")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(name)s: %(message)s")
    overrides = list(args.override)
    if args.out:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    try:
        config = load_config(args.config, overrides)
        report = run_experiment(config)
        write_outputs(report, config.output_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print(_summary(report))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
