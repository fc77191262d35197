"""Configuration parsing, command dispatch, CSV serialization and plots."""
from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .allocation import AllocationMode
from .clustering import (
    ControlledDisparity,
    DiskAnnulus,
    FixedDisk,
    InDiskHalfRho,
    OrderingMethod,
    RandomInCell,
    SinrThreshold,
    STRATEGY_NAMES,
)
from .experiment import (
    ComparisonResult,
    SimConfig,
    StrategySpec,
    SweepResult,
    run_disparity_sweep,
    run_strategy_comparison,
)

CSV_HEADER = ("theta,disparity,trials,placement_feasible_pct,success_pct,"
              "mean_rate_strong,mean_rate_weak,mean_power_strong,"
              "mean_power_weak,mean_sum_rate")
COMPARE_HEADER = ("strategy,mode,theta,trials,placement_feasible_pct,success_pct,"
                  "mean_rate_strong,mean_rate_weak,mean_power_strong,"
                  "mean_power_weak,mean_sum_rate,mean_r_strong,mean_r_weak")

_SCALAR_KEYS = {
    "density": float, "window_radius": float, "eta": float, "noise": float,
    "interferer_power": float, "budget": float, "mode": str,
    "trials": int, "seed": int, "ordering": str,
    "robust_allocation": bool, "instantaneous_csi": bool,
    "ordering_instantaneous": bool,
}
_STRATEGY_PARAMS = {
    "random_in_cell": (),
    "in_disk_half_rho": (),
    "fixed_disk": ("radius",),
    "disk_annulus": ("r_disk", "r_in", "r_out"),
    "sinr_threshold": ("t1", "t2"),
    "controlled_disparity": ("disparity",),
}
_STRATEGY_TYPES = {name: cls for cls, name in STRATEGY_NAMES.items()}


class ConfigError(Exception):
    """Invalid configuration file; message carries key name and line."""


def _line_of(text: str, key: str) -> str:
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.lstrip()
        if stripped.startswith(key) and stripped[len(key):len(key) + 1] in ("", " ", "=", "\t"):
            return f" (line {lineno})"
    return ""


def _fail(text: str, key: str, why: str):
    raise ConfigError(f"config key '{key}'{_line_of(text, key)}: {why}")


def _parse_strategy(table, text: str) -> StrategySpec:
    if not isinstance(table, dict):
        _fail(text, "strategy", "must be a table")
    name = table.get("name")
    if name not in _STRATEGY_PARAMS:
        _fail(text, "name", f"unknown strategy {name!r}, expected one of "
                            f"{sorted(_STRATEGY_PARAMS)}")
    wanted = _STRATEGY_PARAMS[name]
    extras = {"name", "label", "mode", "fixed_fractions", *wanted}
    for key in table:
        if key not in extras:
            _fail(text, key, f"unknown key in strategy '{name}'")
    try:
        params = {p: float(table[p]) for p in wanted}
    except KeyError as e:
        _fail(text, str(e.args[0]), f"strategy '{name}' requires it")
    try:
        strategy = _STRATEGY_TYPES[name](**params)
    except ValueError as e:
        _fail(text, "strategy", str(e))
    mode = None
    if "mode" in table:
        mode = _parse_mode(table["mode"], text)
    fractions = None
    if "fixed_fractions" in table:
        fractions = tuple(float(f) for f in table["fixed_fractions"])
    return StrategySpec(label=str(table.get("label", name)), strategy=strategy,
                        mode=mode, fixed_fractions=fractions)


def _parse_mode(value, text: str) -> AllocationMode:
    try:
        return AllocationMode(value)
    except ValueError:
        _fail(text, "mode", f"unknown mode {value!r}, expected one of "
                            f"{[m.value for m in AllocationMode]}")


def parse_config(path) -> SimConfig:
    """Read a TOML configuration; missing keys take the documented defaults,
    unknown keys and invalid values are rejected with their key name."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config parse error in {path}: {e}") from e

    known = set(_SCALAR_KEYS) | {"fixed_fractions", "theta_list", "disparity", "strategy"}
    for key in doc:
        if key not in known:
            _fail(text, key, "unknown key")

    kwargs = {}
    for key, typ in _SCALAR_KEYS.items():
        if key not in doc:
            continue
        value = doc[key]
        if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            value = float(value)
        elif not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
            _fail(text, key, f"expected {typ.__name__}, got {value!r}")
        if key == "mode":
            kwargs["mode"] = _parse_mode(value, text)
        elif key == "ordering":
            try:
                kwargs["ordering"] = OrderingMethod(value)
            except ValueError:
                _fail(text, "ordering", f"unknown ordering {value!r}")
        elif key == "seed":
            kwargs["master_seed"] = value
        else:
            kwargs[key] = value

    if "theta_list" in doc:
        try:
            kwargs["theta_list"] = tuple(float(t) for t in doc["theta_list"])
        except (TypeError, ValueError):
            _fail(text, "theta_list", f"expected a list of reals, got {doc['theta_list']!r}")
    if "fixed_fractions" in doc:
        try:
            kwargs["fixed_fractions"] = tuple(float(f) for f in doc["fixed_fractions"])
        except (TypeError, ValueError):
            _fail(text, "fixed_fractions",
                  f"expected a list of reals, got {doc['fixed_fractions']!r}")
    if "disparity" in doc:
        table = doc["disparity"]
        if not isinstance(table, dict):
            _fail(text, "disparity", "expected a table with min/max/step")
        for key in table:
            if key not in ("min", "max", "step"):
                _fail(text, key, "unknown key in disparity table")
        if "min" in table:
            kwargs["disparity_min"] = float(table["min"])
        if "max" in table:
            kwargs["disparity_max"] = float(table["max"])
        if "step" in table:
            kwargs["disparity_step"] = float(table["step"])
    if "strategy" in doc:
        tables = doc["strategy"]
        if isinstance(tables, dict):
            tables = [tables]
        kwargs["strategies"] = tuple(_parse_strategy(t, text) for t in tables)

    try:
        return SimConfig(**kwargs)
    except ValueError as e:
        raise ConfigError(f"invalid configuration in {path}: {e}") from e


def emit_config(config: SimConfig, path) -> None:
    """Write the canonical TOML for a configuration (round-trips through
    :func:`parse_config`)."""
    lines = [
        f"density = {config.density!r}",
        f"eta = {config.eta!r}",
        f"noise = {config.noise!r}",
        f"interferer_power = {config.interferer_power!r}",
        f"budget = {config.budget!r}",
        f'mode = "{config.mode.value}"',
        f"theta_list = [{', '.join(repr(t) for t in config.theta_list)}]",
        f"trials = {config.trials}",
        f"seed = {config.master_seed}",
        f'ordering = "{config.ordering.value}"',
        f"ordering_instantaneous = {str(config.ordering_instantaneous).lower()}",
        f"robust_allocation = {str(config.robust_allocation).lower()}",
        f"instantaneous_csi = {str(config.instantaneous_csi).lower()}",
    ]
    if config.window_radius is not None:
        lines.insert(1, f"window_radius = {config.window_radius!r}")
    if config.fixed_fractions is not None:
        lines.append("fixed_fractions = "
                     f"[{', '.join(repr(f) for f in config.fixed_fractions)}]")
    lines.append("")
    lines.append("[disparity]")
    lines.append(f"min = {config.disparity_min!r}")
    lines.append(f"max = {config.disparity_max!r}")
    lines.append(f"step = {config.disparity_step!r}")
    for spec in config.strategies:
        lines.append("")
        lines.append("[[strategy]]")
        name = STRATEGY_NAMES[type(spec.strategy)]
        lines.append(f'name = "{name}"')
        lines.append(f'label = "{spec.label}"')
        for param in _STRATEGY_PARAMS[name]:
            lines.append(f"{param} = {getattr(spec.strategy, param)!r}")
        if spec.mode is not None:
            lines.append(f'mode = "{spec.mode.value}"')
        if spec.fixed_fractions is not None:
            lines.append("fixed_fractions = "
                         f"[{', '.join(repr(f) for f in spec.fixed_fractions)}]")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def emit_csv(result: SweepResult, path) -> None:
    """Serialize a sweep, one row per (theta, disparity), six decimals,
    empty conditional fields, trailing newline, UTF-8."""
    lines = [CSV_HEADER]
    for row in result.rows:
        lines.append(",".join([
            _fmt(row.theta), _fmt(row.disparity), str(row.trials),
            _fmt(row.placement_feasible_pct), _fmt(row.success_pct),
            _fmt(row.mean_rate_strong), _fmt(row.mean_rate_weak),
            _fmt(row.mean_power_strong), _fmt(row.mean_power_weak),
            _fmt(row.mean_sum_rate),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_comparison_csv(result: ComparisonResult, path) -> None:
    lines = [COMPARE_HEADER]
    for row in result.rows:
        lines.append(",".join([
            row.strategy, row.mode, _fmt(row.theta), str(row.trials),
            _fmt(row.placement_feasible_pct), _fmt(row.success_pct),
            _fmt(row.mean_rate_strong), _fmt(row.mean_rate_weak),
            _fmt(row.mean_power_strong), _fmt(row.mean_power_weak),
            _fmt(row.mean_sum_rate), _fmt(row.mean_r_strong),
            _fmt(row.mean_r_weak),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_sweep_csv(path) -> list[dict]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            try:
                rows.append({
                    "theta": float(raw["theta"]),
                    "disparity": float(raw["disparity"]),
                    "success_pct": float(raw["success_pct"]),
                    "placement_feasible_pct": float(raw["placement_feasible_pct"]),
                    "mean_rate_strong": float(raw["mean_rate_strong"]) if raw["mean_rate_strong"] else math.nan,
                    "mean_rate_weak": float(raw["mean_rate_weak"]) if raw["mean_rate_weak"] else math.nan,
                    "mean_power_strong": float(raw["mean_power_strong"]) if raw["mean_power_strong"] else math.nan,
                    "mean_power_weak": float(raw["mean_power_weak"]) if raw["mean_power_weak"] else math.nan,
                })
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}: malformed CSV row {lineno}: {e}") from e
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


# Line styles per theta, mirroring the dashed / dash-dotted / solid convention
# for three QoS levels.
_THETA_STYLES = ["--", "-.", "-", ":"]


def emit_plots(csv_path, out_dir) -> list[Path]:
    """Render rates, powers and success percentage against disparity as SVG,
    one curve per theta."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = _read_sweep_csv(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    thetas = sorted({r["theta"] for r in rows})
    styles = {t: _THETA_STYLES[i % len(_THETA_STYLES)] for i, t in enumerate(thetas)}

    panels = [
        ("rates_vs_disparity.svg", "mean rate (nats per channel use)",
         [("mean_rate_strong", "strong", "C0"), ("mean_rate_weak", "weak", "C1")]),
        ("powers_vs_disparity.svg", "mean message power (fraction of budget)",
         [("mean_power_strong", "strong", "C0"), ("mean_power_weak", "weak", "C1")]),
        ("success_vs_disparity.svg", "successful transmissions (%)",
         [("success_pct", "success", "C2")]),
    ]
    written = []
    for fname, ylabel, series in panels:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for theta in thetas:
            pts = sorted((r for r in rows if r["theta"] == theta),
                         key=lambda r: r["disparity"])
            xs = [r["disparity"] for r in pts]
            for column, who, color in series:
                ys = [r[column] for r in pts]
                (line,) = ax.plot(xs, ys, styles[theta], color=color,
                                  label=f"{who}, theta={theta:g}")
                line.set_gid(f"curve-theta-{theta:g}-{who}")
        ax.set_xlabel("channel disparity (weak/strong link-distance ratio)")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        target = out_dir / fname
        fig.savefig(target, format="svg")
        plt.close(fig)
        written.append(target)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nomasim",
        description="Downlink NOMA channel-disparity simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep_p = sub.add_parser("sweep", help="run the controlled-disparity sweep")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--out", required=True)
    sweep_p.add_argument("--trials", type=int)
    sweep_p.add_argument("--seed", type=int)
    sweep_p.add_argument("--workers", type=int)

    compare_p = sub.add_parser("compare", help="compare clustering strategies")
    compare_p.add_argument("--config", required=True)
    compare_p.add_argument("--out", required=True)
    compare_p.add_argument("--trials", type=int)
    compare_p.add_argument("--seed", type=int)
    compare_p.add_argument("--workers", type=int)

    plot_p = sub.add_parser("plot", help="render SVG plots from a sweep CSV")
    plot_p.add_argument("--input", required=True)
    plot_p.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "plot":
            written = emit_plots(args.input, args.out)
            for p in written:
                print(p)
            return 0

        config = parse_config(args.config)
        overrides = {}
        if args.trials is not None:
            if args.trials < 1:
                raise ConfigError(f"--trials must be positive, got {args.trials}")
            overrides["trials"] = args.trials
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if overrides:
            from dataclasses import replace
            config = replace(config, **overrides)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

        started = time.perf_counter()
        if args.command == "sweep":
            result = run_disparity_sweep(config, workers=args.workers)
            target = out_dir / "sweep.csv"
            emit_csv(result, target)
        else:
            result = run_strategy_comparison(config, workers=args.workers)
            target = out_dir / "compare.csv"
            emit_comparison_csv(result, target)
        print(f"{target} ({len(result.rows)} rows, "
              f"{time.perf_counter() - started:.1f}s)")
        return 0
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
