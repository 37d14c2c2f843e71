"""Batch front door: simulate, sweep, fit, analyze.

Exit codes are fixed for scripting: 0 success, 2 config violation (every
violated field named), 3 I/O failure, 4 data error from the stats or log
layers (first token of the stderr line is a machine-readable reason).
"""

from __future__ import annotations

import argparse
import itertools
import json
import statistics
import sys
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

from . import engine, logio, stats
from .core import ConfigurationError, InputError, substream_seed
from .decision import SharingModel
from .engine import SimConfig
from .plot import Panel, Series, render_time_series_svg

_MODEL_KEYS = ("intercept", "w_humor", "w_relevance", "w_selfref")
_SIM_KEYS = {f.name for f in dataclass_fields(SimConfig)}
_TOP_KEYS = _SIM_KEYS | {"sweep", "output_dir"}
_SWEEP_KEYS = {"axes", "replicates"}


@dataclass
class SweepSpec:
    axes: dict
    replicates: int


# ---------------------------------------------------------------------------
# Config loading (strict schema)
# ---------------------------------------------------------------------------

def _build_sharing_model(value) -> SharingModel:
    if not isinstance(value, dict):
        raise ConfigurationError("sharing_model must be an object",
                                 fields=("sharing_model",))
    unknown = sorted(set(value) - set(_MODEL_KEYS))
    if unknown:
        raise ConfigurationError(
            f"unknown sharing_model keys: {', '.join(unknown)}",
            fields=[f"sharing_model.{k}" for k in unknown])
    merged = {k: getattr(engine.DEFAULT_SHARING_MODEL, k) for k in _MODEL_KEYS}
    for key, v in value.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigurationError(f"sharing_model.{key} must be a number",
                                     fields=(f"sharing_model.{key}",))
        merged[key] = float(v)
    try:
        return SharingModel(**merged)
    except InputError as exc:
        raise ConfigurationError(str(exc), fields=("sharing_model",)) from None


def load_run_config(path):
    """Parse a run-config JSON file; returns (SimConfig, SweepSpec|None, out_dir|None).

    Unknown keys are rejected and every SimConfig invariant is revalidated.
    """
    with open(path, "r") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path} is not valid JSON: {exc}",
                                     fields=("<document>",)) from None
    if not isinstance(doc, dict):
        raise ConfigurationError("config root must be a JSON object",
                                 fields=("<document>",))
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}",
                                 fields=unknown)

    overrides = {}
    for key in _SIM_KEYS & set(doc):
        if key == "sharing_model":
            overrides[key] = _build_sharing_model(doc[key])
        else:
            overrides[key] = doc[key]
    config = SimConfig(**overrides)
    config.ensure_valid()

    sweep = None
    if "sweep" in doc:
        sweep = _parse_sweep(doc["sweep"], config)
    out_dir = doc.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigurationError("output_dir must be a string",
                                 fields=("output_dir",))
    return config, sweep, out_dir


def _parse_sweep(value, config: SimConfig) -> SweepSpec:
    if not isinstance(value, dict):
        raise ConfigurationError("sweep must be an object", fields=("sweep",))
    unknown = sorted(set(value) - _SWEEP_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown sweep keys: {', '.join(unknown)}",
                                 fields=[f"sweep.{k}" for k in unknown])
    axes = value.get("axes")
    if not isinstance(axes, dict) or not axes:
        raise ConfigurationError("sweep.axes must be a non-empty object",
                                 fields=("sweep.axes",))
    for name, values in axes.items():
        if not _is_sweepable(name):
            raise ConfigurationError(f"unknown sweep axis {name!r}",
                                     fields=(f"sweep.axes.{name}",))
        if not isinstance(values, list) or not values:
            raise ConfigurationError(f"sweep axis {name!r} needs a non-empty list",
                                     fields=(f"sweep.axes.{name}",))
    replicates = value.get("replicates", 1)
    if not isinstance(replicates, int) or replicates < 1:
        raise ConfigurationError("sweep.replicates must be a positive integer",
                                 fields=("sweep.replicates",))
    # Every sweep point must itself be a valid config.
    spec = SweepSpec(axes=dict(axes), replicates=replicates)
    for point in _sweep_points(spec):
        _apply_point(config, point).ensure_valid()
    return spec


def _is_sweepable(name: str) -> bool:
    if name in _SIM_KEYS and name not in ("sharing_model",):
        return True
    return (name.startswith("sharing_model.")
            and name.split(".", 1)[1] in _MODEL_KEYS)


def _sweep_points(spec: SweepSpec):
    names = list(spec.axes)
    for combo in itertools.product(*(spec.axes[n] for n in names)):
        yield dict(zip(names, combo))


def _apply_point(config: SimConfig, point: dict) -> SimConfig:
    overrides = {}
    model_patch = {}
    for name, value in point.items():
        if name.startswith("sharing_model."):
            model_patch[name.split(".", 1)[1]] = float(value)
        else:
            overrides[name] = value
    if model_patch:
        base = config.sharing_model
        merged = {k: getattr(base, k) for k in _MODEL_KEYS}
        merged.update(model_patch)
        overrides["sharing_model"] = SharingModel(**merged)
    return config.with_overrides(**overrides)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _summary_from_output(output: engine.SimOutput) -> logio.HitSummary:
    """HitSummary for a run without re-reading the event log.

    Exposure bins come from differencing the cumulative series, which equals
    binning the EXPOSE events by tick.
    """
    width = output.config.analysis_bin_width
    bins = {}
    prev = 0
    for tick, cum in enumerate(output.cumulative_exposures):
        count = int(cum) - prev
        prev = int(cum)
        if count:
            start = (tick // width) * width
            bins[start] = bins.get(start, 0) + count
    return logio.summary_from_counts(dict(output.per_meme_hits), bins, width,
                                     logio.DEFAULT_COUNTED_KINDS)


def cmd_simulate(config_path, out_dir, seed_override=None) -> int:
    config, _, cfg_out = load_run_config(config_path)
    if seed_override is not None:
        config = config.with_overrides(master_seed=seed_override)
        config.ensure_valid()
    out = _resolve_out_dir(out_dir, cfg_out)

    output = engine.run(config)
    summary = _summary_from_output(output)

    output.write_event_log(out / "events.log")
    output.write_timeseries_csv(out / "timeseries.csv")
    output.write_hits_csv(out / "hits.csv")
    logio.write_summary_json(summary, out / "summary.json")

    ticks = list(range(len(output.cumulative_exposures)))
    svg = render_time_series_svg([
        Panel(title="Currently infected",
              series=[Series("", ticks, [int(v) for v in output.currently_infected])],
              y_label="(agent, meme) pairs"),
        Panel(title="Cumulative exposures",
              series=[Series("", ticks, [int(v) for v in output.cumulative_exposures])],
              y_label="exposures"),
    ])
    (out / "timeseries.svg").write_text(svg)
    return 0


def cmd_sweep(config_path, out_dir) -> int:
    config, sweep, cfg_out = load_run_config(config_path)
    if sweep is None:
        raise ConfigurationError("config has no sweep section", fields=("sweep",))
    out = _resolve_out_dir(out_dir, cfg_out)

    axis_names = list(sweep.axes)
    # Replicate r of every sweep point reuses the same derived seed, so rows
    # of one point differ only in the seed column.
    seeds = [substream_seed(config.master_seed, r) for r in range(sweep.replicates)]
    rows = []
    for point in _sweep_points(sweep):
        for replicate in range(sweep.replicates):
            run_cfg = _apply_point(config, point).with_overrides(
                master_seed=seeds[replicate])
            output = engine.run(run_cfg)
            hits = list(output.per_meme_hits.values())
            final = int(output.cumulative_exposures[-1]) \
                if len(output.cumulative_exposures) else 0
            rows.append(
                [point[name] for name in axis_names]
                + [seeds[replicate], final,
                   max(hits) if hits else 0,
                   float(statistics.median(hits)) if hits else 0.0])

    with open(out / "sweep.csv", "w", newline="") as fh:
        fh.write(",".join(axis_names
                          + ["seed", "final_cumulative_exposures",
                             "max_hits", "median_hits"]) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    return 0


def cmd_fit(data_path, model: str, out_path) -> int:
    design = stats.load_design_csv(data_path)
    if model == "ols":
        result = stats.ols_fit(design)
    else:
        result = stats.logistic_fit(design)
    out = Path(out_path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    result.write_json(out)
    return 0


def cmd_analyze(log_path, bin_width, out_dir, sim_timeseries=None) -> int:
    summary = logio.aggregate_hits(logio.read_log(log_path),
                                   bin_width_ticks=bin_width)
    out = _resolve_out_dir(out_dir, None)
    logio.write_summary_json(summary, out / "summary.json")
    logio.write_hits_csv(summary.per_meme, out / "hits.csv")
    logio.write_bins_csv(summary.bins, out / "bins.csv")
    if sim_timeseries is not None:
        # Side-by-side comparison: analyzed log traffic next to a simulated
        # exposure curve.
        starts = sorted(summary.bins)
        left = Panel(title="Analyzed log: hits per bin",
                     series=[Series("", starts,
                                    [summary.bins[s] for s in starts])],
                     x_label=f"tick (bin width {bin_width})", y_label="hits")
        ticks, cum = _read_timeseries_csv(sim_timeseries)
        right = Panel(title="Simulation: cumulative exposures",
                      series=[Series("", ticks, cum)], y_label="exposures")
        (out / "comparison.svg").write_text(render_time_series_svg([left, right]))
    return 0


def _read_timeseries_csv(path):
    ticks, cum = [], []
    with open(path, "r", newline="") as fh:
        header = fh.readline().strip()
        if header != "tick,currently_infected,cumulative_exposures":
            raise InputError(f"{path}: not a simulation timeseries CSV")
        for line in fh:
            t, _, c = line.strip().split(",")
            ticks.append(int(t))
            cum.append(int(c))
    return ticks, cum


def _resolve_out_dir(cli_out, cfg_out) -> Path:
    target = cli_out if cli_out is not None else cfg_out
    if target is None:
        raise ConfigurationError(
            "no output directory: pass --out or set output_dir in the config",
            fields=("output_dir",))
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memesim",
        description="Agent-based SIS meme-sharing simulator and analytics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's master seed")
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("sweep", help="run the config's parameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("fit", help="fit a regression model to a CSV table")
    p.add_argument("--data", required=True,
                   help="CSV with a header; last column is the response")
    p.add_argument("--model", required=True, choices=("ols", "logistic"))
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("analyze", help="aggregate an access log")
    p.add_argument("--log", required=True)
    p.add_argument("--bin", type=int, default=1, help="bin width in ticks")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--sim-timeseries", default=None,
                   help="simulation timeseries.csv to render a two-panel "
                        "comparison SVG against")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, seed_override=args.seed)
        if args.command == "sweep":
            return cmd_sweep(args.config, args.out)
        if args.command == "fit":
            return cmd_fit(args.data, args.model, args.out)
        return cmd_analyze(args.log, args.bin, args.out,
                           sim_timeseries=args.sim_timeseries)
    except ConfigurationError as exc:
        fields = ", ".join(exc.fields) if exc.fields else "<config>"
        print(f"config-error: {exc} [fields: {fields}]", file=sys.stderr)
        return 2
    except stats.DegenerateResponseError as exc:
        print(f"degenerate-response: {exc}", file=sys.stderr)
        return 4
    except stats.SingularDesignError as exc:
        print(f"singular-design: {exc}", file=sys.stderr)
        return 4
    except stats.UndefinedRSquaredError as exc:
        print(f"r-squared-undefined: {exc}", file=sys.stderr)
        return 4
    except logio.LogParseError as exc:
        print(f"parse-error: {exc}", file=sys.stderr)
        return 4
    except InputError as exc:
        print(f"input-error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"io-error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
