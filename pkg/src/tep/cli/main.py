"""Command-line entry point: data generation through attention reports."""

from __future__ import annotations

import csv
import functools
import json
import os
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np
import yaml

from .. import HORIZONS
from ..datapipe import (
    CsvFormatError,
    fit_preprocess,
    generate_synthetic,
    load_directory,
    write_dataset,
)
from ..experiments import (
    WINDOW_SIZES,
    cross_validate,
    evaluate,
    run_training,
    window_sweep,
)
from ..fusion import Checkpoint, RegimeSchedule, predict
from ..interpret import export_heatmap, extract_attention
from ..metrics import HorizonReport
from ..shapley import channel_importance, temporal_importance
from .config import ConfigError, gen_config, load_config, run_settings

OUTPUT_ROOT_ENV = "TEP_OUTPUT_ROOT"


class RunContext:
    """Per-command output directory with a line-delimited JSON event log."""

    def __init__(self, cfg: dict, command: str):
        base = Path(cfg["output_dir"])
        root = os.environ.get(OUTPUT_ROOT_ENV, "")
        if root:
            rel = base.relative_to(base.anchor) if base.is_absolute() else base
            base = Path(root) / rel
        self.outdir = base / command
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.outdir / "run.ndjson"
        self.log_path.write_text("")
        snapshot = self.outdir / "config.yaml"
        snapshot.write_text(yaml.safe_dump(cfg, sort_keys=True))
        self.emit("start", command=command, seed=cfg["seed"])

    def emit(self, event: str, **fields):
        line = json.dumps({"event": event, **fields}, sort_keys=True, default=str)
        with open(self.log_path, "a") as fh:
            fh.write(line + "\n")
        click.echo(line)

    def write_json(self, name: str, payload) -> Path:
        path = self.outdir / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
        return path

    def write_csv(self, name: str, header, rows) -> Path:
        path = self.outdir / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        return path


def _fmt(v: Optional[float]) -> str:
    return "NA" if v is None else f"{v:.6f}"


def _load_dataset(cfg: dict, ctx: RunContext):
    if cfg["data_dir"]:
        ds, report = load_directory(
            cfg["data_dir"],
            quarters=cfg["generator"]["quarters"],
            pricing_window_days=cfg["generator"]["pricing_window_days"],
        )
        ctx.emit("data-loaded", source=cfg["data_dir"], kept=report.observations_kept,
                 dropped_short_history=report.dropped_short_history,
                 dropped_short_pricing=report.dropped_short_pricing,
                 dropped_post_default=report.dropped_post_default)
        return ds
    ds = generate_synthetic(gen_config(cfg), cfg["seed"])
    ctx.emit("data-generated", observations=len(ds.observations),
             defaulted=sum(ds.defaulted_flags().values()))
    return ds


def cli_command(fn):
    """Shared options plus the exit-code contract: 2 config, 1 runtime."""

    @click.option("--config", "config_path", type=click.Path(), default=None,
                  help="YAML config file; omitted keys take documented defaults.")
    @click.option("--seed", type=int, default=None, help="Override config seed.")
    @click.option("--output", type=click.Path(), default=None,
                  help="Override config output_dir.")
    @functools.wraps(fn)
    def wrapper(config_path, seed, output, **kwargs):
        try:
            cfg = load_config(config_path, {"seed": seed, "output_dir": output})
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        try:
            fn(cfg, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except (RuntimeError, ValueError, OSError, CsvFormatError) as exc:
            click.echo(f"runtime error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _report_rows(label: str, report: HorizonReport):
    return [[label] + [_fmt(v) for v in report.row()]]


def _write_report(ctx: RunContext, name: str, report: HorizonReport, label: str = "auc"):
    ctx.write_csv(f"{name}.csv", ["model"] + HorizonReport.header(), _report_rows(label, report))
    ctx.write_json(f"{name}.json", report.to_dict())


def _auc_figure(ctx: RunContext, name: str, report: HorizonReport):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [h for h in HORIZONS if report.auc[h] is not None]
    values = [report.auc[h] for h in labels]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(labels, values, color="#3b6ea5")
    ax.axhline(0.5, color="grey", linestyle="--", linewidth=0.8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("test AUC")
    ax.set_xlabel("horizon")
    fig.tight_layout()
    path = ctx.outdir / f"{name}.svg"
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


@click.group()
def cli():
    """Multi-horizon default prediction: data, training, evaluation, attribution."""


@cli.command()
@cli_command
def gen(cfg):
    """Generate synthetic channel CSVs from the generator settings."""
    ctx = RunContext(cfg, "gen")
    ds = generate_synthetic(gen_config(cfg), cfg["seed"])
    paths = write_dataset(ds, ctx.outdir / "data")
    ctx.emit("written", files=sorted(str(p) for p in paths.values()),
             observations=len(ds.observations))


@cli.command()
@cli_command
def prep(cfg):
    """Fit preprocessing statistics on the training split and audit them."""
    ctx = RunContext(cfg, "prep")
    ds = _load_dataset(cfg, ctx)
    settings = run_settings(cfg)
    train_ds, _, _ = ds.split_by_firm(cfg["seed"], settings.split)
    panels = {ch: [o.panels[ch] for o in train_ds.observations] for ch in settings.channels}
    stats = fit_preprocess(panels)
    ctx.write_json("preprocess.json", stats.to_dict())
    audit = {}
    for ch, cs in stats.channels.items():
        audit[ch] = {
            "features": len(cs.median),
            "degenerate_features": int(np.sum(cs.degenerate)),
            "train_observations": len(panels[ch]),
        }
    ctx.write_json("prep_report.json", audit)
    ctx.emit("prep-done", channels=sorted(audit))


@cli.command()
@cli_command
def train(cfg):
    """Train per the configured regime; emit checkpoint, log, and test metrics."""
    ctx = RunContext(cfg, "train")
    ds = _load_dataset(cfg, ctx)
    settings = run_settings(cfg)
    ckpt, (_, _, test_ds) = run_training(ds, settings, cfg["seed"])
    path = ckpt.save(ctx.outdir / "checkpoint.ckpt")
    ctx.write_json("train_log.json", ckpt.training_log)
    report = evaluate(ckpt, test_ds)
    _write_report(ctx, "eval", report, label=settings.regime)
    for entry in ckpt.training_log:
        ctx.emit("stage-done", stage=entry["stage"], best_epoch=entry["best_epoch"],
                 frozen_stable=entry["frozen_hash_before"] == entry["frozen_hash_after"])
    ctx.emit("trained", checkpoint=str(path), average_auc=report.average)


@cli.command("eval")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=True)
@cli_command
def eval_cmd(cfg, checkpoint_path):
    """Evaluate a checkpoint on the held-out test split."""
    ctx = RunContext(cfg, "eval")
    ds = _load_dataset(cfg, ctx)
    settings = run_settings(cfg)
    _, _, test_ds = ds.split_by_firm(cfg["seed"], settings.split)
    ckpt = Checkpoint.load(checkpoint_path)
    report = evaluate(ckpt, test_ds)
    _write_report(ctx, "eval", report)
    _auc_figure(ctx, "eval", report)
    ctx.emit("evaluated", average_auc=report.average,
             test_observations=len(test_ds.observations))


@cli.command()
@click.option("--k", type=int, default=None, help="Fold count; overrides cv.k.")
@cli_command
def cv(cfg, k):
    """Company-stratified k-fold cross-validation; mean (std) per horizon."""
    ctx = RunContext(cfg, "cv")
    ds = _load_dataset(cfg, ctx)
    settings = run_settings(cfg)
    folds = k if k is not None else cfg["cv"]["k"]
    report = cross_validate(ds, folds, settings, cfg["seed"])
    keys = ["average"] + list(HORIZONS)
    ctx.write_csv("cv.csv", ["metric"] + HorizonReport.header(),
                  [["mean (std)"] + [report.cell(key) for key in keys]])
    ctx.write_json("cv.json", report.to_dict())
    ctx.emit("cv-done", k=folds, mean_average=report.mean["average"])


@cli.command("sweep-window")
@cli_command
def sweep_window(cfg):
    """Pricing-only models across lookback window sizes."""
    ctx = RunContext(cfg, "sweep-window")
    ds = _load_dataset(cfg, ctx)
    settings = run_settings(cfg)
    sweep = cfg["sweep"]
    result = window_sweep(ds, sweep["kind"], sweep["sizes"], settings, cfg["seed"])
    rows = []
    for size in sweep["sizes"]:
        rep = result.reports[size]
        rows.append([size, WINDOW_SIZES[size]] + [_fmt(v) for v in rep.row()])
    ctx.write_csv("sweep.csv", ["window", "days"] + HorizonReport.header(), rows)
    ctx.write_json("sweep.json", {
        "reports": {s: result.reports[s].to_dict() for s in sweep["sizes"]},
        "dropped": result.dropped,
    })
    ctx.emit("sweep-done", sizes=list(sweep["sizes"]))


@cli.command()
@cli_command
def shapley(cfg):
    """Channel attribution: Shapley values of the Gini score per channel."""
    ctx = RunContext(cfg, "shapley")
    ds = _load_dataset(cfg, ctx)
    settings = run_settings(cfg)
    ci = channel_importance(ds, settings, cfg["seed"],
                            per_horizon=cfg["shapley"]["per_horizon"])
    ctx.write_json("shapley.json", ci.to_dict())
    shares = ci.result.shares()
    ctx.write_csv(
        "shapley.csv",
        ["channel", "value", "share"],
        [[g, _fmt(ci.result.values[g]), _fmt(shares[g])] for g in ci.game.groups],
    )
    if ci.per_horizon:
        rows = [
            [h] + [_fmt(ci.per_horizon[h].values[g]) for g in ci.game.groups]
            for h in ci.per_horizon
        ]
        ctx.write_csv("shapley_per_horizon.csv", ["horizon"] + list(ci.game.groups), rows)
    _shapley_figure(ctx, ci)
    if cfg["shapley"]["temporal"]:
        ti = temporal_importance(ds, settings, cfg["seed"])
        ctx.write_json("temporal.json", ti.to_dict())
        table = ti.percentage_table()
        ctx.write_csv(
            "temporal.csv",
            ["channel", "past_year_pct", "previous_pct"],
            [[ch, _fmt(row["past_year"]), _fmt(row["previous"])]
             for ch, row in table.items()],
        )
    ctx.emit("shapley-done", ranking=ci.result.ranked())


def _shapley_figure(ctx: RunContext, ci):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = list(ci.game.groups)
    values = [ci.result.values[g] for g in groups]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(groups, values, color=["#3b6ea5", "#d08a3e", "#5d9e63", "#999999"][: len(groups)])
    ax.set_ylabel("Shapley value (Gini share)")
    fig.tight_layout()
    path = ctx.outdir / "shapley.svg"
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


@cli.command()
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=True)
@cli_command
def attention(cfg, checkpoint_path):
    """Averaged defaulted vs. surviving attention heat maps from a checkpoint."""
    ctx = RunContext(cfg, "attention")
    ds = _load_dataset(cfg, ctx)
    settings = run_settings(cfg)
    _, _, test_ds = ds.split_by_firm(cfg["seed"], settings.split)
    ckpt = Checkpoint.load(checkpoint_path)
    groups = extract_attention(
        ckpt,
        test_ds.observations,
        channel=cfg["attention"]["channel"],
        horizon=cfg["attention"]["horizon"],
    )
    written = []
    for maps in groups.values():
        if maps is not None:
            written.extend(export_heatmap(maps, ctx.outdir))
    ctx.emit("attention-done", files=sorted(str(p) for p in written))


if __name__ == "__main__":
    cli()
