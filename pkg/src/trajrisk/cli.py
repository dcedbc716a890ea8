"""Pipeline CLI: generate -> heatmap -> train -> evaluate -> report.

Every stage reads and writes only files under --out, so stages can be
re-run independently; `all` chains them.  Configuration merges three
layers: built-in defaults, an optional JSON --config file, and repeated
--set dotted.path=value overrides.  All outputs are pure functions of
the resolved config, so a rerun reproduces every artifact byte for
byte.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .dataset import (apply_stationary_smoothing, extract_examples,
                      load_dataset, save_dataset, split_scenes)
from .errors import ConfigError, TrajriskError
from .metrics import (StratifiedReport, aggregate_report, score_example,
                      write_bins_csv, write_examples_csv, write_report_csv,
                      write_violations_csv)
from .predictor import (MixturePrediction, TrainConfig, forward_batch,
                        load_checkpoint, prepare_arrays,
                        sample_from_prediction, save_checkpoint, train)
from .predictor.training import VARIANTS
from .report import (emit_result_tables, render_binned_bars,
                     render_fde_diff_colorplot, render_weight_heatmap_svg)
from .riskmap import RiskHeatmap, build_heatmap
from .simgen import (CrosswalkSpec, RoadSpec, WorldConfig, generate_world,
                     simulate_scenes)

DEFAULT_CONFIG = {
    "seed": 42,
    "world": {},
    "dataset": {"stationary_threshold_m": 1.0},
    "split": {"test_fraction": 0.25},
    "heatmap": {"grid_n": 100},
    "train": {
        "classes": ["vehicle", "pedestrian"],
        "variants": list(VARIANTS),
        "epochs": 12,
        "batch_size": 64,
        "learning_rate": 0.01,
        "momentum": 0.9,
        "loss_horizon_steps": 6,
        "rotation_augmentation": False,
        "hidden_width": 64,
        "n_modes": 4,
    },
    "evaluate": {"n_samples": 100},
    "report": {
        "speed_bin_edges": [float(v) for v in range(0, 26, 2)],
        "weight_bin_edges": [1.0 + 0.75 * i for i in range(13)],
    },
}

STAGES = ("generate", "heatmap", "train", "evaluate", "report")


# --- config plumbing -------------------------------------------------------

def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_override(expr: str):
    if "=" not in expr:
        raise ConfigError(f"--set expects dotted.key=value, got {expr!r}")
    key, raw = expr.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"--set expects dotted.key=value, got {expr!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def _apply_override(cfg: dict, path, value):
    node = cfg
    for p in path[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {'.'.join(path)} crosses a leaf")
    node[path[-1]] = value


def resolve_config(config_path=None, overrides=(), seed=None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {config_path} must hold a JSON object")
        cfg = _deep_merge(cfg, loaded)
    for expr in overrides:
        _apply_override(cfg, *_parse_override(expr))
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def _stage_seed(cfg: dict, section: str) -> int:
    return int(cfg.get(section, {}).get("seed", cfg["seed"]))


def _world_config(cfg: dict) -> WorldConfig:
    opts = dict(cfg.get("world") or {})
    opts.setdefault("seed", cfg["seed"])
    known = {f.name: f for f in dataclasses.fields(WorldConfig)}
    kwargs = {}
    for k, v in opts.items():
        if k not in known:
            raise ConfigError(f"unknown world option {k!r}")
        if k == "roads":
            v = [RoadSpec(**r) for r in v]
        elif k == "crosswalks":
            v = [CrosswalkSpec(**c) for c in v]
        elif isinstance(known[k].default, tuple) and isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    return WorldConfig(**kwargs)


def _require(out: Path, stage: str, needs) -> None:
    for fname, producer in needs:
        if not (out / fname).exists():
            raise ConfigError(
                f"stage {stage} requires output of stage {producer}: "
                f"{fname} not found in {out}")


def _prepared_splits(cfg: dict, out: Path):
    ds = load_dataset(out / "dataset.csv")
    ds = apply_stationary_smoothing(
        ds, threshold=float(cfg["dataset"]["stationary_threshold_m"]))
    return split_scenes(ds, float(cfg["split"]["test_fraction"]),
                        _stage_seed(cfg, "split"))


def _load_heatmaps(path) -> dict:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(blob, dict):
        blob = [blob]
    hms = [RiskHeatmap.from_json(o) for o in blob]
    return {h.map_id: h for h in hms}


def _variants(cfg: dict, variant=None):
    if variant is not None:
        return [variant]
    return list(cfg["train"]["variants"])


# --- stages ----------------------------------------------------------------

def cmd_generate(cfg: dict, out: Path) -> None:
    wc = _world_config(cfg)
    mapspec = generate_world(wc)
    ds, annotations = simulate_scenes(mapspec, wc)
    save_dataset(ds, out / "dataset.csv")
    annotations.save(out / "annotations.json")
    print(f"generate: {len(ds.scenes)} scenes, {ds.n_tracks()} tracks "
          f"-> {out / 'dataset.csv'}")


def cmd_heatmap(cfg: dict, out: Path) -> None:
    _require(out, "heatmap", [("dataset.csv", "generate")])
    train_ds, _ = _prepared_splits(cfg, out)
    grid_n = int(cfg["heatmap"]["grid_n"])
    hms = [build_heatmap(train_ds, m, grid_n) for m in train_ds.maps]
    blob = hms[0].to_json() if len(hms) == 1 else [h.to_json() for h in hms]
    (out / "heatmap.json").write_text(json.dumps(blob) + "\n",
                                      encoding="utf-8")
    total = sum(int(h.grid.sum()) for h in hms)
    print(f"heatmap: {total} interaction events over {len(hms)} map(s) "
          f"-> {out / 'heatmap.json'}")


def _scene_heatmap_index(ds, heatmaps) -> dict:
    out = {}
    for scene in ds.scenes:
        if scene.map_id not in heatmaps:
            raise ConfigError(
                f"heatmap.json has no grid for map {scene.map_id!r}")
        out[scene.scene_id] = heatmaps[scene.map_id]
    return out


def cmd_train(cfg: dict, out: Path, variant=None) -> None:
    _require(out, "train", [("dataset.csv", "generate"),
                            ("heatmap.json", "heatmap")])
    train_ds, _ = _prepared_splits(cfg, out)
    heatmaps = _load_heatmaps(out / "heatmap.json")
    scene_hm = _scene_heatmap_index(train_ds, heatmaps)
    examples = extract_examples(train_ds)
    tcfg = cfg["train"]
    for cls in tcfg["classes"]:
        exs = [e for e in examples if e.agent_class.model_class.value == cls]
        if not exs:
            raise ConfigError(f"no training examples for class {cls!r}")
        for var in _variants(cfg, variant):
            config = TrainConfig(
                variant=var,
                epochs=int(tcfg["epochs"]),
                batch_size=int(tcfg["batch_size"]),
                learning_rate=float(tcfg["learning_rate"]),
                momentum=float(tcfg["momentum"]),
                seed=_stage_seed(cfg, "train"),
                loss_horizon_steps=int(tcfg["loss_horizon_steps"]),
                rotation_augmentation=bool(tcfg["rotation_augmentation"]),
                hidden_width=int(tcfg["hidden_width"]),
                n_modes=int(tcfg["n_modes"]),
            )
            params, losses = train(exs, scene_hm, config, dt=train_ds.dt)
            path = out / f"model_{cls}_{var}.json"
            save_checkpoint(path, params, meta={
                "agent_class": cls,
                "variant": var,
                "epoch_losses": losses,
                "n_examples": len(exs),
                "train_config": dataclasses.asdict(config),
            })
            print(f"train: {cls}/{var} on {len(exs)} examples, "
                  f"final loss {losses[-1]:.4f} -> {path}")


def cmd_evaluate(cfg: dict, out: Path, variant=None) -> None:
    needs = [("dataset.csv", "generate"), ("heatmap.json", "heatmap")]
    tcfg = cfg["train"]
    runs = [(cls, var) for cls in tcfg["classes"]
            for var in _variants(cfg, variant)]
    needs += [(f"model_{cls}_{var}.json", "train") for cls, var in runs]
    _require(out, "evaluate", needs)

    _, test_ds = _prepared_splits(cfg, out)
    heatmaps = _load_heatmaps(out / "heatmap.json")
    scene_hm = _scene_heatmap_index(test_ds, heatmaps)
    scene_map = {s.scene_id: test_ds.map_by_id(s.map_id)
                 for s in test_ds.scenes}
    examples = extract_examples(test_ds)
    n_samples = int(cfg["evaluate"]["n_samples"])
    eval_seed = _stage_seed(cfg, "evaluate")

    reports = []
    rows_by_run = {}
    for cls in tcfg["classes"]:
        exs = [e for e in examples if e.agent_class.model_class.value == cls]
        if not exs:
            raise ConfigError(f"no test examples for class {cls!r}")
        feats, cs, pos, _fut = prepare_arrays(exs, dt=test_ds.dt)
        for var in _variants(cfg, variant):
            params, _meta = load_checkpoint(out / f"model_{cls}_{var}.json")
            probs, trajs, scales = forward_batch(params, feats, cs, pos)
            rows = []
            for i, ex in enumerate(exs):
                pred = MixturePrediction(probs[i], trajs[i], scales[i])
                rng = np.random.default_rng([eval_seed, i])
                samples = sample_from_prediction(pred, n_samples, rng)
                rows.append(score_example(
                    ex, pred.most_likely(), samples,
                    scene_hm[ex.scene_id], scene_map[ex.scene_id]))
            rows_by_run[(cls, var)] = rows
            reports.append(aggregate_report(rows, cls, var))
            print(f"evaluate: {cls}/{var} on {len(rows)} examples, "
                  f"FDE@3s all {reports[-1].fde[('all', 3)]:.3f} m")
    write_report_csv(reports, out / "report.csv")
    write_bins_csv(reports, out / "bins.csv")
    write_violations_csv(reports, out / "violations.csv")
    write_examples_csv(rows_by_run, out / "examples.csv")


# --- report stage ----------------------------------------------------------

def _read_report_csv(path):
    """Rebuild StratifiedReport objects (sans bins) from report.csv."""
    order = []
    counts = {}
    fde = {}
    kde = {}
    horizons = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["agent_class"], row["variant"])
            if key not in counts:
                order.append(key)
                counts[key] = {}
                fde[key] = {}
                kde[key] = {}
                horizons[key] = []
            h = float(row["horizon_s"])
            h = int(h) if h == int(h) else h
            if h not in horizons[key]:
                horizons[key].append(h)
            stratum = row["stratum"]
            counts[key][stratum] = int(row["count"])
            if row["mean"] != "":
                table = fde[key] if row["metric"] == "fde" else kde[key]
                table[(stratum, h)] = float(row["mean"])
    reports = []
    for key in order:
        cls, var = key
        reports.append(StratifiedReport(
            agent_class=cls, variant=var,
            horizons=tuple(sorted(set(horizons[key]))),
            strata=tuple(counts[key]),
            counts=counts[key], fde=fde[key], kde_nll=kde[key],
            violation_count=0, n_examples=counts[key].get("all", 0),
            bins={}))
    return reports


def _read_bins_csv(path):
    bins = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            bins.setdefault(row["variant"], {})[
                (int(row["bin_x"]), int(row["bin_y"]))] = (
                float(row["mean_fde_3s"]), int(row["count"]))
    return bins


def _read_examples_csv(path):
    rows = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            if row["agent_class"] != "vehicle":
                continue
            key = (row["scene_id"], row["agent_id"], row["t_ref"])
            rows.setdefault(row["variant"], {})[key] = (
                float(row["max_history_speed"]), float(row["risk_weight"]),
                float(row["fde_3s"]))
    return rows


def cmd_report(cfg: dict, out: Path) -> None:
    _require(out, "report", [("heatmap.json", "heatmap"),
                             ("report.csv", "evaluate"),
                             ("bins.csv", "evaluate"),
                             ("examples.csv", "evaluate")])
    heatmaps = _load_heatmaps(out / "heatmap.json")
    reports = _read_report_csv(out / "report.csv")
    emit_result_tables(reports, out / "tables.md")

    hm_list = sorted(heatmaps.values(), key=lambda h: h.map_id)
    for hm in hm_list:
        name = ("heatmap_weights.svg" if len(hm_list) == 1
                else f"heatmap_weights_{hm.map_id}.svg")
        render_weight_heatmap_svg(hm, out / name)

    ref = hm_list[0]
    bins = _read_bins_csv(out / "bins.csv")
    baseline_bins = bins.get("baseline")
    if baseline_bins is not None:
        for var, table in sorted(bins.items()):
            if var == "baseline":
                continue
            render_fde_diff_colorplot(
                table, baseline_bins, ref.extents, ref.grid_n,
                out / f"diff_fde3s_{var}.svg",
                title=f"FDE@3s {var} - baseline (m)")

    ex_rows = _read_examples_csv(out / "examples.csv")
    base = ex_rows.get("baseline", {})
    rcfg = cfg["report"]
    for var, table in sorted(ex_rows.items()):
        if var == "baseline":
            continue
        speed_pairs = []
        weight_pairs = []
        for key, (speed, weight, fde3) in table.items():
            if key in base:
                diff = fde3 - base[key][2]
                speed_pairs.append((speed, diff))
                weight_pairs.append((weight, diff))
        render_binned_bars(
            speed_pairs, rcfg["speed_bin_edges"],
            out / f"bars_speed_{var}.svg",
            title=f"Vehicle FDE@3s change, {var} vs baseline",
            xlabel="max history speed (m/s)")
        render_binned_bars(
            weight_pairs, rcfg["weight_bin_edges"],
            out / f"bars_weight_{var}.svg",
            title=f"Vehicle FDE@3s change by location risk, {var} vs baseline",
            xlabel="location-risk weight")
    print(f"report: tables.md and figures -> {out}")


# --- entry point -----------------------------------------------------------

def _write_config_echo(cfg: dict, out: Path) -> None:
    (out / "pipeline_config.json").write_text(
        json.dumps(cfg, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="trajrisk",
        description="risk-weighted trajectory prediction pipeline")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="JSON config file merged over defaults")
    common.add_argument("--out", type=Path, required=True,
                        help="artifact directory")
    common.add_argument("--seed", type=int, default=None,
                        help="master seed override")
    common.add_argument("--set", action="append", default=[],
                        dest="overrides", metavar="KEY=VALUE",
                        help="dotted config override, e.g. world.n_scenes=10")
    common.add_argument("--variant", choices=VARIANTS, default=None,
                        help="restrict train/evaluate to one variant")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("generate", "simulate scenes and write dataset + annotations"),
            ("heatmap", "build location-risk heatmap from the train split"),
            ("train", "train predictor variants"),
            ("evaluate", "score the test split and write metric CSVs"),
            ("report", "render tables.md and SVG figures"),
            ("all", "run every stage in order")):
        sub.add_parser(name, parents=[common], help=help_text)
    args = parser.parse_args(argv)

    try:
        cfg = resolve_config(args.config, args.overrides, args.seed)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        if args.command in ("generate", "all"):
            cmd_generate(cfg, out)
        if args.command in ("heatmap", "all"):
            cmd_heatmap(cfg, out)
        if args.command in ("train", "all"):
            cmd_train(cfg, out, args.variant)
        if args.command in ("evaluate", "all"):
            cmd_evaluate(cfg, out, args.variant)
        if args.command in ("report", "all"):
            cmd_report(cfg, out)
        _write_config_echo(cfg, out)
    except TrajriskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
