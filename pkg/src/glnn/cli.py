"""Command-line entry point: ``glnn {generate,train,evaluate,sweep}``.

Exit codes: 0 success, 1 config error, 2 I/O or file-format error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import statistics
import sys
from pathlib import Path

import numpy as np

from glnn import datagen
from glnn.config import PRESETS, RunConfig, dump_config, load_config
from glnn.errors import ConfigError, DatasetFormatError, ModelFormatError, NumericError
from glnn.models import BaselineModel, GlnnModel, model_load, model_save
from glnn.oracles import get_system
from glnn.training import evaluate, train

log = logging.getLogger("glnn")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


def _sidecar(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


def build_model(cfg: RunConfig, hidden_size=None, n_hidden_layers=None, seed=None):
    n_dof = get_system(cfg.system).n_dof
    m = cfg.model
    hidden_size = m.hidden_size if hidden_size is None else hidden_size
    n_hidden_layers = m.n_hidden_layers if n_hidden_layers is None else n_hidden_layers
    seed = m.seed if seed is None else seed
    if m.kind == "glnn":
        return GlnnModel.create(
            n_dof,
            hidden_size,
            n_hidden_layers,
            seed=seed,
            ridge=cfg.train.ridge,
            lagrangian_activation=m.lagrangian_activation,
            force_activation=m.force_activation,
        )
    return BaselineModel.create(n_dof, hidden_size, n_hidden_layers, seed=seed, activation=m.baseline_activation)


def make_dataset(cfg: RunConfig) -> datagen.TrajectoryDataset:
    d = cfg.datagen
    return datagen.generate(
        cfg.system,
        cfg.system_params(),
        n_traj=d.n_traj,
        n_steps=d.n_steps,
        h=d.h,
        init_range=d.init_range,
        seed=d.seed,
        substeps=d.substeps,
    )


def cmd_generate(cfg: RunConfig, out_path) -> datagen.TrajectoryDataset:
    ds = make_dataset(cfg)
    datagen.dataset_save(ds, out_path)
    dump_config(cfg, _sidecar(out_path, ".config.json"))
    rise = datagen.energy_increase(ds)
    print(f"wrote {len(ds)} pairs to {out_path}")
    print(f"energy non-increasing along trajectories: {'yes' if rise <= 1e-9 else 'NO'} (max step increase {rise:.3e})")
    return ds


def cmd_train(cfg: RunConfig, dataset_path, out_model_path):
    ds = datagen.dataset_load(dataset_path)
    if ds.system != cfg.system:
        raise ConfigError(f"dataset is for system {ds.system!r}, config says {cfg.system!r}")
    split = datagen.split(ds, cfg.datagen.split_ratio, cfg.datagen.split_seed)
    model = build_model(cfg)
    model, metrics = train(model, ds, split, cfg.train)
    extra = {
        "system": cfg.system,
        "system_params": ds.params,
        "dataset_seed": ds.seed,
        "train_seed": cfg.train.seed,
    }
    model_save(model, out_model_path, extra)
    metrics_path = _sidecar(out_model_path, ".metrics.json")
    metrics_path.write_text(json.dumps(metrics.to_dict(), indent=1) + "\n")
    dump_config(cfg, _sidecar(out_model_path, ".config.json"))
    print(
        f"{metrics.model_kind}: final train loss {metrics.final_train_loss:.4e}, "
        f"test accel MSE {metrics.final_test_accel_mse:.4e}, {metrics.wall_time:.1f}s"
    )
    if metrics.singular_count:
        print(f"warning: {metrics.singular_count} near-singular mass matrices during training")
    if not np.isfinite(metrics.final_train_loss):
        raise NumericError("final training loss is not finite")
    return model, metrics


def write_curves(result, out_csv) -> None:
    n = result.truth.shape[-1] // 2
    header = (
        ["t"]
        + [f"truth_q{i + 1}" for i in range(n)]
        + [f"pred_q{i + 1}" for i in range(n)]
        + ["truth_E", "pred_E"]
    )
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for b in range(result.truth.shape[1]):
            for i, t in enumerate(result.times):
                row = [t, *result.truth[i, b, :n], *result.pred[i, b, :n], result.truth_energy[i, b], result.pred_energy[i, b]]
                writer.writerow([repr(float(v)) for v in row])


def cmd_evaluate(model_path, cfg: RunConfig, out_csv) -> dict:
    model = model_load(model_path)
    e = cfg.evaluate
    result = evaluate(
        model,
        cfg.system,
        cfg.system_params(),
        e.inits,
        horizon_T=e.horizon,
        h=e.h,
        truth_substeps=e.truth_substeps,
        model_substeps=e.model_substeps,
    )
    write_curves(result, out_csv)
    summary = {"model_kind": model.kind, "system": cfg.system, **result.summary()}
    summary["position_mse_curve"] = result.position_mse_curve.tolist()
    summary["energy_mse_curve"] = result.energy_mse_curve.tolist()
    _sidecar(out_csv, ".summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(
        f"position MSE (time-avg) {summary['position_mse_mean']:.4e}, "
        f"energy MSE (time-avg) {summary['energy_mse_mean']:.4e}"
    )
    return summary


def sweep_cells(cfg: RunConfig) -> list[tuple[str, int, int]]:
    """Grid cells as ``(table, hidden_size, n_hidden_layers)`` in output order."""
    s = cfg.sweep
    cells = [("hidden_size", int(hs), int(s.fixed_layers)) for hs in s.hidden_sizes]
    cells += [("layers", int(s.fixed_hidden), int(nl)) for nl in s.layer_counts]
    return cells


def cmd_sweep(cfg: RunConfig, out_table) -> list[dict]:
    """Train every grid cell for every seed on one shared dataset."""
    ds = make_dataset(cfg)
    split = datagen.split(ds, cfg.datagen.split_ratio, cfg.datagen.split_seed)
    cache: dict[tuple[int, int, int], float] = {}
    rows = []
    for table, hidden, layers in sweep_cells(cfg):
        mses = []
        for seed in cfg.sweep.seeds:
            key = (hidden, layers, int(seed))
            if key not in cache:
                model = build_model(cfg, hidden, layers, int(seed))
                _, metrics = train(model, ds, split, _with_seed(cfg, int(seed)))
                cache[key] = metrics.final_test_accel_mse
                log.info("cell hidden=%d layers=%d seed=%d: %.4e", hidden, layers, seed, cache[key])
            mses.append(cache[key])
        rows.append(
            {
                "table": table,
                "hidden_size": hidden,
                "n_hidden_layers": layers,
                "seeds": list(cfg.sweep.seeds),
                "test_mse": mses,
                "median_test_mse": statistics.median(mses),
            }
        )
    _write_sweep(rows, out_table)
    dump_config(cfg, _sidecar(out_table, ".config.json"))
    print(format_sweep(rows, cfg.system))
    return rows


def _with_seed(cfg: RunConfig, seed: int):
    return dataclasses.replace(cfg.train, seed=seed)


def _write_sweep(rows, out_table) -> None:
    with open(out_table, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["table", "hidden_size", "n_hidden_layers", "seeds", "test_mse", "median_test_mse"])
        for r in rows:
            writer.writerow(
                [
                    r["table"],
                    r["hidden_size"],
                    r["n_hidden_layers"],
                    ";".join(str(s) for s in r["seeds"]),
                    ";".join(repr(float(v)) for v in r["test_mse"]),
                    repr(float(r["median_test_mse"])),
                ]
            )


def format_sweep(rows, system: str) -> str:
    lines = []
    for table, key, title in (
        ("hidden_size", "hidden_size", "Influence of hidden size"),
        ("layers", "n_hidden_layers", "Influence of layers"),
    ):
        sel = [r for r in rows if r["table"] == table]
        if not sel:
            continue
        lines.append(title)
        lines.append(" | ".join([key] + [str(r[key]) for r in sel]))
        lines.append(" | ".join([system] + [f"{r['median_test_mse']:.2e}" for r in sel]))
        lines.append("")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON or YAML run config")
        p.add_argument("--out", type=Path, required=True, help="output file")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--preset", choices=PRESETS, default="paper")

    common(sub.add_parser("generate", help="integrate ground truth and write a dataset"))
    p = sub.add_parser("train", help="train a model on a dataset")
    common(p)
    p.add_argument("--data", type=Path, required=True, help="dataset CSV written by 'generate'")
    p = sub.add_parser("evaluate", help="roll out a trained model against ground truth")
    common(p)
    p.add_argument("--model", type=Path, required=True, help="model file written by 'train'")
    common(sub.add_parser("sweep", help="hidden-size / depth ablation"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.preset, args.seed)
        if args.command == "generate":
            cmd_generate(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.data, args.out)
        elif args.command == "evaluate":
            cmd_evaluate(args.model, cfg, args.out)
        else:
            cmd_sweep(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DatasetFormatError, ModelFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK

