"""Command line entry point: ``landmark-disrupt <subcommand> --config cfg.json``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .datasets import export_dataset

log = logging.getLogger("landmark_disrupt")


def _workspace(args, train_models=True):
    cfg = harness.load_config(args.config).with_overrides(args.out, args.seed, args.jobs)
    return harness.prepare_workspace(cfg, retrain=getattr(args, "retrain", False), train_models=train_models)


def cmd_gen_data(args):
    ws = _workspace(args, train_models=False)
    for handle in (ws.train, ws.val, ws.test):
        export_dataset(handle, ws.config.out / "dataset" / handle.split)
    return ws.config.out


def cmd_train(args):
    ws = _workspace(args)
    for name, ckpt in ws.extractors.items():
        log.info("%s: val NME %.4f", name, ckpt.metadata.get("val_nme", float("nan")))
    return ws.config.out


def cmd_attack(args):
    ws = _workspace(args)
    harness.craft_all(ws, reuse=not args.fresh)
    return ws.config.out


def cmd_evaluate(args):
    ws = _workspace(args)
    table = harness.run_experiment(ws.config, ws, reuse=not args.fresh)
    harness.emit_report(table, ws.config.out)
    if table.failures:
        log.warning("%d stage failure(s); see summary.json", len(table.failures))
    return ws.config.out


def cmd_sweep(args):
    ws = _workspace(args)
    sweep = dict(ws.config.sweep)
    axis = args.axis or sweep.get("axis", "max_iters")
    values = json.loads(args.values) if args.values else sweep.get("values")
    if not values:
        raise SystemExit("sweep needs values (config 'sweep.values' or --values)")
    df = harness.ablation_sweep(ws.config, axis, values, ws, budget_mode=args.budget_mode or sweep.get("budget_mode"))
    print(df.to_string(index=False))
    return ws.config.out


def cmd_report(args):
    cfg = harness.load_config(args.config).with_overrides(args.out, args.seed, args.jobs)
    table = harness.ResultTable.read_csv(cfg.out / "records.csv")
    harness.emit_report(table, cfg.out)
    return cfg.out


COMMANDS = {
    "gen-data": (cmd_gen_data, "render the synthetic dataset and export its splits"),
    "train": (cmd_train, "train (or load) the extractors and the synthesiser"),
    "attack": (cmd_attack, "craft adversarial images on every source extractor"),
    "evaluate": (cmd_evaluate, "run the full attack x target x degradation grid"),
    "sweep": (cmd_sweep, "white-box ablation over alpha or max_iters"),
    "report": (cmd_report, "rebuild summary, transfer matrices and plots from records.csv"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--out", help="output directory (overrides config output_dir)")
    common.add_argument("--seed", type=int, help="master seed (overrides config seed)")
    common.add_argument("--jobs", type=int, help="worker threads (overrides config jobs)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="landmark-disrupt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(fn=fn)
        if name in ("train", "attack", "evaluate", "sweep"):
            p.add_argument("--retrain", action="store_true", help="ignore cached checkpoints")
        if name in ("attack", "evaluate"):
            p.add_argument("--fresh", action="store_true", help="ignore cached adversarial images")
        if name == "sweep":
            p.add_argument("--axis", choices=harness.SWEEP_AXES)
            p.add_argument("--values", help="JSON list, e.g. '[0.5, 1.0, 1.5]'")
            p.add_argument("--budget-mode", choices=("project", "literal"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        out = args.fn(args)
    except (harness.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    harness.write_manifest(Path(out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
