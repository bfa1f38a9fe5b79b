"""Command-line pipeline driver.

Subcommands: synth | extract-net | build-graph | train | detect | eval |
ablate. Flags override config-file values; every stage writes its resolved
config next to its outputs. Exit codes: 1 bad config/input, 2 missing
upstream artifact, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import metrics, pipeline, synth
from .autodiff import NonFiniteError
from .config import RunConfig, load_config, output_root, save_config
from .ingest import ParseError, SchemaError
from .mgda import NonFiniteLossError
from .pipeline import MissingArtifactError

EXIT_BAD_INPUT = 1
EXIT_MISSING_ARTIFACT = 2
EXIT_NUMERICAL = 3


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out", dest="out_dir", help="run directory (default: $CDAD_OUT or cwd)")
    p.add_argument("--physical-train", dest="physical_train")
    p.add_argument("--physical-test", dest="physical_test")
    p.add_argument("--network-train", dest="network_train")
    p.add_argument("--network-test", dest="network_test")
    p.add_argument("--node-map", dest="node_map")
    p.add_argument("--window", type=int)
    p.add_argument("--topk", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--momentum", type=float)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--lr1", type=float)
    p.add_argument("--lr2", type=float)
    p.add_argument("--lr3", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--domains")
    p.add_argument("--no-attention", dest="attention", action="store_false", default=None)
    p.add_argument("--static-weights", dest="static_weights", metavar="A,B")
    p.add_argument("--fused-score", dest="fused_score", action="store_true", default=None)


def resolve_config(args) -> RunConfig:
    """defaults < config file < explicit flags."""
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, base=cfg)
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    if not cfg.out_dir:
        cfg.out_dir = os.path.join(output_root(), "cdad-run")
    return _default_paths(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dual-domain dataset")
    _add_common_flags(p)
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--train-steps", type=int, default=6000)
    p.add_argument("--test-steps", type=int, default=3000)
    p.add_argument("--anomaly-fraction", type=float, default=0.05)
    p.add_argument("--anomaly-mix", type=float, default=0.5)

    for name, help_ in (
        ("extract-net", "extract per-node network features"),
        ("build-graph", "build per-domain top-k graphs"),
        ("train", "train the cross-domain model"),
        ("detect", "score and label the test span"),
        ("eval", "compute detection metrics"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_common_flags(p)

    p = sub.add_parser("ablate", help="run model variants and compare")
    _add_common_flags(p)
    p.add_argument(
        "--variants",
        default="full,no-attention,static-0.5,static-0.25,static-0.75",
        help="comma-separated: full | no-attention | static-A (A = physical weight) | "
        "physical-only | network-only",
    )
    return parser


def _variant_config(base: RunConfig, name: str) -> RunConfig:
    cfg = dataclasses.replace(base)
    cfg.out_dir = os.path.join(base.out_dir, f"variant-{name}")
    if name == "full":
        pass
    elif name == "no-attention":
        cfg.attention = False
    elif name.startswith("static-"):
        a = float(name.split("-", 1)[1])
        cfg.static_weights = f"{a},{1 - a}"
    elif name == "physical-only":
        cfg.domains = "physical"
    elif name == "network-only":
        cfg.domains = "network"
    else:
        raise ValueError(f"unknown variant {name!r}")
    return cfg


def run(args) -> int:
    cfg = resolve_config(args)
    if args.command == "synth":
        scfg = synth.SynthConfig(
            num_nodes=args.nodes,
            train_steps=args.train_steps,
            test_steps=args.test_steps,
            seed=cfg.seed,
            anomaly_fraction=args.anomaly_fraction,
            anomaly_mix=args.anomaly_mix,
        )
        paths = pipeline.stage_synth(cfg, scfg)
        print("\n".join(f"{k}: {v}" for k, v in sorted(paths.items())))
    elif args.command == "extract-net":
        pipeline.stage_extract(cfg)
    elif args.command == "build-graph":
        pipeline.stage_graph(cfg)
    elif args.command == "train":
        _, result = pipeline.stage_train(cfg)
        last = result.val_losses[-1] if result.val_losses else {}
        print(f"best epoch {result.best_epoch}, final validation losses {last}")
    elif args.command == "detect":
        pipeline.stage_detect(cfg)
    elif args.command == "eval":
        report = pipeline.stage_eval(cfg)
        print(metrics.emit_report([report]), end="")
    elif args.command == "ablate":
        reports = []
        for name in args.variants.split(","):
            vcfg = _variant_config(cfg, name.strip())
            os.makedirs(vcfg.out_dir, exist_ok=True)
            reports.append(pipeline.run_pipeline(vcfg, run_id=name.strip()))
        print(metrics.emit_report(reports), end="")
        with open(os.path.join(cfg.out_dir, "ablation_report.csv"), "w") as f:
            f.write(metrics.emit_report(reports, mode="csv"))
    return 0


def _default_paths(cfg: RunConfig) -> RunConfig:
    """Unset data paths resolve to the conventional names in the run dir."""
    d = cfg.out_dir
    cfg.physical_train = cfg.physical_train or os.path.join(d, "train_physical.csv")
    cfg.physical_test = cfg.physical_test or os.path.join(d, "test_physical.csv")
    cfg.network_train = cfg.network_train or os.path.join(d, "train_network.csv")
    cfg.network_test = cfg.network_test or os.path.join(d, "test_network.csv")
    cfg.node_map = cfg.node_map or os.path.join(d, "nodemap.csv")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except MissingArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except (NonFiniteLossError, NonFiniteError) as e:
        print(f"error: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SchemaError, ParseError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
