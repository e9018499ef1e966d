"""Batch command line: extract -> graph -> embed -> train -> evaluate.

Each subcommand reads the artifacts of the previous stage from the
output directory and writes its own under a fixed name, so stages can be
re-run and cached independently; ``run`` chains them all and ``bench``
times greedy against exact warping. Settings layer as defaults < preset
< config file < flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import pipeline
from .data import LoadError
from .pipeline import ArtifactError, ConfigError

log = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--preset", choices=sorted(pipeline.PRESETS), help="tuned per-dataset defaults")
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--train", dest="train_path", help="training file (UCR text format)")
    p.add_argument("--test", dest="test_path", help="test file (UCR text format)")
    p.add_argument("--delimiter", help="field delimiter (default: sniff tab/comma)")
    p.add_argument("--positive-label", type=float, help="raw label treated as the positive class")
    p.add_argument("-K", "--num-shapelets", type=int, dest="num_shapelets")
    p.add_argument("-l", "--segment-length", type=int, dest="segment_length")
    p.add_argument("-B", "--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--local-penalty", type=float, help="L2 penalty on element weights")
    p.add_argument("--global-penalty", type=float, help="L2 penalty on segment weights")
    p.add_argument("--delta-percentile", type=float, help="assignment threshold percentile")
    p.add_argument("--warp-mode", choices=("greedy", "exact"))
    p.add_argument("--warp-window", type=int)
    p.add_argument("--softmin-temp", type=float, dest="softmin_temp")
    p.add_argument("--epochs", type=int, help="timing-factor training epochs")
    p.add_argument("--learning-rate", type=float, help="timing-factor learning rate")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--candidate-size", type=int, help="candidate pool size (default 100*K)")
    p.add_argument("--prefilter", action="store_const", const=True, default=None,
                   help="train timing factors only for the statically best 10*K candidates")
    p.add_argument("--static", action="store_const", const=True, default=None,
                   help="freeze both timing factors at all-ones")
    p.add_argument("--kl-direction", choices=("pos-neg", "neg-pos"))
    p.add_argument("--walks-per-vertex", type=int)
    p.add_argument("--walk-length", type=int)
    p.add_argument("--window-size", type=int, help="skip-gram context window")
    p.add_argument("--negative-samples", type=int)
    p.add_argument("--embed-epochs", type=int)
    p.add_argument("--embed-learning-rate", type=float)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--boost-learning-rate", type=float)
    p.add_argument("--class-weight", type=float)
    p.add_argument("--num-rounds", type=int)
    p.add_argument("--subsample", type=float)
    p.add_argument("--grid", choices=("pinned", "paper"),
                   help="'pinned': single boost config; 'paper': full depth/lr/weight grid")
    p.add_argument("--inner-folds", type=int)
    p.add_argument("--outer-folds", type=int)
    p.add_argument("--seed", type=int, help="seed for all stochastic stages (default: entropy)")
    p.add_argument("--workers", type=int, help="worker processes (env SHAPEGRAPH_WORKERS, else CPUs)")
    p.add_argument("--out", dest="out_dir", help="artifact directory (default ./out)")
    p.add_argument("-v", "--verbose", action="store_true")


_CONFIG_KEYS = [
    "train_path", "test_path", "delimiter", "positive_label", "num_shapelets",
    "segment_length", "embed_dim", "local_penalty", "global_penalty",
    "delta_percentile", "warp_mode", "warp_window", "softmin_temp", "epochs",
    "learning_rate", "batch_size", "candidate_size", "prefilter", "static",
    "kl_direction", "walks_per_vertex", "walk_length", "window_size",
    "negative_samples", "embed_epochs", "embed_learning_rate", "max_depth",
    "boost_learning_rate", "class_weight", "num_rounds", "subsample", "grid",
    "inner_folds", "outer_folds", "seed", "workers", "out_dir",
]


def _resolve_config(args) -> pipeline.PipelineConfig:
    file_doc = pipeline.read_config_file(args.config) if args.config else {}
    flags = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    overrides = dict(file_doc)
    overrides.update({k: v for k, v in flags.items() if v is not None})

    seed_given = args.seed is not None or "seed" in file_doc
    if not seed_given:
        overrides["seed"] = int(np.random.SeedSequence().entropy % (2**31))
        log.warning("no seed given; using %d", overrides["seed"])
    if overrides.get("workers") is None:
        env = os.environ.get("SHAPEGRAPH_WORKERS")
        overrides["workers"] = int(env) if env else (os.cpu_count() or 1)
    return pipeline.build_config(args.preset, None, overrides)


def _print_report(report):
    rows = [
        ("accuracy", f"{report.accuracy:.4f}"),
        ("precision", f"{report.precision:.4f}"),
        ("recall", f"{report.recall:.4f}"),
        ("f1", f"{report.f1:.4f}"),
        ("confusion", f"tp={report.tp} fp={report.fp} tn={report.tn} fn={report.fn}"),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")


def _cmd_extract(args):
    cfg = _resolve_config(args)
    path = pipeline.stage_extract(cfg)
    print(f"wrote {path}")


def _cmd_graph(args):
    cfg = _resolve_config(args)
    path = pipeline.stage_graph(cfg)
    print(f"wrote {path}")


def _cmd_embed(args):
    cfg = _resolve_config(args)
    path = pipeline.stage_embed(cfg)
    print(f"wrote {path}")


def _cmd_train(args):
    cfg = _resolve_config(args)
    path = pipeline.stage_train(cfg)
    print(f"wrote {path}")


def _cmd_evaluate(args):
    cfg = _resolve_config(args)
    path, report = pipeline.stage_evaluate(cfg)
    _print_report(report)
    print(f"wrote {path}")


def _cmd_run(args):
    cfg = _resolve_config(args)
    report = pipeline.run_pipeline(cfg)
    if report is not None:
        _print_report(report)


def _cmd_bench(args):
    cfg = _resolve_config(args)
    path, report = pipeline.stage_bench(cfg, pairs=args.pairs, length=args.length)
    print(json.dumps(report, indent=2))
    log.info("wrote %s", path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapegraph",
        description="Shapelet evolution graph pipeline for binary time series classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "extract": (_cmd_extract, "learn shapelets from the training file"),
        "graph": (_cmd_graph, "build the shapelet evolution graph"),
        "embed": (_cmd_embed, "train shapelet embeddings by random walks"),
        "train": (_cmd_train, "select and fit the classifier; write model.json"),
        "evaluate": (_cmd_evaluate, "score a test file with model.json"),
        "run": (_cmd_run, "run all stages end to end"),
        "bench": (_cmd_bench, "time greedy vs exact warping"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "bench":
            p.add_argument("--pairs", type=int, default=1000)
            p.add_argument("--length", type=int, default=24)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArtifactError, LoadError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
