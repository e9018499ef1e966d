"""Pipeline stages, configuration, and artifact handling.

Five re-runnable stages connect through fixed-name artifacts in the
output directory: ``shapelets.json`` -> ``graph.json`` ->
``embeddings.txt`` -> ``model.json`` -> ``report.json``. Every stage is
deterministic given identical inputs and seed, so artifacts are
byte-reproducible. ``model.json`` bundles everything needed to score new
data: shapelets, the distance threshold, the evolution graph, the
embedding matrix, the classifier, and the configuration that produced
them.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import classify, embed, graph, shapelet, warp
from .data import Dataset, load_ucr, normalize_dataset, segment_matrix

log = logging.getLogger(__name__)

SCHEMA_VERSION = shapelet.SCHEMA_VERSION

ARTIFACT_SHAPELETS = "shapelets.json"
ARTIFACT_GRAPH = "graph.json"
ARTIFACT_EMBEDDINGS = "embeddings.txt"
ARTIFACT_MODEL = "model.json"
ARTIFACT_REPORT = "report.json"
ARTIFACT_BENCH = "bench.json"


class ConfigError(ValueError):
    def __init__(self, fld: str, message: str):
        super().__init__(f"{fld}: {message}")
        self.field = fld


class ArtifactError(ValueError):
    """Raised for missing, version-incompatible, or mismatched artifacts."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one end-to-end run needs, overridable layer by layer."""

    train_path: str = ""
    test_path: str = ""
    delimiter: str | None = None
    positive_label: float | None = None
    num_shapelets: int = 50
    segment_length: int = 24
    embed_dim: int = 32
    local_penalty: float = 0.5
    global_penalty: float = 0.1
    delta_percentile: float = 10.0
    warp_mode: str = "greedy"
    warp_window: int | None = None
    softmin_temp: float = 1.0
    epochs: int = 50
    learning_rate: float = 0.01
    batch_size: int = 50
    candidate_size: int | None = None
    prefilter: bool = False
    static: bool = False
    kl_direction: str = "pos-neg"
    walks_per_vertex: int = 10
    walk_length: int = 40
    window_size: int = 5
    negative_samples: int = 5
    embed_epochs: int = 5
    embed_learning_rate: float = 0.025
    max_depth: int = 3
    boost_learning_rate: float = 0.1
    class_weight: float = 1.0
    num_rounds: int = 100
    subsample: float = 1.0
    grid: str = "pinned"  # "pinned": single boost config; "paper": full grid
    inner_folds: int = 5
    outer_folds: int = 5
    seed: int = 0
    workers: int = 1
    out_dir: str = "out"

    def validate(self, require_train: bool = True, require_test: bool = False):
        for name in ("num_shapelets", "segment_length", "embed_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be a positive integer")
        if self.grid not in ("pinned", "paper"):
            raise ConfigError("grid", f"unknown grid {self.grid!r}")
        if require_train:
            if not self.train_path:
                raise ConfigError("train_path", "is required")
            if not Path(self.train_path).exists():
                raise ConfigError("train_path", f"file not found: {self.train_path}")
        if require_test:
            if not self.test_path:
                raise ConfigError("test_path", "is required")
            if not Path(self.test_path).exists():
                raise ConfigError("test_path", f"file not found: {self.test_path}")

    def warp_config(self) -> warp.WarpConfig:
        return warp.WarpConfig(mode=self.warp_mode, window=self.warp_window)

    def train_config(self) -> shapelet.TrainConfig:
        return shapelet.TrainConfig(
            num_shapelets=self.num_shapelets,
            segment_length=self.segment_length,
            local_penalty=self.local_penalty,
            global_penalty=self.global_penalty,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            softmin_temperature=self.softmin_temp,
            candidate_size=self.candidate_size,
            prefilter=self.prefilter,
            kl_direction=self.kl_direction,
            warp=self.warp_config(),
            seed=self.seed,
            workers=self.workers,
        )

    def walk_config(self) -> embed.WalkConfig:
        return embed.WalkConfig(
            walks_per_vertex=self.walks_per_vertex,
            walk_length=self.walk_length,
            window_size=self.window_size,
            embedding_dim=self.embed_dim,
            negative_samples=self.negative_samples,
            epochs=self.embed_epochs,
            learning_rate=self.embed_learning_rate,
            seed=self.seed,
        )

    def boost_config(self) -> classify.BoostConfig:
        return classify.BoostConfig(
            max_depth=self.max_depth,
            learning_rate=self.boost_learning_rate,
            class_weight=self.class_weight,
            num_rounds=self.num_rounds,
            subsample=self.subsample,
        )

    def boost_grid(self) -> list[classify.BoostConfig]:
        if self.grid == "paper":
            return classify.paper_grid()
        return [self.boost_config()]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def semantic_dict(self) -> dict:
        """Config without operational fields, for persisted artifacts.

        Output location and worker count never change what gets computed,
        so bundles built by equivalent runs stay byte-identical.
        """
        doc = self.to_dict()
        for name in ("out_dir", "workers"):
            doc.pop(name)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        return cls(**doc)


# Tuned settings per supported public dataset: embedding size, tree
# depth / learning rate / class weight, shapelet count, segment length.
PRESETS: dict[str, dict] = {
    "eqs": dict(
        num_shapelets=50, segment_length=24, embed_dim=32,
        max_depth=8, boost_learning_rate=0.1, class_weight=10.0,
    ),
    "wtc": dict(
        num_shapelets=20, segment_length=30, embed_dim=128,
        max_depth=12, boost_learning_rate=0.2, class_weight=1.0,
    ),
    "stb": dict(
        num_shapelets=50, segment_length=15, embed_dim=256,
        max_depth=4, boost_learning_rate=0.2, class_weight=10.0,
    ),
}

_BOOL_FIELDS = {"prefilter", "static"}
_OPTIONAL_FIELDS = {"delimiter", "positive_label", "warp_window", "candidate_size"}


def _coerce(name: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    if name not in fields:
        raise ConfigError(name, "unknown configuration key")
    if raw.lower() in ("none", "null", ""):
        return None
    if name in _BOOL_FIELDS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(name, f"expected a boolean, got {raw!r}")
    default = fields[name].default
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or name in ("positive_label",):
        return float(raw)
    if name in ("warp_window", "candidate_size"):
        return int(raw)
    return raw


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("config", f"line {lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            out[key] = _coerce(key, raw)
    return out


def build_config(preset: str | None = None, config_path=None, overrides: dict | None = None) -> PipelineConfig:
    """Layer defaults, preset, config file, and explicit overrides."""
    doc: dict = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        doc.update(PRESETS[preset])
    if config_path:
        doc.update(read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    return PipelineConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# Stage implementations.
# ---------------------------------------------------------------------------


def _prepare(path: str, cfg: PipelineConfig) -> Dataset:
    ds = load_ucr(path, delimiter=cfg.delimiter, positive_label=cfg.positive_label)
    ds = normalize_dataset(ds)
    return ds.with_segment_length(cfg.segment_length)


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}; run the producing stage first")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def stage_extract(cfg: PipelineConfig) -> Path:
    """Learn shapelets from the training file and write shapelets.json."""
    cfg.validate(require_train=True)
    ds = _prepare(cfg.train_path, cfg)
    tc = cfg.train_config()
    t0 = time.perf_counter()
    if cfg.static:
        shapelets = shapelet.extract_static_shapelets(ds, tc)
    else:
        shapelets = shapelet.extract_shapelets(ds, tc)
    log.info(
        "extracted %d shapelets (static=%s) in %.1fs",
        len(shapelets), cfg.static, time.perf_counter() - t0,
    )
    out = _out(cfg) / ARTIFACT_SHAPELETS
    shapelet.save_shapelets(out, shapelets, cfg.segment_length, ds.num_segments)
    return out


def stage_graph(cfg: PipelineConfig) -> Path:
    """Threshold, assignments, and the evolution graph from train data."""
    cfg.validate(require_train=True)
    shapelets, l, m = shapelet.load_shapelets(_out(cfg) / ARTIFACT_SHAPELETS)
    if l != cfg.segment_length:
        raise ArtifactError(
            f"shapelet artifact was built with segment_length={l}, config says {cfg.segment_length}"
        )
    ds = _prepare(cfg.train_path, cfg)
    if ds.num_segments != m:
        raise ArtifactError(
            f"shapelet artifact expects {m} segments per series, data yields {ds.num_segments}"
        )
    segments = segment_matrix(ds)
    distances = graph.scaled_distances(segments, shapelets, cfg.warp_config())
    delta = float(np.percentile(distances.ravel(), cfg.delta_percentile))
    assignments = graph.assignments_from_distances(distances, delta)
    g = graph.build_graph(
        assignments, len(shapelets), ranks=[s.rank for s in shapelets]
    )
    doc = graph.graph_to_dict(g)
    doc["delta"] = delta
    doc["percentile"] = cfg.delta_percentile
    out = _out(cfg) / ARTIFACT_GRAPH
    _write_json(out, doc)
    log.info("graph: %d vertices, %d edges, delta=%.6g", g.vertex_count, len(g.edges), delta)
    return out


def stage_embed(cfg: PipelineConfig) -> Path:
    """Random walks plus skip-gram over the graph artifact."""
    doc = _read_json(_out(cfg) / ARTIFACT_GRAPH)
    g = graph.graph_from_dict(doc)
    model = embed.train_embeddings(g, cfg.walk_config())
    out = _out(cfg) / ARTIFACT_EMBEDDINGS
    embed.save_embeddings(out, model.vectors)
    log.info("embeddings: %s, final objective %.4f", model.vectors.shape, model.objective_history[-1])
    return out


def _load_stack(cfg: PipelineConfig):
    out = _out(cfg)
    shapelets, l, m = shapelet.load_shapelets(out / ARTIFACT_SHAPELETS)
    gdoc = _read_json(out / ARTIFACT_GRAPH)
    graph.check_schema_version(gdoc.get("version"))
    delta = float(gdoc["delta"])
    vectors = embed.load_embeddings(out / ARTIFACT_EMBEDDINGS)
    if vectors.shape[0] != len(shapelets):
        raise ArtifactError(
            f"embedding matrix has {vectors.shape[0]} rows for {len(shapelets)} shapelets"
        )
    return shapelets, l, m, gdoc, delta, embed.EmbeddingModel(vectors)


def stage_train(cfg: PipelineConfig) -> Path:
    """Select and fit the classifier on training features; write the bundle."""
    cfg.validate(require_train=True)
    shapelets, l, m, gdoc, delta, model = _load_stack(cfg)
    if model.dim != cfg.embed_dim:
        raise ArtifactError(
            f"embedding dimension {model.dim} does not match config embed_dim={cfg.embed_dim}"
        )
    ds = _prepare(cfg.train_path, cfg)
    features = embed.embed_dataset(
        segment_matrix(ds), shapelets, delta, model, cfg.warp_config()
    )
    labels = ds.labels
    chosen, rounds, fold_records = classify.select_config(
        features,
        labels,
        cfg.boost_grid(),
        folds=cfg.inner_folds,
        seed=cfg.seed,
        workers=cfg.workers,
    )
    final_cfg = replace(chosen, num_rounds=rounds)
    gbt = classify.train_gbt(features, labels, final_cfg, seed=cfg.seed)
    bundle = {
        "version": SCHEMA_VERSION,
        "config": cfg.semantic_dict(),
        "shapelets": shapelet.shapelets_to_dict(shapelets, l, m),
        "delta": delta,
        "percentile": float(gdoc["percentile"]),
        "graph": {k: gdoc[k] for k in ("version", "vertex_count", "ranks", "edges")},
        "embedding": {
            "K": model.vectors.shape[0],
            "B": model.vectors.shape[1],
            "vectors": model.vectors.tolist(),
        },
        "classifier": gbt.to_dict(),
        "chosen_boost_config": dataclasses.asdict(final_cfg),
        "selection_folds": fold_records,
    }
    out = _out(cfg) / ARTIFACT_MODEL
    _write_json(out, bundle)
    log.info("classifier: %s, %d rounds kept", final_cfg, len(gbt.trees))
    return out


def load_bundle(path) -> dict:
    doc = _read_json(Path(path))
    shapelet.check_schema_version(doc.get("version"))
    return doc


def evaluate_bundle(bundle: dict, test_path: str, delimiter=None) -> classify.EvalReport:
    """Score a labeled file with a trained bundle.

    Featurization uses the bundle's own configuration (segment length,
    warp settings, threshold), so a bundle gives identical reports for
    identical files no matter the current flags.
    """
    bcfg = PipelineConfig.from_dict(bundle["config"])
    ds = load_ucr(test_path, delimiter=delimiter or bcfg.delimiter, positive_label=bcfg.positive_label)
    ds = normalize_dataset(ds).with_segment_length(bcfg.segment_length)
    shapelets, l, m = shapelet.shapelets_from_dict(bundle["shapelets"])
    if ds.num_segments != m:
        raise ArtifactError(
            f"bundle expects {m} segments per series, test data yields {ds.num_segments}"
        )
    model = embed.EmbeddingModel(np.array(bundle["embedding"]["vectors"], dtype=np.float64))
    features = embed.embed_dataset(
        segment_matrix(ds), shapelets, float(bundle["delta"]), model, bcfg.warp_config()
    )
    gbt = classify.GBTModel.from_dict(bundle["classifier"])
    report = classify.evaluate_predictions(ds.labels, classify.predict(gbt, features))
    report.folds = list(bundle.get("selection_folds", []))
    return report


def stage_evaluate(cfg: PipelineConfig) -> tuple[Path, classify.EvalReport]:
    cfg.validate(require_train=False, require_test=True)
    bundle = load_bundle(_out(cfg) / ARTIFACT_MODEL)
    report = evaluate_bundle(bundle, cfg.test_path, cfg.delimiter)
    doc = {"version": SCHEMA_VERSION, "seed": cfg.seed, **report.to_dict()}
    out = _out(cfg) / ARTIFACT_REPORT
    _write_json(out, doc)
    return out, report


def run_pipeline(cfg: PipelineConfig) -> classify.EvalReport | None:
    """Chain all stages; with no test file, run the outer-CV protocol."""
    if not cfg.test_path:
        return run_outer_cv(cfg)
    stage_extract(cfg)
    stage_graph(cfg)
    stage_embed(cfg)
    stage_train(cfg)
    _, report = stage_evaluate(cfg)
    return report


def run_outer_cv(cfg: PipelineConfig) -> classify.EvalReport:
    """Outer stratified k-fold over series when no test split ships.

    The whole pipeline (shapelets, graph, embeddings) is refit on each
    outer training fold; the inner grid selection runs on that fold's
    features only. The merged report lands in report.json, and a final
    full-data bundle is trained for scoring new data.
    """
    cfg.validate(require_train=True)
    ds = _prepare(cfg.train_path, cfg)
    splits = classify.stratified_kfold(ds.labels, cfg.outer_folds, cfg.seed)
    reports = []
    for fold, (train_idx, test_idx) in enumerate(splits):
        fold_cfg = replace(cfg, out_dir=str(Path(cfg.out_dir) / f"fold{fold}"))
        sub_train = Dataset(
            [ds.series[i] for i in train_idx], segment_length=cfg.segment_length
        )
        sub_test = Dataset(
            [ds.series[i] for i in test_idx], segment_length=cfg.segment_length
        )
        reports.append(_fit_evaluate_in_memory(fold_cfg, sub_train, sub_test))
        log.info("outer fold %d: accuracy %.4f f1 %.4f", fold, reports[-1].accuracy, reports[-1].f1)
    merged = classify.merge_reports(reports)
    # final full-data bundle for downstream scoring
    stage_extract(cfg)
    stage_graph(cfg)
    stage_embed(cfg)
    stage_train(cfg)
    doc = {"version": SCHEMA_VERSION, "seed": cfg.seed, **merged.to_dict()}
    _write_json(_out(cfg) / ARTIFACT_REPORT, doc)
    return merged


def _fit_evaluate_in_memory(cfg: PipelineConfig, train: Dataset, test: Dataset) -> classify.EvalReport:
    tc = cfg.train_config()
    if cfg.static:
        shapelets = shapelet.extract_static_shapelets(train, tc)
    else:
        shapelets = shapelet.extract_shapelets(train, tc)
    segments = segment_matrix(train)
    distances = graph.scaled_distances(segments, shapelets, cfg.warp_config())
    delta = float(np.percentile(distances.ravel(), cfg.delta_percentile))
    assignments = graph.assignments_from_distances(distances, delta)
    g = graph.build_graph(assignments, len(shapelets), ranks=[s.rank for s in shapelets])
    model = embed.train_embeddings(g, cfg.walk_config())
    feats_train = embed.embed_dataset(
        segments, shapelets, delta, model, cfg.warp_config(), distances=distances
    )
    feats_test = embed.embed_dataset(
        segment_matrix(test), shapelets, delta, model, cfg.warp_config()
    )
    report, _, _ = classify.nested_cv(
        feats_train,
        train.labels,
        feats_test,
        test.labels,
        cfg.boost_grid(),
        inner_folds=cfg.inner_folds,
        seed=cfg.seed,
        workers=cfg.workers,
    )
    return report


# ---------------------------------------------------------------------------
# DTW benchmark.
# ---------------------------------------------------------------------------

BENCH_REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "version",
        "pairs",
        "length",
        "window",
        "seed",
        "exact_seconds",
        "greedy_seconds",
        "mean_relative_gap",
        "max_relative_gap",
        "max_visited_cells",
        "visited_cell_bound",
        "cell_bound_satisfied",
    ],
    "properties": {
        "version": {"type": "string"},
        "pairs": {"type": "integer", "minimum": 1},
        "length": {"type": "integer", "minimum": 1},
        "window": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "exact_seconds": {"type": "number", "minimum": 0},
        "greedy_seconds": {"type": "number", "minimum": 0},
        "mean_relative_gap": {"type": "number", "minimum": 0},
        "max_relative_gap": {"type": "number", "minimum": 0},
        "max_visited_cells": {"type": "integer", "minimum": 1},
        "visited_cell_bound": {"type": "integer", "minimum": 2},
        "cell_bound_satisfied": {"type": "boolean"},
    },
    "additionalProperties": False,
}


def run_bench(pairs: int = 1000, length: int = 24, window: int | None = None, seed: int = 0) -> dict:
    """Time exact vs greedy warping on random pairs and report the gap."""
    rng = np.random.default_rng(seed)
    window = window or max(1, math.ceil(length / 2))
    cfg = warp.WarpConfig(mode="greedy", window=window)
    xs = rng.random((pairs, length))
    ys = rng.random((pairs, length))

    t0 = time.perf_counter()
    exact = [warp.dtw_exact(x, y)[0] for x, y in zip(xs, ys)]
    t_exact = time.perf_counter() - t0

    t0 = time.perf_counter()
    greedy_out = [warp.dtw_greedy(x, y, cfg) for x, y in zip(xs, ys)]
    t_greedy = time.perf_counter() - t0

    gaps = []
    max_cells = 0
    for de, (dg, alignment) in zip(exact, greedy_out):
        gaps.append((dg - de) / de if de > 0 else 0.0)
        max_cells = max(max_cells, len(alignment))
    return {
        "version": SCHEMA_VERSION,
        "pairs": pairs,
        "length": length,
        "window": window,
        "seed": seed,
        "exact_seconds": t_exact,
        "greedy_seconds": t_greedy,
        "mean_relative_gap": float(np.mean(gaps)),
        "max_relative_gap": float(np.max(gaps)),
        "max_visited_cells": max_cells,
        "visited_cell_bound": 2 * length,
        "cell_bound_satisfied": max_cells <= 2 * length,
    }


def stage_bench(cfg: PipelineConfig, pairs: int = 1000, length: int = 24) -> tuple[Path, dict]:
    report = run_bench(pairs=pairs, length=length, window=cfg.warp_window, seed=cfg.seed)
    out = _out(cfg) / ARTIFACT_BENCH
    _write_json(out, report)
    return out, report
