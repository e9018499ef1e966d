"""Time-aware shapelets, evolution graphs, and series embeddings."""

from .classify import BoostConfig, EvalReport, GBTModel, nested_cv, predict, train_gbt
from .data import Dataset, Segment, TimeSeries, load_ucr, normalize_01, segment
from .embed import EmbeddingModel, SeriesRepresentation, WalkConfig, embed_series, random_walks, train_skipgram
from .graph import Assignment, EvolutionGraph, assign_segments, build_graph, compute_threshold, export_graph
from .pipeline import PipelineConfig, build_config, run_pipeline
from .shapelet import (
    GaussianFit,
    Shapelet,
    TrainConfig,
    candidate_loss,
    extract_shapelets,
    extract_static_shapelets,
    gaussian_kl,
    generate_candidates,
    train_timing_factors,
)
from .warp import Alignment, WarpConfig, dtw_exact, dtw_greedy, series_distance, weighted_distance

__version__ = "0.1.0"

__all__ = [
    "Alignment",
    "Assignment",
    "BoostConfig",
    "Dataset",
    "EmbeddingModel",
    "EvalReport",
    "EvolutionGraph",
    "GBTModel",
    "GaussianFit",
    "PipelineConfig",
    "Segment",
    "SeriesRepresentation",
    "Shapelet",
    "TimeSeries",
    "TrainConfig",
    "WalkConfig",
    "WarpConfig",
    "assign_segments",
    "build_config",
    "build_graph",
    "candidate_loss",
    "compute_threshold",
    "dtw_exact",
    "dtw_greedy",
    "embed_series",
    "export_graph",
    "extract_shapelets",
    "extract_static_shapelets",
    "gaussian_kl",
    "generate_candidates",
    "load_ucr",
    "nested_cv",
    "normalize_01",
    "predict",
    "random_walks",
    "run_pipeline",
    "segment",
    "series_distance",
    "train_gbt",
    "train_skipgram",
    "train_timing_factors",
    "weighted_distance",
]
