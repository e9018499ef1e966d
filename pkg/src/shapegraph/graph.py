"""Shapelet assignment and the shapelet evolution graph.

Each segment is assigned the shapelets whose scaled distance (segment
weight times weighted warp distance) falls under a threshold chosen as a
percentile of all training distances. Assignment probabilities are the
min-max standardized closenesses within the qualifying set. Adjacent
segments of the same series then contribute probability products as edge
weights between their assigned shapelets, and outgoing weights are
normalized per vertex into transition probabilities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .shapelet import SCHEMA_VERSION, Shapelet, check_schema_version
from .warp import WarpConfig, alignment_coefficients


@dataclass(frozen=True)
class AssignmentEntry:
    shapelet_id: int
    distance: float  # scaled distance, <= threshold
    probability: float


@dataclass(frozen=True)
class Assignment:
    series_index: int
    position: int  # 1-based segment index
    entries: tuple[AssignmentEntry, ...] = ()


@dataclass
class EvolutionGraph:
    """Directed weighted graph over shapelet vertices, row-stochastic."""

    vertex_count: int
    edges: dict[tuple[int, int], float] = field(default_factory=dict)
    ranks: list[int] = field(default_factory=list)

    def out_weight(self, v: int) -> float:
        return sum(w for (s, _), w in self.edges.items() if s == v)

    def weighted_degrees(self) -> tuple[np.ndarray, np.ndarray]:
        indeg = np.zeros(self.vertex_count)
        outdeg = np.zeros(self.vertex_count)
        for (s, t), w in self.edges.items():
            outdeg[s] += w
            indeg[t] += w
        return indeg, outdeg

    def transitions(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-vertex (neighbor ids, cumulative probabilities) for sampling."""
        by_src: list[list[tuple[int, float]]] = [[] for _ in range(self.vertex_count)]
        for (s, t), w in sorted(self.edges.items()):
            by_src[s].append((t, w))
        out = []
        for lst in by_src:
            if not lst:
                out.append((np.empty(0, dtype=np.int64), np.empty(0)))
                continue
            ids = np.array([t for t, _ in lst], dtype=np.int64)
            probs = np.array([w for _, w in lst])
            out.append((ids, np.cumsum(probs)))
        return out


def scaled_distances(segments: np.ndarray, shapelets: list[Shapelet], cfg: WarpConfig | None = None) -> np.ndarray:
    """Scaled distance tensor d[s, i, j] over series s, segment i, shapelet j."""
    segments = np.asarray(segments, dtype=np.float64)
    num_series, m, l = segments.shape
    flat = segments.reshape(num_series * m, l)
    out = np.empty((num_series, m, len(shapelets)))
    for j, sp in enumerate(shapelets):
        coeffs = alignment_coefficients(sp.values, flat, cfg)
        d = np.sqrt(np.maximum(coeffs @ sp.local_weights, 0.0)).reshape(num_series, m)
        out[:, :, j] = d * sp.segment_weights[None, :]
    return out


def compute_threshold(segments, shapelets, percentile: float = 10.0, cfg: WarpConfig | None = None) -> float:
    """Distance threshold: a linear-interpolated percentile of all pairs."""
    d = scaled_distances(segments, shapelets, cfg)
    if d.size == 0:
        raise ValueError("no (segment, shapelet) pairs to pool")
    return float(np.percentile(d.ravel(), percentile))


def assignment_probabilities(distances: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Qualifying shapelet ids and min-max standardized probabilities.

    The closest qualifying shapelet gets probability 1 and the farthest 0;
    a single qualifier (or an exact tie across all) gets probability 1.
    """
    ids = np.flatnonzero(distances <= delta)
    if ids.size == 0:
        return ids, np.empty(0)
    d = distances[ids]
    span = d.max() - d.min()
    if span <= 0.0:
        return ids, np.ones_like(d)
    return ids, (d.max() - d) / span


def assign_segments(segments, shapelets, delta: float, cfg: WarpConfig | None = None) -> list[Assignment]:
    """Assignments for every segment, series-major then by position."""
    if delta <= 0:
        raise ValueError("threshold must be positive")
    d = scaled_distances(segments, shapelets, cfg)
    return assignments_from_distances(d, delta)


def assignments_from_distances(distances: np.ndarray, delta: float) -> list[Assignment]:
    num_series, m, _ = distances.shape
    out = []
    for s in range(num_series):
        for i in range(m):
            ids, probs = assignment_probabilities(distances[s, i], delta)
            entries = tuple(
                AssignmentEntry(int(j), float(distances[s, i, j]), float(p))
                for j, p in zip(ids, probs)
            )
            out.append(Assignment(series_index=s, position=i + 1, entries=entries))
    return out


def build_graph(assignments: list[Assignment], vertex_count: int, ranks: list[int] | None = None) -> EvolutionGraph:
    """Accumulate adjacent-segment probability products into edge weights.

    Duplicate edges sum; each vertex's outgoing weights are then divided
    by their total so they form transition probabilities. Zero products
    never create edges, and pairs never span two different series.
    """
    acc = np.zeros((vertex_count, vertex_count))
    by_series: dict[int, list[Assignment]] = {}
    for a in assignments:
        by_series.setdefault(a.series_index, []).append(a)
    for series in by_series.values():
        series.sort(key=lambda a: a.position)
        for left, right in zip(series, series[1:]):
            if right.position != left.position + 1:
                continue
            for ea in left.entries:
                if ea.probability == 0.0:
                    continue
                for eb in right.entries:
                    w = ea.probability * eb.probability
                    if w > 0.0:
                        acc[ea.shapelet_id, eb.shapelet_id] += w
    row_sums = acc.sum(axis=1)
    edges: dict[tuple[int, int], float] = {}
    for s in range(vertex_count):
        if row_sums[s] <= 0.0:
            continue
        for t in np.flatnonzero(acc[s] > 0.0):
            edges[(s, int(t))] = float(acc[s, t] / row_sums[s])
    return EvolutionGraph(vertex_count=vertex_count, edges=edges, ranks=list(ranks or []))


# ---------------------------------------------------------------------------
# Export formats. All outputs are sorted by (source, target) so identical
# graphs serialize identically.
# ---------------------------------------------------------------------------


def edge_list_lines(g: EvolutionGraph) -> list[str]:
    return [f"{s} {t} {w:.9f}" for (s, t), w in sorted(g.edges.items())]


def to_dot(g: EvolutionGraph) -> str:
    lines = ["digraph shapelets {"]
    for (s, t), w in sorted(g.edges.items()):
        lines.append(f'  {s} -> {t} [weight="{w:.9f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_dict(g: EvolutionGraph) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "vertex_count": g.vertex_count,
        "ranks": list(g.ranks),
        "edges": [[s, t, w] for (s, t), w in sorted(g.edges.items())],
    }


def graph_from_dict(doc: dict) -> EvolutionGraph:
    check_schema_version(doc.get("version"))
    edges = {(int(s), int(t)): float(w) for s, t, w in doc["edges"]}
    return EvolutionGraph(
        vertex_count=int(doc["vertex_count"]),
        edges=edges,
        ranks=[int(r) for r in doc.get("ranks", [])],
    )


def export_graph(g: EvolutionGraph, path, fmt: str = "edge-list"):
    """Write the graph deterministically as edge-list, DOT, or JSON."""
    if fmt == "edge-list":
        text = "\n".join(edge_list_lines(g))
        if text:
            text += "\n"
    elif fmt == "dot":
        text = to_dot(g)
    elif fmt == "json":
        text = json.dumps(graph_to_dict(g)) + "\n"
    else:
        raise ValueError(f"unknown graph format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
