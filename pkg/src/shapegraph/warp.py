"""Time warping distance kernels.

Provides exact dynamic time warping (quadratic dynamic program), a
linear-time greedy variant with a sliding window bound on timing shift,
weighted alignment distances, and the two-level segment/series distances
used by shapelet scoring. The element cost is the squared difference, so
the diagonal alignment specializes every distance here to the Euclidean
one.

Scalar functions are the readable reference path; ``*_coefficients``
functions run the same walks vectorized across many segments at once and
are what the training pipeline calls. Equivalence of the two paths is
covered by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_DIAG, _RIGHT, _DOWN = 0, 1, 2  # right advances j, down advances i


@dataclass(frozen=True)
class Alignment:
    """A monotone, continuous pairing of indices between two sequences.

    ``idx1[k]``/``idx2[k]`` are 0-based positions; the pairing starts at
    (0, 0), ends at (l1-1, l2-1), and each step advances either index by
    at most one.
    """

    idx1: np.ndarray
    idx2: np.ndarray

    def __len__(self) -> int:
        return len(self.idx1)


@dataclass(frozen=True)
class WarpConfig:
    """Warping behavior: exact dynamic program or windowed greedy walk."""

    mode: str = "greedy"
    window: int | None = None  # None: ceil(max(l1, l2) / 2) per pair

    def __post_init__(self):
        if self.mode not in ("greedy", "exact"):
            raise ValueError(f"unknown warp mode {self.mode!r}")
        if self.window is not None and self.window < 1:
            raise ValueError("warp window must be >= 1")

    def resolve_window(self, l1: int, l2: int) -> int:
        if self.window is not None:
            return self.window
        return max(1, math.ceil(max(l1, l2) / 2))


DEFAULT_WARP = WarpConfig()


def _as_seq(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("sequence must be non-empty and 1-d")
    return a


def dtw_exact(s1, s2) -> tuple[float, Alignment]:
    """Exact DTW distance and a minimizing alignment.

    Returns ``sqrt(min over alignments of sum of squared differences)``.
    Ties during backtracking break diagonal, then horizontal, then
    vertical, for determinism.
    """
    x, y = _as_seq(s1), _as_seq(s2)
    l1, l2 = len(x), len(y)
    local = (x[:, None] - y[None, :]) ** 2
    acc = np.full((l1, l2), np.inf)
    move = np.zeros((l1, l2), dtype=np.uint8)
    acc[0, 0] = local[0, 0]
    for i in range(1, l1):
        acc[i, 0] = acc[i - 1, 0] + local[i, 0]
        move[i, 0] = _DOWN
    for j in range(1, l2):
        acc[0, j] = acc[0, j - 1] + local[0, j]
        move[0, j] = _RIGHT
    for i in range(1, l1):
        for j in range(1, l2):
            candidates = (acc[i - 1, j - 1], acc[i, j - 1], acc[i - 1, j])
            best = min(candidates)
            acc[i, j] = best + local[i, j]
            move[i, j] = candidates.index(best)  # diag > right > down on ties
    i, j = l1 - 1, l2 - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        m = move[i, j]
        if m == _DIAG and i > 0 and j > 0:
            i, j = i - 1, j - 1
        elif m == _RIGHT and j > 0:
            j -= 1
        else:
            i -= 1
        path.append((i, j))
    path.reverse()
    idx1 = np.array([p[0] for p in path], dtype=np.int64)
    idx2 = np.array([p[1] for p in path], dtype=np.int64)
    return float(np.sqrt(acc[l1 - 1, l2 - 1])), Alignment(idx1, idx2)


def dtw_greedy(s1, s2, cfg: WarpConfig | None = None) -> tuple[float, Alignment]:
    """Greedy windowed DTW: locally cheapest steps from corner to corner.

    Every visited cell contributes its squared difference, so the result
    is the cost of one feasible alignment and never undercuts
    :func:`dtw_exact`. When a step would push the index shift to the
    window ``w`` or beyond, the step is rolled back in favor of the
    opposite direction; if that is blocked or also out of window, the
    diagonal is tried, and failing that the only feasible move is kept.
    The walk visits at most l1 + l2 cells.
    """
    x, y = _as_seq(s1), _as_seq(s2)
    cfg = cfg or DEFAULT_WARP
    l1, l2 = len(x), len(y)
    w = cfg.resolve_window(l1, l2)

    i = j = 0
    cost = (x[0] - y[0]) ** 2
    path = [(0, 0)]
    while i < l1 - 1 or j < l2 - 1:
        can_i, can_j = i < l1 - 1, j < l2 - 1
        c_diag = (x[i + 1] - y[j + 1]) ** 2 if can_i and can_j else np.inf
        c_right = (x[i] - y[j + 1]) ** 2 if can_j else np.inf
        c_down = (x[i + 1] - y[j]) ** 2 if can_i else np.inf
        if c_diag <= c_right and c_diag <= c_down:
            m = _DIAG
        elif c_right <= c_down:
            m = _RIGHT
        else:
            m = _DOWN
        ni = i + (m != _RIGHT)
        nj = j + (m != _DOWN)
        if abs(ni - nj) >= w:
            if m == _RIGHT and can_i and abs(i + 1 - j) < w:
                ni, nj = i + 1, j
            elif m == _DOWN and can_j and abs(i - (j + 1)) < w:
                ni, nj = i, j + 1
            elif can_i and can_j and abs(i - j) < w:
                ni, nj = i + 1, j + 1
            # else: boundary leaves a single feasible move; keep it
        i, j = ni, nj
        cost += (x[i] - y[j]) ** 2
        path.append((i, j))
    idx1 = np.array([p[0] for p in path], dtype=np.int64)
    idx2 = np.array([p[1] for p in path], dtype=np.int64)
    return float(np.sqrt(cost)), Alignment(idx1, idx2)


def align(s1, s2, cfg: WarpConfig | None = None) -> tuple[float, Alignment]:
    cfg = cfg or DEFAULT_WARP
    if cfg.mode == "exact":
        return dtw_exact(s1, s2)
    return dtw_greedy(s1, s2, cfg)


def weighted_distance(values, weights, segment, cfg: WarpConfig | None = None) -> float:
    """Alignment distance with per-element weights projected onto the path.

    The alignment is found on the unweighted cost, then the weight of each
    shapelet element is applied to every squared difference its alignment
    pairs contribute. All-ones weights recover the plain warp distance.
    """
    v = _as_seq(values)
    w = _as_seq(weights)
    if len(w) != len(v):
        raise ValueError("weights must match values in length")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    s = _as_seq(segment)
    _, a = align(v, s, cfg)
    diffs = (v[a.idx1] - s[a.idx2]) ** 2
    return float(np.sqrt(np.sum(w[a.idx1] * diffs)))


def softmin(values, temperature: float) -> float:
    """Smooth surrogate for min: exp(-d/t)-weighted average of the inputs."""
    d = np.asarray(values, dtype=np.float64)
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = (d - d.min()) / temperature
    g = np.exp(-z)
    return float(np.sum(d * g) / np.sum(g))


def series_distance(
    values,
    weights,
    segment_weights,
    segments,
    temperature: float = 1.0,
    hard: bool = False,
    cfg: WarpConfig | None = None,
) -> float:
    """Two-level distance between a weighted shapelet and a segmented series.

    Each of the m segment distances is scaled by its segment-level weight;
    ``hard`` takes their minimum, otherwise the softmin at the given
    temperature is returned.
    """
    segs = np.asarray(segments, dtype=np.float64)
    if segs.ndim != 2 or segs.shape[0] == 0:
        raise ValueError("segments must be a non-empty (m, l) array")
    u = _as_seq(segment_weights)
    if len(u) != segs.shape[0]:
        raise ValueError("segment weights must match the number of segments")
    scaled = np.array(
        [u[k] * weighted_distance(values, weights, segs[k], cfg) for k in range(segs.shape[0])]
    )
    if hard:
        return float(scaled.min())
    return softmin(scaled, temperature)


# ---------------------------------------------------------------------------
# Vectorized alignment paths.
#
# For a fixed sequence v and a batch of segments, the coefficient matrix C
# has one row per segment with C[n, a] = sum of squared differences that
# shapelet element a contributes on the alignment path for segment n, so
# that the weighted distance is sqrt(C @ w) and the unweighted distance is
# sqrt(C.sum(axis=1)).
# ---------------------------------------------------------------------------


def greedy_coefficients(values, segments, window: int | None = None) -> np.ndarray:
    """Greedy-walk coefficient matrix for a batch of segments."""
    v = _as_seq(values)
    segs = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    n, l2 = segs.shape
    l1 = len(v)
    w = WarpConfig(window=window).resolve_window(l1, l2)

    coeff = np.zeros((n, l1))
    i = np.zeros(n, dtype=np.int64)
    j = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    coeff[:, 0] = (v[0] - segs[:, 0]) ** 2

    while True:
        active = (i < l1 - 1) | (j < l2 - 1)
        if not active.any():
            break
        r = rows[active]
        ia, ja = i[active], j[active]
        can_i = ia < l1 - 1
        can_j = ja < l2 - 1
        i_next = np.minimum(ia + 1, l1 - 1)
        j_next = np.minimum(ja + 1, l2 - 1)
        c_diag = np.where(can_i & can_j, (v[i_next] - segs[r, j_next]) ** 2, np.inf)
        c_right = np.where(can_j, (v[ia] - segs[r, j_next]) ** 2, np.inf)
        c_down = np.where(can_i, (v[i_next] - segs[r, ja]) ** 2, np.inf)

        diag = (c_diag <= c_right) & (c_diag <= c_down)
        right = ~diag & (c_right <= c_down)
        down = ~diag & ~right
        ni = ia + (diag | down)
        nj = ja + (diag | right)

        viol = np.abs(ni - nj) >= w
        # rolled-back step goes to the opposite lateral direction when open,
        # else the diagonal, else stays as chosen (boundary clamp)
        fix_down = viol & right & can_i & (np.abs(ia + 1 - ja) < w)
        fix_right = viol & down & can_j & (np.abs(ia - (ja + 1)) < w)
        fix_diag = viol & ~fix_down & ~fix_right & can_i & can_j & (np.abs(ia - ja) < w)
        ni = np.where(fix_down, ia + 1, np.where(fix_right, ia, np.where(fix_diag, ia + 1, ni)))
        nj = np.where(fix_down, ja, np.where(fix_right, ja + 1, np.where(fix_diag, ja + 1, nj)))

        coeff[r, ni] += (v[ni] - segs[r, nj]) ** 2
        i[active], j[active] = ni, nj
    return coeff


def exact_coefficients(values, segments) -> np.ndarray:
    """Exact-DTW coefficient matrix for a batch of segments."""
    v = _as_seq(values)
    segs = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    n, l2 = segs.shape
    l1 = len(v)
    local = (v[None, :, None] - segs[:, None, :]) ** 2  # (n, l1, l2)
    acc = np.full((n, l1, l2), np.inf)
    move = np.zeros((n, l1, l2), dtype=np.uint8)
    acc[:, 0, 0] = local[:, 0, 0]
    for i in range(1, l1):
        acc[:, i, 0] = acc[:, i - 1, 0] + local[:, i, 0]
        move[:, i, 0] = _DOWN
    for j in range(1, l2):
        acc[:, 0, j] = acc[:, 0, j - 1] + local[:, 0, j]
        move[:, 0, j] = _RIGHT
    for i in range(1, l1):
        for j in range(1, l2):
            diag = acc[:, i - 1, j - 1]
            left = acc[:, i, j - 1]
            up = acc[:, i - 1, j]
            best = np.minimum(diag, np.minimum(left, up))
            acc[:, i, j] = best + local[:, i, j]
            m = np.where(left == best, _RIGHT, _DOWN)
            move[:, i, j] = np.where(diag == best, _DIAG, m)

    coeff = np.zeros((n, l1))
    rows = np.arange(n)
    i = np.full(n, l1 - 1, dtype=np.int64)
    j = np.full(n, l2 - 1, dtype=np.int64)
    coeff[:, l1 - 1] = local[:, l1 - 1, l2 - 1]
    while True:
        active = (i > 0) | (j > 0)
        if not active.any():
            break
        r = rows[active]
        m = move[r, i[active], j[active]]
        step_i = (m != _RIGHT) & (i[active] > 0)
        step_j = (m != _DOWN) & (j[active] > 0)
        i[active] -= step_i
        j[active] -= step_j
        coeff[r, i[active]] += local[r, i[active], j[active]]
    return coeff


def alignment_coefficients(values, segments, cfg: WarpConfig | None = None) -> np.ndarray:
    cfg = cfg or DEFAULT_WARP
    if cfg.mode == "exact":
        return exact_coefficients(values, segments)
    return greedy_coefficients(values, segments, cfg.window)
