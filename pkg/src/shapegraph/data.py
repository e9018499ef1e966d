"""Dataset loading, 0-1 normalization, and fixed-length segmentation.

Datasets follow the UCR text convention: one series per line, the class
label in the first field, values in the remaining fields. Series are
rescaled to [0, 1] per series and then cut into m = n // l contiguous,
non-overlapping windows of length l; any trailing remainder is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class LoadError(ValueError):
    """Raised when a dataset file cannot be parsed into a valid Dataset."""


@dataclass(frozen=True)
class TimeSeries:
    """A univariate series with an optional binary label (1 = positive)."""

    values: np.ndarray
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("series values must be a non-empty 1-d sequence")


@dataclass(frozen=True)
class Segment:
    """One fixed-length window of a series.

    ``position`` is the 1-based window index within its series.
    """

    values: np.ndarray
    series_index: int
    position: int


@dataclass(frozen=True)
class Dataset:
    """A list of equally shaped labeled series plus segmentation geometry.

    ``segment_length`` is unset at load time; the pipeline fixes it before
    segment-level work starts.
    """

    series: list[TimeSeries]
    segment_length: int | None = None
    label_mapping: dict[float, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.series)

    @property
    def series_length(self) -> int:
        lengths = {len(s.values) for s in self.series}
        if len(lengths) != 1:
            raise ValueError("series lengths are not uniform")
        return lengths.pop()

    @property
    def num_segments(self) -> int:
        if self.segment_length is None:
            raise ValueError("segment_length not set")
        return self.series_length // self.segment_length

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.series], dtype=np.int64)

    @property
    def positive_ratio(self) -> float:
        labels = self.labels
        return float(np.mean(labels == 1))

    def with_segment_length(self, l: int) -> "Dataset":
        n = self.series_length
        if l <= 0 or l > n:
            raise ValueError(f"segment length {l} invalid for series of length {n}")
        return replace(self, segment_length=l)


def _sniff_delimiter(line: str) -> str:
    return "\t" if "\t" in line else ","


def _parse_label(raw: str, row: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise LoadError(f"row {row}: label {raw!r} is not numeric") from None


def load_ucr(path, delimiter: str | None = None, positive_label: float | None = None) -> Dataset:
    """Load a UCR-format text file into a labeled Dataset.

    Each row is ``label, v1, v2, ...`` with a consistent column count. A
    header row is skipped when its first cell is non-numeric. The two
    distinct raw labels are remapped to {0, 1}; by default the minority
    class becomes positive (ties pick the numerically larger raw label),
    and ``positive_label`` overrides the choice. Row order is preserved.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()

    rows: list[tuple[int, float, np.ndarray]] = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        sep = delimiter or _sniff_delimiter(line)
        cells = [c.strip() for c in line.split(sep)]
        if lineno == 1 and not rows:
            try:
                float(cells[0])
            except ValueError:
                continue  # header row
        if len(cells) < 2:
            raise LoadError(f"row {lineno}: expected a label and at least one value")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise LoadError(
                f"row {lineno}: has {len(cells)} columns, expected {width}"
            )
        label = _parse_label(cells[0], lineno)
        try:
            values = np.array([float(c) for c in cells[1:]], dtype=np.float64)
        except ValueError:
            bad = next(c for c in cells[1:] if not _is_float(c))
            raise LoadError(f"row {lineno}: non-numeric value {bad!r}") from None
        if not np.all(np.isfinite(values)):
            raise LoadError(f"row {lineno}: non-finite value")
        rows.append((lineno, label, values))

    if not rows:
        raise LoadError("file contains no data rows")

    raw_labels = [label for _, label, _ in rows]
    distinct = sorted(set(raw_labels))
    if len(distinct) > 2 or (len(distinct) == 1 and distinct[0] not in (0.0, 1.0)):
        raise LoadError(
            f"expected binary labels, found {len(distinct)} distinct values: {distinct}"
        )
    if positive_label is not None:
        if positive_label not in distinct:
            raise LoadError(f"positive label {positive_label} not present in {distinct}")
        pos = positive_label
    elif len(distinct) == 1:
        pos = 1.0  # already-canonical single-class file keeps its labels
    else:
        counts = {v: raw_labels.count(v) for v in distinct}
        low, high = distinct
        pos = low if counts[low] < counts[high] else high
    mapping = {v: int(v == pos) for v in distinct}

    series = [TimeSeries(values, mapping[label]) for _, label, values in rows]
    return Dataset(series=series, label_mapping=mapping)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def rescale_01(values: np.ndarray) -> np.ndarray:
    """Affinely map values onto [0, 1]; constant input maps to all-zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def normalize_01(series: TimeSeries) -> TimeSeries:
    """Return the series rescaled to [0, 1] (see :func:`rescale_01`)."""
    return TimeSeries(rescale_01(series.values), series.label)


def normalize_dataset(dataset: Dataset) -> Dataset:
    return replace(dataset, series=[normalize_01(s) for s in dataset.series])


def segment_values(values: np.ndarray, l: int) -> np.ndarray:
    """Cut a value array into an (m, l) matrix of non-overlapping windows."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if l <= 0:
        raise ValueError(f"segment length must be positive, got {l}")
    if l > n:
        raise ValueError(f"segment length {l} exceeds series length {n}")
    m = n // l
    return values[: m * l].reshape(m, l)


def segment(series: TimeSeries, l: int, series_index: int = 0) -> list[Segment]:
    """Split a series into m = n // l contiguous windows, dropping the tail."""
    windows = segment_values(series.values, l)
    return [
        Segment(values=windows[i], series_index=series_index, position=i + 1)
        for i in range(windows.shape[0])
    ]


def segment_matrix(dataset: Dataset) -> np.ndarray:
    """Stack all series windows into a (num_series, m, l) array."""
    l = dataset.segment_length
    if l is None:
        raise ValueError("segment_length not set on dataset")
    return np.stack([segment_values(s.values, l) for s in dataset.series])
