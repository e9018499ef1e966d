"""Synthetic two-class dataset for demos and end-to-end tests.

Normal series repeat the motif schedule hill, hill, valley, valley
across their eight segments, so same-motif segments are adjacent and the
evolution graph always receives same-shapelet transitions. Positive
series overwrite the middle three segments with spike and plateau
anomalies and drift slightly elsewhere. The classes are separable both
by per-segment statistics and by which shapelets their segments match,
so a correct pipeline should reach perfect test scores.
"""

from __future__ import annotations

import numpy as np

SEGMENT_LENGTH = 12
NUM_SEGMENTS = 8
SERIES_LENGTH = SEGMENT_LENGTH * NUM_SEGMENTS


def _hill() -> np.ndarray:
    t = np.linspace(0.0, np.pi, SEGMENT_LENGTH)
    return 0.8 * np.sin(t) + 0.2


def _valley() -> np.ndarray:
    return 1.2 - _hill()


def _spike() -> np.ndarray:
    seg = np.full(SEGMENT_LENGTH, 0.25)
    seg[4:8] = (1.6, 2.2, 2.2, 1.6)
    return seg


def _plateau() -> np.ndarray:
    seg = np.full(SEGMENT_LENGTH, 1.9)
    seg[:2] = (0.9, 1.5)
    seg[-2:] = (1.5, 0.9)
    return seg


def make_series(label: int, rng: np.random.Generator) -> np.ndarray:
    amp = rng.uniform(0.9, 1.1)
    offset = rng.uniform(-0.1, 0.1)
    segments = []
    for i in range(NUM_SEGMENTS):
        motif = _hill() if i % 4 < 2 else _valley()
        if label == 1:
            # anomalies occupy three adjacent slots; the rest drift upward
            if i in (3, 5):
                motif = _spike()
            elif i == 4:
                motif = _plateau()
            else:
                motif = motif + 0.15
        segments.append(amp * motif + offset + rng.normal(0.0, 0.04, SEGMENT_LENGTH))
    return np.concatenate(segments)


def make_dataset(num_series: int, positive_fraction: float, rng: np.random.Generator):
    """Rows of (label, values); positives first come last so files stay obvious."""
    num_pos = max(2, round(num_series * positive_fraction))
    labels = [0] * (num_series - num_pos) + [1] * num_pos
    return [(y, make_series(y, rng)) for y in labels]


def write_ucr(path, rows, delimiter: str = "\t"):
    with open(path, "w", encoding="utf-8") as fh:
        for label, values in rows:
            cells = [str(label)] + [f"{v:.6f}" for v in values]
            fh.write(delimiter.join(cells) + "\n")


def write_standard_files(directory, seed: int = 20240501, num_train: int = 40, num_test: int = 20):
    """Write synthetic_TRAIN.tsv / synthetic_TEST.tsv under ``directory``."""
    from pathlib import Path

    rng = np.random.default_rng(seed)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train = directory / "synthetic_TRAIN.tsv"
    test = directory / "synthetic_TEST.tsv"
    write_ucr(train, make_dataset(num_train, 0.3, rng))
    write_ucr(test, make_dataset(num_test, 0.3, rng))
    return train, test


def demo_config(train_path, test_path, out_dir, seed: int = 0, **extra) -> dict:
    """Pipeline settings sized for the synthetic files."""
    doc = dict(
        train_path=str(train_path),
        test_path=str(test_path),
        out_dir=str(out_dir),
        num_shapelets=12,
        segment_length=SEGMENT_LENGTH,
        embed_dim=16,
        candidate_size=160,
        epochs=12,
        batch_size=50,
        delta_percentile=25.0,
        max_depth=3,
        class_weight=1.0,
        num_rounds=60,
        inner_folds=3,
        seed=seed,
        workers=1,
    )
    doc.update(extra)
    return doc
