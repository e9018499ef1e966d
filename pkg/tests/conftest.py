"""Shared fixtures: small labeled segment tensors and synthetic files."""

import os
from pathlib import Path

import numpy as np
import pytest

from shapegraph import synth


def make_labeled_segments(num_pos=3, num_neg=3, m=4, l=6, noise=0.05, seed=7):
    """Small two-class fixture: positives carry a bump in the third segment."""
    rng = np.random.default_rng(seed)
    series, labels = [], []
    for i in range(num_pos + num_neg):
        y = 1 if i < num_pos else 0
        base = 0.4 + 0.1 * np.sin(np.linspace(0, 4 * np.pi, m * l)) + rng.normal(0, noise, m * l)
        if y:
            base[2 * l : 3 * l] += 0.5
        series.append(base)
        labels.append(y)
    segments = np.stack([s.reshape(m, l) for s in series])
    return segments, np.array(labels, dtype=np.int64)


@pytest.fixture(scope="session")
def gradient_fixture():
    """The 6-series fixture used for finite-difference gradient checks."""
    return make_labeled_segments(num_pos=3, num_neg=3, m=4, l=6, seed=7)


@pytest.fixture(scope="session")
def golden_fixture():
    """A 10-series fixture whose loss values are frozen in the tests."""
    return make_labeled_segments(num_pos=4, num_neg=6, m=4, l=5, noise=0.08, seed=11)


@pytest.fixture(scope="session")
def synth_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthdata")
    train, test = synth.write_standard_files(root)
    return train, test


@pytest.fixture(scope="session")
def synth_run(synth_files, tmp_path_factory):
    """One full pipeline run over the synthetic files, shared across tests."""
    from shapegraph import pipeline

    train, test = synth_files
    out = tmp_path_factory.mktemp("synthrun")
    cfg = pipeline.PipelineConfig(**synth.demo_config(train, test, out, seed=7))
    report = pipeline.run_pipeline(cfg)
    return cfg, out, report


def earthquakes_paths():
    """Locate the Earthquakes UCR split if the user has provided it.

    Checked locations: $SHAPEGRAPH_UCR_DIR/Earthquakes and
    data/Earthquakes relative to the repository root. Returns None when
    unavailable (the network-isolated build environment cannot fetch it).
    """
    candidates = []
    env = os.environ.get("SHAPEGRAPH_UCR_DIR")
    if env:
        candidates.append(Path(env) / "Earthquakes")
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "Earthquakes")
    for base in candidates:
        for ext in ("tsv", "txt", "csv"):
            train = base / f"Earthquakes_TRAIN.{ext}"
            test = base / f"Earthquakes_TEST.{ext}"
            if train.exists() and test.exists():
                return train, test
    return None


requires_earthquakes = pytest.mark.skipif(
    earthquakes_paths() is None,
    reason=(
        "Earthquakes UCR data not present (network-isolated environment; "
        "place Earthquakes_TRAIN/TEST under data/Earthquakes/ or set SHAPEGRAPH_UCR_DIR)"
    ),
)
