"""
    Shared fixtures for the llsp tests.
"""
import os
from pathlib import Path

import numpy as np
import pytest

from llsp.data_ingest import Label, Segment
from llsp.selection import SetTag


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def write_set(tmp_path):
    """Write ``count`` integer files ``{prefix}001.txt..`` and return the directory."""
    def write(name, prefix, count=5, length=16, seed=0):
        directory = tmp_path / name
        directory.mkdir(parents=True, exist_ok=True)
        gen = np.random.default_rng(seed)
        for i in range(1, count + 1):
            values = gen.integers(-500, 500, size=length)
            (directory / "{}{:03d}.txt".format(prefix, i)).write_text(
                "".join("{}\n".format(v) for v in values))
        return directory
    return write


@pytest.fixture
def make_segment():
    def make(samples, tag="A", index=1, label=None, sample_rate=173.61):
        if label is None:
            label = Label.of_set(tag)
        return Segment(samples=np.asarray(samples, dtype=float), sample_rate=sample_rate,
                       set_tag=SetTag(tag), index_in_set=index, label=label)
    return make


@pytest.fixture
def bonn_root():
    root = os.environ.get("LLSP_BONN_ROOT")
    if not root or not Path(root).is_dir():
        pytest.skip("set LLSP_BONN_ROOT to the Bonn dataset directory")
    return Path(root)
