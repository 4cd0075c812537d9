from __future__ import annotations

import json
from types import SimpleNamespace

import numpy as np
import pytest

from mexpower.dataset import assemble_dataset, split_by_date
from mexpower.features import featurize
from mexpower.ingest import GAP_LIMIT_MS, StreamKind, grid_for_logs, parse_stream, resample_targets
from mexpower.synthgen import STREAM_FILES, SynthScenario, generate


def synth_pipeline(directory, delta_t=15, **scenario):
    """Generate, parse, featurize and split a synthetic scenario."""
    sc = SynthScenario(**scenario)
    paths = generate(sc, directory)
    logs = {StreamKind(k): parse_stream(paths[k], k) for k in STREAM_FILES}
    grid = grid_for_logs([logs[StreamKind.POWER]], delta_t)
    answer = json.loads(paths["ANSWER"].read_text())
    boundary = answer["midpoint_ms"]
    block, manifest = featurize(logs, grid, boundary)
    targets = resample_targets(logs[StreamKind.POWER], grid, GAP_LIMIT_MS)
    ds = assemble_dataset(block, targets)
    train, test = split_by_date(ds, boundary)
    return SimpleNamespace(scenario=sc, paths=paths, logs=logs, grid=grid, answer=answer,
                           boundary=boundary, block=block, manifest=manifest, ds=ds,
                           train=train, test=test)


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    return synth_pipeline(tmp_path_factory.mktemp("small"), duration_days=4, seed=3)


@pytest.fixture
def small_logs(small_synth):
    return small_synth.logs, small_synth.grid, small_synth.boundary


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
