"""Default experiment parameters for the thermal power pipeline."""

from __future__ import annotations

from datetime import datetime, timezone

N_TARGETS = 33

GRANULARITIES = (1, 5, 10, 15, 30, 60)

# Number of historic intervals H per granularity (minutes).
HISTORY_HORIZONS = {
    1: (4, 16, 32, 64, 128),
    5: (1, 3, 6, 13, 25),
    10: (1, 2, 3, 6, 13),
    15: (1, 2, 3, 4, 9),
    30: (1, 2, 3, 4, 5),
    60: (1, 2, 3),
}

THETA_MINUTES = 1440
GAP_LIMIT_MINUTES = 10

TRAIN_START = datetime(2008, 8, 22, tzinfo=timezone.utc)
TRAIN_TEST_BOUNDARY = datetime(2014, 4, 14, tzinfo=timezone.utc)
TEST_END = datetime(2016, 3, 1, tzinfo=timezone.utc)

RF_TREES = 200
RF_FEATURE_FRACTION = 0.25
RF_LEAF_BUDGET = 500

GBT_ROUNDS = 200
GBT_MAX_DEPTH = 11
GBT_LEARNING_RATE = 0.1
GBT_ROW_FRACTION = 0.6
GBT_COL_FRACTION = 0.6
GBT_EARLY_STOP = 5
GBT_VALIDATION_FRACTION = 0.2


def default_horizons(delta_t: int) -> tuple[int, ...]:
    """History horizons for ``delta_t``; untabulated granularities reuse the
    one-minute time spans rounded to whole intervals."""
    if delta_t in HISTORY_HORIZONS:
        return HISTORY_HORIZONS[delta_t]
    spans = HISTORY_HORIZONS[1]
    return tuple(sorted({max(1, round(s / delta_t)) for s in spans}))


def default_min_leaf(delta_t: int) -> int:
    """Minimal leaf size, 500 examples at one-minute granularity scaled by 1/dt."""
    return max(1, int(RF_LEAF_BUDGET // delta_t))


def default_feature_subset(n_features: int) -> int:
    return max(1, int(round(RF_FEATURE_FRACTION * n_features)))


def to_millis(moment: datetime) -> int:
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return int(round(moment.timestamp() * 1000))
