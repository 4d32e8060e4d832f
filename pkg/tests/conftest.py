import datetime as dt

import numpy as np
import pytest

from meterxai.meter import SLOTS_PER_WEEK, WeekSlice

MONDAY = dt.date(2009, 7, 20)


def make_week(values, meter="m1", start=MONDAY):
    return WeekSlice(meter, start, np.asarray(values, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_week(rng):
    return make_week(rng.gamma(2.0, 0.2, SLOTS_PER_WEEK))


@pytest.fixture(scope="session")
def small_corpus():
    from meterxai.meter import segment_weeks
    from meterxai.synth import SynthConfig, generate_households

    corpus = generate_households(SynthConfig(n_households=60, weeks_per_household=2, seed=7))
    data = {p.meter_id: segment_weeks(p) for p in corpus.profiles}
    return corpus, data


@pytest.fixture(scope="session")
def small_model(small_corpus):
    from meterxai.features import feature_matrix
    from meterxai.forest import train_forest

    corpus, data = small_corpus
    rows, y = [], []
    for p in corpus.profiles:
        for w in data[p.meter_id]:
            rows.append(w.values)
            y.append(p.labels["cooking"])
    return train_forest(feature_matrix(np.array(rows)), y, n_trees=30, seed=3)
