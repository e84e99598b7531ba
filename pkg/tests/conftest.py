import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from predsens import data, model as mlp  # noqa: E402

ADULT_DIR = Path(os.environ.get("PREDSENS_ADULT_DIR", Path(__file__).parents[1] / "data" / "adult"))
ADULT_TRAIN = ADULT_DIR / "adult.data"
ADULT_TEST = ADULT_DIR / "adult.test"

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def adult_paths():
    missing = [p for p in (ADULT_TRAIN, ADULT_TEST) if not p.exists()]
    if missing:
        pytest.fail(f"Adult data not found: {missing}. Set PREDSENS_ADULT_DIR (see README).")
    return ADULT_TRAIN, ADULT_TEST


@pytest.fixture(scope="session")
def adult(adult_paths):
    train_table = data.load_csv(adult_paths[0])
    test_table = data.load_csv(adult_paths[1])
    schema = data.fit_schema(train_table, "sex", "Male")
    return {
        "train_table": train_table,
        "test_table": test_table,
        "schema": schema,
        "train": data.encode(train_table, schema),
        "test": data.encode(test_table, schema),
    }


_MODELS = {}


def train_adult_model(adult, seed: int):
    """Default-hyperparameter model, cached per seed for the session."""
    if seed not in _MODELS:
        ds = adult["train"]
        m = mlp.init([ds.schema.width, *mlp.DEFAULT_HIDDEN, 1], seed)
        m, trace = mlp.train(m, ds.features, ds.labels, seed=seed)
        m.schema = ds.schema.to_dict()
        m.schema_fingerprint = ds.schema.fingerprint()
        _MODELS[seed] = (m, trace)
    return _MODELS[seed]


@pytest.fixture(scope="session")
def adult_model(adult):
    return train_adult_model(adult, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_mlp(rng, max_layers=3, max_width=16, in_dim=None):
    n_layers = int(rng.integers(1, max_layers + 1))
    dims = [in_dim or int(rng.integers(1, max_width + 1))]
    dims += [int(rng.integers(1, max_width + 1)) for _ in range(n_layers - 1)] + [1]
    weights = [rng.normal(size=(dims[k + 1], dims[k])) / np.sqrt(dims[k]) for k in range(n_layers)]
    biases = [0.1 * rng.normal(size=dims[k + 1]) for k in range(n_layers)]
    return mlp.MlpModel(tuple(dims), weights, biases)
