import numpy as np
import pytest

from advnids.dataio import Column, FeatureSchema, LabeledDataset
from advnids.numerics import RngStream


def toy_schema(d: int, immutable=(0,)) -> FeatureSchema:
    cols = [
        Column(f"f{j}", "numeric", "immutable" if j in immutable else "mutable")
        for j in range(d)
    ]
    cols.append(Column("label", "label"))
    return FeatureSchema("toy", tuple(cols), benign_labels=("0",), malicious_labels=("1",))


def blobs(n: int, d: int, seed: int = 0, shift: float = 2.0, p_mal: float = 0.4, immutable=(0,)) -> LabeledDataset:
    """Two Gaussian classes separated along every axis by ``shift``."""
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < p_mal).astype(np.int64)
    y[:2] = (0, 1)
    x = rng.normal(size=(n, d)) + shift * y[:, None] / np.sqrt(d)
    return LabeledDataset(x, y, toy_schema(d, immutable))


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture(scope="session")
def nsl_small(tmp_path_factory):
    """Prepared synthetic NSL-KDD-shaped data (full transformed splits)."""
    from advnids.config import RunConfig
    from advnids.experiment import prepare_data

    root = tmp_path_factory.mktemp("nsl")
    cfg = RunConfig({
        "dataset": {"name": "nsl_kdd", "synthetic": {"train_rows": 3000, "test_rows": 800}},
        "output": {"dir": str(root)},
    })
    return prepare_data(cfg, root / "data")


# small enough for a full pipeline in a few seconds
TINY = {
    "dataset": {"synthetic": {"train_rows": 3000, "test_rows": 800}},
    "subsample": {"train": 600, "test": 200},
    "seeds": [0],
    "models": {"hyperparameters": {"RF": {"n_trees": 10}, "MLP": {"epochs": 10}, "GB": {"n_estimators": 20}}},
    "attack": {"gan": {"epochs": 3, "probe_size": 64}},
    "defense": {"folds": 3, "ae_epochs": 3},
}


# one PASS/FAIL line per acceptance criterion, printed after the run
CRITERIA: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    CRITERIA[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
