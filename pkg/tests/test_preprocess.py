import numpy as np
import pytest

from advnids import preprocess
from advnids.dataio import FeatureSchema, RawDataset
from advnids.errors import ContractViolation
from advnids.preprocess import FittedPipeline

SCHEMA = FeatureSchema.from_dict({
    "name": "p",
    "label": {"benign": ["normal"]},
    "columns": [
        {"name": "num", "kind": "numeric", "mutability": "mutable"},
        {"name": "proto", "kind": "categorical", "mutability": "immutable"},
        {"name": "const", "kind": "numeric", "mutability": "mutable"},
        {"name": "class", "kind": "label"},
    ],
})


def raw(rows):
    labels = np.array([0 if r[-1] == "normal" else 1 for r in rows])
    return RawDataset(SCHEMA, [list(r) for r in rows], labels)


TRAIN = raw([("1", "tcp", "5", "normal"), ("?", "udp", "5", "smurf"), ("3", "tcp", "5", "normal")])


def test_median_imputation_and_mode():
    pipe = preprocess.fit(TRAIN)
    num, proto, const = pipe.columns
    assert num.median == 2.0
    assert proto.mode == "tcp"
    assert proto.ordinal_map == {"tcp": 0, "udp": 1}
    assert preprocess.encode(pipe, TRAIN)[1, 0] == 2.0


def test_constant_column_flagged():
    pipe = preprocess.fit(TRAIN)
    const = pipe.columns[2]
    assert not const.scaled
    assert np.all(preprocess.transform(pipe, TRAIN).features[:, 2] == 0.0)


def test_closed_form_standardization():
    data = raw([("1", "tcp", "5", "normal"), ("2", "tcp", "5", "normal"), ("3", "udp", "5", "smurf")])
    out = preprocess.transform(preprocess.fit(data), data).features[:, 0]
    assert np.allclose(out, [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)


def test_unseen_category_maps_to_unknown():
    pipe = preprocess.fit(TRAIN)
    enc = preprocess.encode(pipe, raw([("1", "sctp", "5", "normal")]))
    assert enc[0, 1] == pipe.columns[1].unknown_ordinal == 2


def test_all_missing_column_raises():
    with pytest.raises(ContractViolation, match="num"):
        preprocess.fit(raw([("?", "tcp", "5", "normal"), ("", "udp", "5", "smurf")]))


def test_transform_deterministic_and_roundtrip(tmp_path, nsl_small):
    x = nsl_small.train.features
    scaled = [c.scaled for c in nsl_small.pipe.columns]
    assert np.all(np.abs(x[:, scaled].mean(axis=0)) < 1e-9)
    assert np.all(np.abs(x[:, scaled].std(axis=0) - 1.0) < 1e-9)
    nsl_small.pipe.save(tmp_path / "pipe.json")
    again = FittedPipeline.load(tmp_path / "pipe.json")
    assert again.checksum() == nsl_small.pipe.checksum()
    assert again.to_dict()["std_convention"] == "population"


def test_imputation_keeps_observed_values():
    enc = preprocess.encode(preprocess.fit(TRAIN), TRAIN)
    assert enc[0, 0] == 1.0 and enc[2, 0] == 3.0


def test_clip_to_domain():
    pipe = preprocess.fit(TRAIN)
    inside = preprocess.transform(pipe, TRAIN).features[0]
    assert np.array_equal(preprocess.clip_to_domain(pipe, inside), inside)
    far = pipe.upper + 10.0
    assert np.array_equal(preprocess.clip_to_domain(pipe, far), pipe.upper)
    g = np.random.default_rng(0).normal(scale=5, size=(50, 3))
    out = preprocess.clip_to_domain(pipe, g)
    assert np.all(out >= pipe.lower) and np.all(out <= pipe.upper)


def test_schema_mismatch():
    other = FeatureSchema.from_dict({"columns": [{"name": "a", "kind": "numeric", "mutability": "mutable"},
                                                 {"name": "class", "kind": "label"}]})
    data = RawDataset(other, [["1", "normal"]], np.array([0]))
    with pytest.raises(ContractViolation):
        preprocess.transform(preprocess.fit(TRAIN), data)
