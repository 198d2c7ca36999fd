import itertools

import numpy as np
import pytest

from advnids.attacks import (
    GanConfig,
    GanState,
    bce_loss,
    evasion_rate,
    fgsm_batch,
    fgsm_generate,
    generate_adversarial,
    generator_loss_and_grads,
    load_batch,
    majority_vote,
    save_batch,
    train_gan,
    train_voting_ensemble,
)
from advnids.dataio import Column, FeatureSchema, LabeledDataset
from advnids.errors import ContractViolation
from advnids.models.mlp import MlpNetwork
from advnids.numerics import RngStream, finite_diff_gradient, relative_error

from conftest import blobs


def test_bce_examples():
    assert bce_loss(1, 1.0) == pytest.approx(0.0, abs=1e-6)
    assert bce_loss(0, 0.5) == pytest.approx(np.log(2))
    y = np.array([1, 0, 1, 1])
    p = np.array([0.9, 0.2, 0.4, 0.7])
    per = [bce_loss(a, b) for a, b in zip(y, p)]
    assert bce_loss(y, p) == pytest.approx(np.mean(per))
    assert bce_loss(y, p) >= 0


def test_majority_vote_examples():
    assert majority_vote(1, 1, 1, 0) == 1
    assert majority_vote(0, 0, 0, 1) == 0
    assert majority_vote(1, 1, 0, 0) == 1


def test_majority_vote_symmetric_and_monotone():
    for votes in itertools.product((0, 1), repeat=4):
        out = majority_vote(*votes)
        for perm in itertools.permutations(votes):
            assert majority_vote(*perm) == out
        for i in range(4):
            if votes[i] == 0:
                up = list(votes)
                up[i] = 1
                assert majority_vote(*up) >= out


def test_majority_vote_rejects_non_binary():
    with pytest.raises(ContractViolation):
        majority_vote(2, 0, 0, 0)


# ------------------------------------------------------------------- FGSM

def _net(d, seed):
    net = MlpNetwork.initialize([d, 8, 8, 1], RngStream(seed))
    for b in net.biases:
        b[:] = RngStream(seed).child(9).normal(0, 0.1, size=b.shape)
    return net


def test_fgsm_zero_eps_identity():
    net = _net(5, 0)
    x = np.random.default_rng(0).normal(size=5)
    out = fgsm_generate(net, x, 1, 0.0, np.ones(5, dtype=bool))
    assert np.array_equal(out, x) and out is not x


def test_fgsm_negative_eps():
    with pytest.raises(ContractViolation):
        fgsm_generate(_net(3, 0), np.zeros(3), 1, -0.1, np.ones(3, dtype=bool))


@pytest.mark.parametrize("draw", range(20))
def test_fgsm_signs_match_oracle(draw):
    d = 6
    net = _net(d, draw)
    g = np.random.default_rng(draw)
    x = g.normal(size=d)
    mask = g.random(d) < 0.6
    eps = 0.05
    out = fgsm_generate(net, x, 1, eps, mask)
    oracle = finite_diff_gradient(lambda v: net.bce_loss(v[None, :], [1.0]), x)
    delta = out - x
    assert np.all(delta[~mask] == 0)
    assert np.all(np.isin(np.abs(delta[mask]), (0.0, eps)) | np.isclose(np.abs(delta[mask]), eps, atol=1e-15))
    big = np.abs(oracle) > 1e-8
    assert np.array_equal(np.sign(delta[mask & big]), np.sign(oracle[mask & big]))


def test_fgsm_respects_domain_and_immutables(nsl_small):
    from advnids.models import ClassifierSpec, train_classifier

    train = nsl_small.train
    mlp = train_classifier(ClassifierSpec("MLP", {"epochs": 2}), train, RngStream(0))
    mal = nsl_small.test.malicious()
    batch = fgsm_batch(mlp.net, mal, 0.2, nsl_small.pipe)
    mask = train.schema.mutable_mask
    assert np.array_equal(batch.features[:, ~mask], mal.features[:, ~mask])
    diff = np.abs(batch.features - mal.features)[:, mask]
    assert diff.max() <= 0.2 + 1e-12
    lo = np.minimum(nsl_small.pipe.lower, mal.features)
    hi = np.maximum(nsl_small.pipe.upper, mal.features)
    assert np.all(batch.features >= lo - 1e-12) and np.all(batch.features <= hi + 1e-12)


# -------------------------------------------------------------------- GAN

def _gan(data, epochs=3, seed=0):
    ens = train_voting_ensemble(data, RngStream(seed).child(0))
    cfg = GanConfig(epochs=epochs, batch_size=32, probe_size=64)
    return train_gan(data.malicious(), data.benign(), ens, cfg, RngStream(seed).child(1))


def test_gan_shapes_and_epoch_zero():
    data = blobs(200, 6, immutable=(0, 3))
    gan = _gan(data, epochs=0)
    m = data.schema.mutable_indices.size
    assert gan.generator.input_dim == m + m
    assert gan.generator.output_dim == m
    assert gan.discriminator.input_dim == 6
    assert len(gan.history) == 1 and gan.history[0]["epoch"] == 0
    assert 0.0 <= gan.history[0]["evasion_rate"] <= 1.0


def test_gan_rejects_mixed_labels():
    data = blobs(100, 4)
    with pytest.raises(ContractViolation):
        train_gan(data, data.benign(), None, {"epochs": 1}, RngStream(0))


def test_gan_preserves_immutables_and_is_deterministic():
    data = blobs(200, 6, immutable=(0, 3))
    gan = _gan(data)
    mal = data.malicious()
    a = generate_adversarial(gan, mal, RngStream(5))
    b = generate_adversarial(gan, mal, RngStream(5))
    assert len(a) == len(mal)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.features[:, [0, 3]], mal.features[:, [0, 3]])
    assert np.all(a.labels == 1) and a.provenance == "GAN"
    again = _gan(data)
    assert np.array_equal(generate_adversarial(again, mal, RngStream(5)).features, a.features)


def test_generator_ignores_immutables():
    data = blobs(50, 5, immutable=(1, 2))
    gan = _gan(data, epochs=0)
    src = data.malicious().features[:4]
    z = gan.sample_noise(4, RngStream(1))
    poked = src.copy()
    poked[:, [1, 2]] += 7.0
    m = gan.mutable_idx
    assert np.array_equal(gan.generate_raw(src, z)[:, m], gan.generate_raw(poked, z)[:, m])


@pytest.mark.parametrize("draw", range(20))
def test_generator_and_discriminator_gradients(draw):
    data = blobs(40, 5, immutable=(0,), seed=draw)
    gan = _gan(data, epochs=0, seed=draw)
    for net in (gan.generator, gan.discriminator):
        for b in net.biases:
            b[:] = RngStream(draw).child(7).normal(0, 0.1, size=b.shape)
    src = data.malicious().features[:3]
    z = gan.sample_noise(3, RngStream(draw).child(2))
    loss, gw, _ = generator_loss_and_grads(gan, src, z)
    g = np.random.default_rng(draw)
    for _ in range(5):
        k = g.integers(gan.generator.n_layers)
        idx = tuple(g.integers(s) for s in gan.generator.weights[k].shape)
        w = gan.generator.weights[k]

        def f(v, w=w, idx=idx):
            old = w[idx]
            w[idx] = v[0]
            out = generator_loss_and_grads(gan, src, z)[0]
            w[idx] = old
            return out

        num = finite_diff_gradient(f, np.array([w[idx]]))[0]
        assert relative_error(np.array([gw[k][idx]]), np.array([num])) < 1e-4
    # discriminator input gradient through the weighted BCE
    x = gan.generate_raw(src, z)
    y = np.ones(3)
    wts = np.array([2.0, 1.0, 2.0])
    _, _, gin = gan.discriminator.bce_gradients(x, y, wts)
    num = finite_diff_gradient(lambda v: gan.discriminator.bce_loss(v.reshape(3, -1), y, wts), x.ravel())
    assert relative_error(gin.ravel(), num) < 1e-4


def _point_mass_task(seed, n=256):
    schema = FeatureSchema("pm", (Column("a", "numeric", "mutable"), Column("b", "numeric", "mutable"),
                                  Column("y", "label")), benign_labels=("0",), malicious_labels=("1",))
    r = RngStream(seed)
    target = np.array([1.0, -1.0])
    mal = r.normal(0, 0.5, (n, 2)) + np.array([-1.0, 1.0])
    ben = np.tile(target, (n, 1))
    return LabeledDataset(np.vstack([mal, ben]), np.r_[np.ones(n), np.zeros(n)], schema), target


@pytest.mark.slow
def test_point_mass_convergence_smoke():
    data, target = _point_mass_task(0, n=128)
    ens = train_voting_ensemble(data, RngStream(1))
    gan = train_gan(data.malicious(), data.benign(), ens,
                    GanConfig(epochs=150, batch_size=64), RngStream(2))
    out = generate_adversarial(gan, data.malicious(), RngStream(3)).features
    assert np.linalg.norm(out.mean(axis=0) - target) < np.linalg.norm(data.malicious().features.mean(0) - target)
    assert gan.history[-1]["evasion_rate"] > gan.history[0]["evasion_rate"]


def test_batch_csv_roundtrip(tmp_path):
    data = blobs(60, 4)
    gan = _gan(data, epochs=1)
    batch = generate_adversarial(gan, data.malicious(), RngStream(4))
    save_batch(batch, tmp_path / "b.csv", "deadbeef")
    text = (tmp_path / "b.csv").read_text()
    assert text.startswith("# attack: \"GAN\"")
    assert "# source_checksum: \"deadbeef\"" in text
    back = load_batch(tmp_path / "b.csv")
    assert np.array_equal(back.features, batch.features)
    assert back.provenance == "GAN" and back.seeds == batch.seeds


def test_gan_state_roundtrip():
    data = blobs(60, 4)
    gan = _gan(data, epochs=1)
    back = GanState.from_dict(gan.to_dict(), gan.ensemble)
    z = gan.sample_noise(5, RngStream(0))
    src = data.malicious().features[:5]
    assert np.array_equal(back.generate_raw(src, z), gan.generate_raw(src, z))
    assert evasion_rate(back, src) == evasion_rate(gan, src)
