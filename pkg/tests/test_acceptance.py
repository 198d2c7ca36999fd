"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the pytest terminal summary)
before asserting. Criteria 5-8 share one 3-seed run per dataset at desk
scale (5,000 train / 1,000 test rows); those runs take several minutes.
"""

import time

import numpy as np
import pytest

from advnids.attacks import (
    GanConfig,
    fgsm_generate,
    generate_adversarial,
    generator_loss_and_grads,
    train_gan,
    train_voting_ensemble,
)
from advnids.cli import main
from advnids.config import BASELINES, RunConfig
from advnids.dataio import load_dataset
from advnids.evaluation import compute_metrics, run_all, significance_test
from advnids.experiment import ABLATION_VARIANTS, condition_sets, fit_gate, subsample
from advnids.models import ClassifierSpec, mlp_input_gradient, reconstruction_error, train_classifier
from advnids.models.mlp import MlpNetwork
from advnids.models.neural import Autoencoder
from advnids.numerics import RngStream, finite_diff_gradient, relative_error
from advnids.preprocess import transform
from advnids.synthetic import write_dataset

from conftest import blobs, record_criterion
from test_attacks import _point_mass_task

DRAWS = 20
GRAD_TOL = 1e-4


def _verdict(n, checks, detail):
    ok = all(checks)
    record_criterion(n, ok, detail)
    assert ok, detail


# ------------------------------------------------------------ criterion 1

def _relu_pattern(nets_and_inputs):
    out = []
    for net, x in nets_and_inputs():
        cache = net.forward_cached(x)
        out.extend((z > 0).ravel() for z in cache.pre[:-1])
    return np.concatenate(out)


def _worst_param_error(net, grads, loss, pattern, g, n_checks=12):
    """Worst relative error over random parameter coordinates.

    Coordinates whose +-h probe crosses a ReLU kink are skipped; the loss is
    not differentiable there.
    """
    worst, checked = 0.0, 0
    for _ in range(n_checks):
        k = g.integers(net.n_layers)
        which = g.integers(2)
        arr = (net.weights, net.biases)[which][k]
        idx = tuple(g.integers(s) for s in arr.shape)
        old = arr[idx]
        probes = []
        for delta in (1e-5, -1e-5):
            arr[idx] = old + delta
            probes.append(pattern())
        arr[idx] = old
        if not np.array_equal(*probes):
            continue

        def f(v, arr=arr, idx=idx):
            prev = arr[idx]
            arr[idx] = v[0]
            try:
                return loss()
            finally:
                arr[idx] = prev

        numeric = finite_diff_gradient(f, np.array([old]))[0]
        worst = max(worst, relative_error(np.array([grads[which][k][idx]]), np.array([numeric])))
        checked += 1
    return worst, checked


def _jitter(net, rng):
    for b in net.biases:
        b[:] = rng.normal(0.0, 0.1, size=b.shape)


def test_criterion_1_gradients():
    start = time.perf_counter()
    worst = {"MLP": 0.0, "autoencoder": 0.0, "generator": 0.0, "discriminator": 0.0}
    checked = dict.fromkeys(worst, 0)

    def note(name, err_count):
        worst[name] = max(worst[name], err_count[0])
        checked[name] += err_count[1]

    for draw in range(DRAWS):
        rng = RngStream(10_000 + draw)
        g = np.random.default_rng(draw)

        # MLP: parameters and input gradient of the BCE loss
        net = MlpNetwork.initialize([6, 8, 6, 1], rng.child(0))
        _jitter(net, rng.child(1))
        x = rng.child(2).normal(size=(5, 6))
        y = (rng.child(3).uniform(size=5) > 0.5).astype(float)
        gw, gb, _ = net.bce_gradients(x, y)
        note("MLP", _worst_param_error(net, (gw, gb), lambda: net.bce_loss(x, y),
                                       lambda: _relu_pattern(lambda: [(net, x)]), g))
        num = finite_diff_gradient(lambda v: net.bce_loss(v[None, :], y[:1]), x[0])
        note("MLP", (relative_error(mlp_input_gradient(net, x[0], y[0]), num), 1))

        # autoencoder: parameters and input gradient of the reconstruction loss
        ae = Autoencoder.initialize(6, rng.child(4), hidden=(8, 4))
        _jitter(ae.net, rng.child(5))
        xa = rng.child(6).normal(size=(4, 6))
        aw, ab, ain = ae.gradients(xa)
        note("autoencoder", _worst_param_error(ae.net, (aw, ab), lambda: ae.loss(xa),
                                               lambda: _relu_pattern(lambda: [(ae.net, xa)]), g))
        num = finite_diff_gradient(lambda v: ae.loss(v.reshape(xa.shape)), xa.ravel())
        note("autoencoder", (relative_error(ain.ravel(), num), 1))

        # generator (through the discriminator) and discriminator
        data = blobs(40, 5, immutable=(0,), seed=draw)
        ens = train_voting_ensemble(data, rng.child(7))
        gan = train_gan(data.malicious(), data.benign(), ens, GanConfig(epochs=0, probe_size=8), rng.child(8))
        _jitter(gan.generator, rng.child(9))
        _jitter(gan.discriminator, rng.child(10))
        src = data.malicious().features[:4]
        z = gan.sample_noise(4, rng.child(11))

        def gan_pattern():
            g_in = gan.generator_input(src[:, gan.mutable_idx], z)
            return _relu_pattern(lambda: [(gan.generator, g_in), (gan.discriminator, gan.generate_raw(src, z))])

        _, ggw, ggb = generator_loss_and_grads(gan, src, z)
        note("generator", _worst_param_error(gan.generator, (ggw, ggb),
                                             lambda: generator_loss_and_grads(gan, src, z)[0], gan_pattern, g))
        xd = np.vstack([data.benign().features[:3], gan.generate_raw(src, z)])
        yd = np.r_[np.zeros(3), np.ones(4)]
        wd = np.r_[np.ones(3), np.full(4, 2.0)]
        dw, db, din = gan.discriminator.bce_gradients(xd, yd, wd)
        note("discriminator", _worst_param_error(
            gan.discriminator, (dw, db), lambda: gan.discriminator.bce_loss(xd, yd, wd),
            lambda: _relu_pattern(lambda: [(gan.discriminator, xd)]), g))
        num = finite_diff_gradient(lambda v: gan.discriminator.bce_loss(v.reshape(xd.shape), yd, wd), xd.ravel())
        note("discriminator", (relative_error(din.ravel(), num), 1))

    elapsed = time.perf_counter() - start
    detail = ", ".join(f"{k} max rel err {v:.1e} ({checked[k]} coords)" for k, v in worst.items())
    _verdict(1, [*(v < GRAD_TOL for v in worst.values()),
                 *(c >= DRAWS * 5 for c in checked.values()), elapsed < 30],
             f"{DRAWS} draws each; {detail}; {elapsed:.1f}s (limit 30s)")


# ------------------------------------------------------------ criterion 2

def test_criterion_2_fgsm_contract():
    start = time.perf_counter()
    n_models, per_model, d = 5, 20, 8
    identity_ok = immut_ok = magnitude_ok = sign_ok = True
    sign_checked = 0
    for m in range(n_models):
        data = blobs(300, d, seed=m, immutable=(1, 4))
        mlp = train_classifier(ClassifierSpec("MLP", {"hidden": [16, 16], "epochs": 5}), data, RngStream(m))
        net, mask = mlp.net, data.schema.mutable_mask
        xs = np.random.default_rng(100 + m).normal(0.0, 2.0, size=(per_model, d))
        ys = np.random.default_rng(200 + m).integers(0, 2, size=per_model)
        for x, y in zip(xs, ys):
            zero = fgsm_generate(net, x, y, 0.0, mask)
            identity_ok &= zero.tobytes() == x.tobytes()
            for eps in (0.01, 0.1, 0.5):
                out = fgsm_generate(net, x, y, eps, mask)
                delta = out - x
                immut_ok &= out[~mask].tobytes() == x[~mask].tobytes()
                oracle = finite_diff_gradient(lambda v: net.bce_loss(v[None, :], [float(y)]), x)
                clear = mask & (np.abs(oracle) > 1e-7)
                # exact step: the perturbed value is x + eps * sign, bit for bit
                magnitude_ok &= np.array_equal(out[clear], x[clear] + eps * np.sign(oracle[clear]))
                magnitude_ok &= bool(np.all(np.isclose(np.abs(delta[mask]), eps, rtol=0, atol=1e-12)
                                            | (delta[mask] == 0)))
                sign_ok &= np.array_equal(np.sign(delta[clear]), np.sign(oracle[clear]))
                sign_checked += int(clear.sum())
    elapsed = time.perf_counter() - start
    n_inputs = n_models * per_model
    _verdict(2, [identity_ok, immut_ok, magnitude_ok, sign_ok, n_inputs >= 100, elapsed < 30],
             f"{n_models} trained MLPs x {per_model} inputs = {n_inputs}; eps=0 identity {identity_ok}, "
             f"immutables unchanged {immut_ok}, |step|=eps {magnitude_ok}, signs match oracle {sign_ok} "
             f"({sign_checked} coords); {elapsed:.1f}s (limit 30s)")


# ------------------------------------------------------------ criterion 3

def test_criterion_3_gan_invariants(nsl_small):
    start = time.perf_counter()
    train = nsl_small.train
    rng = RngStream(3)
    idx = np.sort(rng.child(0).choice(len(train), size=1500, replace=False))
    part = train.subset(idx)
    ens = train_voting_ensemble(part, rng.child(1))
    cfg = GanConfig(epochs=5, probe_size=128)

    def batch():
        gan = train_gan(part.malicious(), part.benign(), ens, cfg, rng.child(2), nsl_small.pipe)
        return generate_adversarial(gan, nsl_small.test.malicious(), rng.child(3))

    a, b = batch(), batch()
    mal = nsl_small.test.malicious().features
    imm = train.schema.immutable_indices
    immut_ok = a.features[:, imm].tobytes() == mal[:, imm].tobytes()
    repro_ok = a.features.tobytes() == b.features.tobytes()

    # point-mass task: benign traffic is a single point the generator must reach
    dists, row_means = [], []
    for seed in range(3):
        data, target = _point_mass_task(seed, n=128)
        vote = train_voting_ensemble(data, RngStream(seed).child(1))
        gan = train_gan(data.malicious(), data.benign(), vote,
                        GanConfig(epochs=500, batch_size=64, lr_discriminator=0.1), RngStream(seed).child(2))
        out = generate_adversarial(gan, data.malicious(), RngStream(seed).child(3)).features
        dists.append(float(np.linalg.norm(out.mean(axis=0) - target)))
        row_means.append(float(np.mean(np.linalg.norm(out - target, axis=1))))
    elapsed = time.perf_counter() - start
    _verdict(3, [immut_ok, repro_ok, max(dists) <= 0.1, elapsed < 120],
             f"immutables bit-exact {immut_ok} ({len(a)} rows x {imm.size} cols), seeded rerun bit-exact "
             f"{repro_ok}; point mass at epoch 500: centroid L2 {', '.join(f'{v:.3f}' for v in dists)} "
             f"(limit 0.1), mean per-row L2 {', '.join(f'{v:.3f}' for v in row_means)}; "
             f"{elapsed:.1f}s (limit 120s)")


# ------------------------------------------------------------ criterion 4

def test_criterion_4_threshold_calibration(nsl_small, tmp_path):
    start = time.perf_counter()
    cfg = RunConfig()
    fractions = []
    fresh_path, _ = write_dataset("nsl_kdd", tmp_path / "fresh", 6000, 10, seed=99)
    fresh = transform(nsl_small.pipe, load_dataset(fresh_path, nsl_small.pipe.schema)).benign()
    for seed in range(3):
        train, _ = subsample(cfg, nsl_small, seed)
        ae = fit_gate(cfg, train, RngStream(seed).child(3).child(0))
        errs = reconstruction_error(ae, fresh.features)
        fractions.append(100.0 * float(np.mean(errs > ae.threshold)))
    elapsed = time.perf_counter() - start
    _verdict(4, [len(fresh) >= 500, *(abs(f - 5.0) <= 3.0 for f in fractions), elapsed < 60],
             f"fresh benign n={len(fresh)}; exceedance {', '.join(f'{f:.2f}%' for f in fractions)} "
             f"over 3 seeds (target 5 +- 3); {elapsed:.1f}s (limit 60s)")


# ------------------------------------------------ shared desk-scale runs

def _desk_run(name, root):
    cfg = RunConfig({
        "dataset": {"name": name},
        "seeds": [0, 1, 2],
        "subsample": {"train": 5000, "test": 1000},
        "output": {"dir": str(root)},
    })
    superset = {"batches": 0, "violations": 0, "rows": 0}

    def inspect(seed, test, attack, defense):
        batches = list(condition_sets(test, attack.test_batches).values())
        batches += [(b.features, b.labels) for b in attack.sweep.values()]
        for x, _ in batches:
            for variant in ABLATION_VARIANTS:
                if not variant.endswith("AE"):
                    continue
                det = defense.detector(variant)
                first = det.stacking.predict(x)
                full = det.predict(x)
                superset["batches"] += 1
                superset["rows"] += x.shape[0]
                superset["violations"] += int(np.sum((first == 1) & (full == 0)))

    start = time.perf_counter()
    exp, abl = run_all(cfg, on_seed=inspect)
    return {"experiment": exp, "ablation": abl, "elapsed": time.perf_counter() - start, "superset": superset}


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    return {name: _desk_run(name, root) for name in ("nsl_kdd", "unsw_nb15")}


@pytest.mark.slow
def test_criterion_5_superset(desk_runs):
    checks, parts = [], []
    for name, run in desk_runs.items():
        s = run["superset"]
        abl = run["ablation"]
        dr_ok = all(
            abl.per_seed(with_ae, cond, "detection_rate")[i] >= abl.per_seed(without, cond, "detection_rate")[i]
            for with_ae, without in (("SC+AE", "SC"), ("SC+AT+AE", "SC+AT"))
            for cond in abl.conditions
            for i in range(len(abl.metadata["seeds"]))
        )
        checks += [s["violations"] == 0, s["batches"] > 0, dr_ok]
        parts.append(f"{name}: {s['batches']} batches / {s['rows']} rows, {s['violations']} dropped rows, "
                     f"gated DR >= stacking DR on every seed/condition {dr_ok}")
    _verdict(5, checks, "; ".join(parts))


@pytest.mark.slow
def test_criterion_6_ablation_trend(desk_runs):
    checks, parts = [], []
    for name, run in desk_runs.items():
        abl = run["ablation"]
        dr = {v: abl.mean(v, "all", "detection_rate") for v in ABLATION_VARIANTS}
        gap = dr["SC+AT"] - dr["SC"]
        checks += [gap >= 5.0, dr["SC+AT+AE"] >= dr["SC+AT"] - 0.5, run["elapsed"] < 600]
        parts.append(f"{name}: DR on all SC {dr['SC']:.2f}, SC+AE {dr['SC+AE']:.2f}, SC+AT {dr['SC+AT']:.2f}, "
                     f"SC+AT+AE {dr['SC+AT+AE']:.2f}; SC+AT - SC = {gap:+.2f} (need >= 5); "
                     f"{run['elapsed']:.0f}s (limit 600s)")
    _verdict(6, checks, "; ".join(parts))


@pytest.mark.slow
def test_criterion_7_attack_effectiveness(desk_runs):
    exp = desk_runs["nsl_kdd"]["experiment"]
    models = [m for m in BASELINES if m in exp.models]
    clean = np.array([v for m in models for v in exp.per_seed(m, "unmodified", "f1")])
    attacked = np.array([v for m in models for v in exp.per_seed(m, "GAN", "f1")])
    drop = float(clean.mean() - attacked.mean())
    p = significance_test(clean, attacked, RngStream(7))
    per_model = ", ".join(
        f"{m} {exp.mean(m, 'unmodified', 'f1'):.1f}->{exp.mean(m, 'GAN', 'f1'):.1f}" for m in models)
    _verdict(7, [drop >= 3.0, p < 0.05],
             f"nsl_kdd mean baseline F1 drop {drop:.2f} points (need >= 3), permutation p={p:.2g} over "
             f"{clean.size} (model, seed) pairs (need < 0.05); {per_model}")


@pytest.mark.slow
def test_criterion_8_fgsm_monotone(desk_runs):
    checks, parts = [], []
    for name, run in desk_runs.items():
        sw = run["experiment"].fgsm_sweep
        for seed, acc in zip(run["experiment"].metadata["seeds"], sw["per_seed"]):
            ok = all(b <= a + 1.0 for a, b in zip(acc, acc[1:]))
            checks.append(ok)
            parts.append(f"{name} seed {seed}: " + " ".join(f"{v:.1f}" for v in acc))
    _verdict(8, [*checks, len(checks) == 6],
             f"target-MLP accuracy at eps {sw['eps']} (non-increasing within 1 point): " + "; ".join(parts))


# ------------------------------------------------------------ criterion 9

@pytest.mark.slow
def test_criterion_9_determinism(tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["run", "--out", str(out), "--subsample", "2000"]) == 0
        (root,) = [p for p in out.iterdir() if p.name != "data"]
        report = root / "report"
        outs.append({p.relative_to(report).as_posix(): p.read_bytes()
                     for p in sorted(report.rglob("*")) if p.is_file()})
    same = outs[0] == outs[1]
    tables = sorted(k for k in outs[0] if k.startswith("tables/"))
    _verdict(9, [same, len(tables) >= 10],
             f"two `advnids run` invocations (default config, --subsample 2000): {len(outs[0])} report files, "
             f"byte-identical {same}")


# ----------------------------------------------------------- criterion 10

def _brute_force(preds, labels):
    tp = fp = tn = fn = 0
    for p, y in zip(preds, labels):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1:
            fp += 1
        elif y == 0:
            tn += 1
        else:
            fn += 1

    def pct(a, b):
        return 100.0 * a / b if b else 0.0

    def f1(p, r):
        return 2.0 * p * r / (p + r) if p + r else 0.0

    mp, mr = pct(tp, tp + fp), pct(tp, tp + fn)
    bp, br = pct(tn, tn + fn), pct(tn, tn + fp)
    return {
        "confusion": {"tp": tp, "fp": fp, "tn": tn, "fn": fn},
        "precision": (bp + mp) / 2.0,
        "recall": (br + mr) / 2.0,
        "f1": (f1(bp, br) + f1(mp, mr)) / 2.0,
        "accuracy": pct(tp + tn, tp + fp + tn + fn),
        "detection_rate": mr,
    }


def test_criterion_10_metric_oracle():
    g = np.random.default_rng(10)
    mismatches = 0
    for _ in range(1000):
        n = int(g.integers(1, 60))
        preds, labels = g.integers(0, 2, n), g.integers(0, 2, n)
        got = compute_metrics(preds, labels)
        want = _brute_force(preds.tolist(), labels.tolist())
        same = got.confusion == want["confusion"] and all(getattr(got, k) == want[k] for k in want
                                                          if k != "confusion")
        mismatches += not same
    _verdict(10, [mismatches == 0], f"1000 random vectors (length 1-59), exact mismatches: {mismatches}")
