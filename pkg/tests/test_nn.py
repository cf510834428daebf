"""Dataset handling, the small CNN, noise injection, training, and sweeps."""

import numpy as np
import pytest

from winophot.nn import (Dataset, NoiseSpec, SmallCNN, TrainingDivergedError,
                         _subseed, bundled_digits, calibrate, evaluate,
                         forward, load_dataset, loss_and_grads, noise_sweep,
                         save_dataset, split_dataset, train)
from winophot.photonics import DeviceParams, Impairments, derived_rng


def separable_dataset(n_train=200, n_test=50, seed=0):
    """Two trivially separable classes: bright top half vs bright bottom half."""
    rng = np.random.default_rng(seed)
    n = n_train + n_test
    labels = rng.integers(0, 2, n)
    images = rng.uniform(0.0, 0.15, (n, 1, 4, 4))
    for i in range(n):
        row = 0 if labels[i] == 0 else 2
        images[i, 0, row:row + 2, :] += 0.8
    images = np.clip(images, 0.0, 1.0)
    return Dataset(train_images=images[:n_train], train_labels=labels[:n_train],
                   test_images=images[n_train:], test_labels=labels[n_train:],
                   n_classes=2)


def toy_model(seed=1):
    return SmallCNN.init(seed=seed, image_shape=(1, 4, 4), conv_filters=(4, 8),
                         n_classes=2)


# ---------------------------------------------------------------------------
# datasets


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.uniform(0, 1, (6, 1, 4, 4))
    labels = np.array([0, 1, 2, 0, 1, 2])
    path = tmp_path / "toy.csv"
    save_dataset(path, images, labels, 3)
    loaded, lab, k = load_dataset(path)
    assert np.array_equal(loaded, images)  # repr round-trips exactly
    assert np.array_equal(lab, labels)
    assert k == 3


def test_load_dataset_rejects_malformed(tmp_path):
    hdr = tmp_path / "bad_header.csv"
    hdr.write_text("not,a,header\n")
    with pytest.raises(ValueError, match="malformed dataset header"):
        load_dataset(hdr)
    short = tmp_path / "short.csv"
    short.write_text("2,1,2,2,2\n0,0.0,0.0,0.0,0.0\n")
    with pytest.raises(ValueError, match="expected 2 rows"):
        load_dataset(short)
    fields = tmp_path / "fields.csv"
    fields.write_text("1,1,2,2,2\n0,0.0,0.0,0.0\n")
    with pytest.raises(ValueError, match="fields"):
        load_dataset(fields)
    labels = tmp_path / "labels.csv"
    labels.write_text("1,1,2,2,2\n5,0.0,0.0,0.0,0.0\n")
    with pytest.raises(ValueError, match="labels outside"):
        load_dataset(labels)


def test_split_dataset_deterministic_and_disjoint():
    # fingerprint every sample through its first pixel
    images = np.zeros((30, 1, 4, 4))
    images[:, 0, 0, 0] = np.arange(30) / 30.0
    labels = np.arange(30) % 3
    a = split_dataset(images, labels, 3, test_count=10, seed=5)
    b = split_dataset(images, labels, 3, test_count=10, seed=5)
    assert np.array_equal(a.train_images, b.train_images)
    assert np.array_equal(a.test_images, b.test_images)
    train_ids = set((a.train_images[:, 0, 0, 0] * 30).round().astype(int))
    test_ids = set((a.test_images[:, 0, 0, 0] * 30).round().astype(int))
    assert len(train_ids) == 20 and len(test_ids) == 10
    assert train_ids.isdisjoint(test_ids)
    c = split_dataset(images, labels, 3, test_count=10, seed=6)
    assert not np.array_equal(a.test_images, c.test_images)
    cap = split_dataset(images, labels, 3, test_count=10, seed=5,
                        max_train=7, max_test=4)
    assert len(cap.train_images) == 7 and len(cap.test_images) == 4
    with pytest.raises(ValueError):
        split_dataset(images, labels, 3, test_count=30)


def test_bundled_digits_shapes():
    data = bundled_digits()
    assert data.train_images.shape == (1297, 1, 8, 8)
    assert data.test_images.shape == (500, 1, 8, 8)
    assert data.n_classes == 10
    assert data.image_shape == (1, 8, 8)
    assert data.train_images.min() >= 0.0 and data.train_images.max() <= 1.0
    assert set(np.unique(data.train_labels)) == set(range(10))


def test_dataset_validation():
    imgs = np.zeros((2, 1, 4, 4))
    labels = np.array([0, 1])
    with pytest.raises(ValueError, match=r"must be \(n, c, h, w\)"):
        Dataset(np.zeros((2, 4, 4)), labels, imgs, labels, 2)
    with pytest.raises(ValueError, match="length mismatch"):
        Dataset(imgs, np.array([0]), imgs, labels, 2)
    with pytest.raises(ValueError, match="out of range"):
        Dataset(imgs, np.array([0, 5]), imgs, labels, 2)


# ---------------------------------------------------------------------------
# noise specification and model plumbing


def test_noise_spec_validation_and_gating():
    with pytest.raises(ValueError, match="non-negative"):
        NoiseSpec(output_noise_frac=-0.1)
    with pytest.raises(ValueError, match="enabled_in"):
        NoiseSpec(enabled_in="sometimes")
    with pytest.raises(ValueError, match="weight_mode"):
        NoiseSpec(weight_mode="sticky")
    both = NoiseSpec(enabled_in="both")
    assert both.active("training") and both.active("inference")
    tr = NoiseSpec(enabled_in="training")
    assert tr.active("training") and not tr.active("inference")
    off = NoiseSpec(enabled_in="none")
    assert not off.active("training") and not off.active("inference")
    with pytest.raises(ValueError, match="phase"):
        off.active("deployment")


def test_model_init_copy_params():
    with pytest.raises(ValueError, match="divisible by 4"):
        SmallCNN.init(image_shape=(1, 6, 6))
    model = SmallCNN.init(seed=0, conv_filters=(4, 8), n_classes=7)
    assert model.n_classes == 7
    assert model.dense_w.shape == (7, 8 * 2 * 2)
    assert model.params()["conv1_b"] is model.conv1_b  # live references
    dup = model.copy()
    dup.conv1_w[0, 0, 0, 0] += 1.0
    assert model.conv1_w[0, 0, 0, 0] != dup.conv1_w[0, 0, 0, 0]


def test_calibrate_freezes_swings():
    model = SmallCNN.init(seed=0)
    imgs = np.random.default_rng(2).uniform(0, 1, (16, 1, 8, 8))
    swings = calibrate(model, imgs)
    assert model.swings is swings
    assert set(swings) == {"act1", "act2", "logits"}
    assert all(v > 0 for v in swings.values())
    with pytest.raises(ValueError, match="calibration needs"):
        calibrate(model, np.zeros((1, 8, 8)))  # missing batch axis


# ---------------------------------------------------------------------------
# forward passes


def test_inactive_noise_is_exactly_clean():
    model = SmallCNN.init(seed=0)
    x = np.random.default_rng(7).uniform(0, 1, (1, 8, 8))
    clean = forward(model, x)
    assert np.array_equal(forward(model, x, noise=NoiseSpec()), clean)
    gated_off = NoiseSpec(output_noise_frac=0.3, weight_noise_frac=0.1,
                          enabled_in="none")
    assert np.array_equal(forward(model, x, noise=gated_off), clean)
    wrong_phase = NoiseSpec(output_noise_frac=0.3, enabled_in="training")
    assert np.array_equal(forward(model, x, noise=wrong_phase,
                                  phase="inference"), clean)
    with pytest.raises(ValueError, match="single"):
        forward(model, np.zeros((2, 1, 8, 8)))


def test_noisy_forward_is_seed_deterministic():
    model = SmallCNN.init(seed=0)
    calibrate(model, np.random.default_rng(0).uniform(0, 1, (8, 1, 8, 8)))
    x = np.random.default_rng(1).uniform(0, 1, (1, 8, 8))
    spec = NoiseSpec(output_noise_frac=1e-2, enabled_in="inference", seed=5)
    a = forward(model, x, noise=spec)
    assert np.array_equal(a, forward(model, x, noise=spec))
    other = NoiseSpec(output_noise_frac=1e-2, enabled_in="inference", seed=6)
    assert not np.array_equal(a, forward(model, x, noise=other))
    assert not np.array_equal(a, forward(model, x))


def test_output_noise_requires_calibration():
    model = SmallCNN.init(seed=0)
    x = np.zeros((1, 8, 8))
    spec = NoiseSpec(output_noise_frac=1e-3, enabled_in="inference")
    with pytest.raises(ValueError, match="calibrated activation swings"):
        forward(model, x, noise=spec)
    with pytest.raises(ValueError, match="calibrated activation swings"):
        forward(model, x, noise=spec, dev=DeviceParams())


def test_output_noise_sigma_matches_calibrated_swing():
    # zero image + zero biases: the clean network output is exactly 0, and
    # with the act1/act2 swings pinned to 0 the logits are pure injected noise
    model = SmallCNN.init(seed=0, conv_filters=(2, 2))
    model.swings = {"act1": 0.0, "act2": 0.0, "logits": 1.0}
    spec = NoiseSpec(output_noise_frac=0.25, enabled_in="inference", seed=3)
    x = np.zeros((1, 8, 8))
    rng = derived_rng(99)
    draws = np.concatenate([forward(model, x, noise=spec, rng=rng)
                            for _ in range(1000)])
    assert draws.shape == (10_000,)
    assert abs(draws.mean()) < 5 * 0.25 / np.sqrt(draws.size)
    assert abs(draws.std() - 0.25) < 0.05 * 0.25


def test_analog_forward_matches_digital_without_impairments():
    data = bundled_digits(test_count=10, max_train=5, max_test=5)
    model = SmallCNN.init(seed=4)
    x = data.test_images[1]
    digital = forward(model, x)
    analog = forward(model, x, dev=DeviceParams(), impairments=Impairments.none())
    assert np.max(np.abs(analog - digital)) < 1e-9
    full = forward(model, x, dev=DeviceParams(), seed=3)
    assert np.all(np.isfinite(full))
    assert not np.array_equal(full, digital)


# ---------------------------------------------------------------------------
# gradients


def test_analytic_gradients_match_central_differences():
    rng = np.random.default_rng(5)
    model = SmallCNN.init(seed=2, image_shape=(1, 4, 4), conv_filters=(2, 3),
                          n_classes=3)
    xb = rng.uniform(0, 1, (3, 1, 4, 4))
    yb = np.array([0, 2, 1])
    _, analytic = loss_and_grads(model, xb, yb)
    eps = 1e-6
    worst = 0.0
    for name, w in model.params().items():
        numeric = np.zeros_like(w)
        flat, nflat = w.ravel(), numeric.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = loss_and_grads(model, xb, yb)
            flat[i] = orig - eps
            lm, _ = loss_and_grads(model, xb, yb)
            flat[i] = orig
            nflat[i] = (lp - lm) / (2 * eps)
        a = analytic[name]
        assert np.linalg.norm(a) > 0  # layer actually receives gradient
        rel = (np.linalg.norm(a - numeric)
               / (np.linalg.norm(a) + np.linalg.norm(numeric)))
        worst = max(worst, rel)
    assert worst < 1e-5


def test_noisy_loss_and_grads_deterministic_given_rng():
    data = separable_dataset()
    model = SmallCNN.init(seed=0, image_shape=(1, 4, 4), conv_filters=(2, 3),
                          n_classes=2)
    calibrate(model, data.train_images[:8])
    spec = NoiseSpec(output_noise_frac=1e-2, enabled_in="training", seed=9)
    xb, yb = data.train_images[:4], data.train_labels[:4]
    l1, g1 = loss_and_grads(model, xb, yb, noise=spec, rng=derived_rng(1))
    l2, g2 = loss_and_grads(model, xb, yb, noise=spec, rng=derived_rng(1))
    assert l1 == l2
    for k in g1:
        assert np.array_equal(g1[k], g2[k])
    l3, _ = loss_and_grads(model, xb, yb)
    assert l1 != l3


# ---------------------------------------------------------------------------
# training


def test_training_learns_separable_task():
    data = separable_dataset()
    model = toy_model()
    trained, curve = train(model, data, epochs=6, lr=0.1, batch_size=8, seed=0)
    assert len(curve) == 6
    assert curve[-1] < curve[0]
    assert evaluate(trained, data).mean_accuracy >= 0.95
    assert np.array_equal(model.conv1_w, toy_model().conv1_w)  # input untouched


def test_training_is_deterministic():
    data = separable_dataset()
    a, ca = train(toy_model(), data, epochs=2, lr=0.1, batch_size=8, seed=3)
    b, cb = train(toy_model(), data, epochs=2, lr=0.1, batch_size=8, seed=3)
    assert ca == cb
    for name in a.params():
        assert np.array_equal(a.params()[name], b.params()[name])


def test_training_with_output_noise_still_learns():
    data = separable_dataset()
    spec = NoiseSpec(output_noise_frac=1e-3, enabled_in="training", seed=2)
    trained, _ = train(toy_model(), data, epochs=6, lr=0.1, batch_size=8,
                       noise=spec, seed=0)
    assert evaluate(trained, data).mean_accuracy >= 0.9


def test_training_diverges_loudly_at_huge_lr():
    data = separable_dataset()
    with np.errstate(all="ignore"), pytest.raises(TrainingDivergedError) as err:
        train(toy_model(), data, epochs=2, lr=1e150, batch_size=8, seed=0)
    assert err.value.last_stable_epoch == -1
    with pytest.raises(ValueError, match="positive"):
        train(toy_model(), data, epochs=0)


def test_weight_noise_training_refused_by_default():
    data = separable_dataset()
    spec = NoiseSpec(weight_noise_frac=1e-3, enabled_in="training")
    with pytest.raises(ValueError, match="allow_weight_noise=True"):
        train(toy_model(), data, epochs=1, noise=spec)
    # inference-only weight noise does not trip the training guard
    ok = NoiseSpec(weight_noise_frac=1e-3, enabled_in="inference")
    train(toy_model(), data, epochs=1, lr=0.1, batch_size=16, noise=ok)


def test_weight_noise_write_scaling_controls_damage():
    data = bundled_digits(test_count=200, max_train=300, max_test=200)

    def fresh():
        return SmallCNN.init(seed=1, image_shape=data.image_shape, n_classes=10)

    spec = NoiseSpec(weight_noise_frac=1e-3, enabled_in="training", seed=4)
    kwargs = dict(epochs=6, lr=0.1, batch_size=16, seed=0,
                  allow_weight_noise=True)
    # modeling only the desk-scale writes: harmless at 1e-3 per write
    actual, _ = train(fresh(), data, noise=spec, modeled_write_events=0,
                      **kwargs)
    assert evaluate(actual, data).mean_accuracy >= 0.6
    # modeling a production-length write history: training collapses to chance
    scaled, curve = train(fresh(), data, noise=spec,
                          modeled_write_events=500_000, **kwargs)
    assert evaluate(scaled, data).mean_accuracy <= 0.3
    assert curve[-1] > 2.0  # stuck at chance-level cross-entropy (ln 10)


# ---------------------------------------------------------------------------
# evaluation


def test_evaluate_clean_repeats_are_identical():
    data = bundled_digits(test_count=100, max_train=50, max_test=100)
    model = SmallCNN.init(seed=3, image_shape=data.image_shape, n_classes=10)
    res = evaluate(model, data, noise=None, repeats=3, seed=0)
    assert res.std_accuracy == 0.0
    assert res.per_repeat == (res.mean_accuracy,) * 3


def test_untrained_accuracy_near_chance():
    data = bundled_digits()
    model = SmallCNN.init(seed=0, image_shape=data.image_shape, n_classes=10)
    res = evaluate(model, data)
    assert 0.02 <= res.mean_accuracy <= 0.25


def test_evaluate_weight_noise_varies_and_preserves_model():
    data = bundled_digits(test_count=200, max_train=20, max_test=200)
    model = SmallCNN.init(seed=1, image_shape=data.image_shape, n_classes=10)
    saved = model.copy()
    spec = NoiseSpec(weight_noise_frac=0.5, enabled_in="inference", seed=11)
    res = evaluate(model, data, noise=spec, repeats=4, seed=2)
    assert res.std_accuracy > 0.0
    for name, w in model.params().items():
        assert np.array_equal(w, saved.params()[name])


def test_evaluate_auto_calibrates_for_output_noise():
    data = separable_dataset()
    model = toy_model(seed=0)
    assert model.swings is None
    spec = NoiseSpec(output_noise_frac=1e-3, enabled_in="inference")
    evaluate(model, data, noise=spec, repeats=2)
    assert set(model.swings) == {"act1", "act2", "logits"}


def test_evaluate_validation_errors():
    data = separable_dataset()
    model = toy_model()
    with pytest.raises(ValueError, match="repeats"):
        evaluate(model, data, repeats=0)
    empty = Dataset(train_images=data.train_images,
                    train_labels=data.train_labels,
                    test_images=np.zeros((0, 1, 4, 4)),
                    test_labels=np.zeros(0, dtype=np.int64), n_classes=2)
    with pytest.raises(ValueError, match="no test split"):
        evaluate(model, empty)


# ---------------------------------------------------------------------------
# sweeps


def test_noise_sweep_grid_validation():
    data = separable_dataset()
    factory = lambda s: toy_model(seed=s)
    with pytest.raises(ValueError, match="ascending"):
        noise_sweep(factory, data, train_fracs=(0.0,),
                    infer_fracs=(1e-3, 1e-4))
    with pytest.raises(ValueError, match="within"):
        noise_sweep(factory, data, train_fracs=(0.0,), infer_fracs=(0.5,))
    with pytest.raises(ValueError, match="within"):
        noise_sweep(factory, data, train_fracs=(0.0,), infer_fracs=())
    with pytest.raises(ValueError, match="non-negative"):
        noise_sweep(factory, data, train_fracs=(-1e-3,), infer_fracs=(1e-3,))


def test_single_cell_sweep_equals_one_evaluate():
    data = bundled_digits(test_count=40, max_train=40, max_test=30)

    def factory(s):
        return SmallCNN.init(seed=s, image_shape=data.image_shape,
                             conv_filters=(4, 8), n_classes=data.n_classes)

    kwargs = dict(epochs=1, lr=0.05, batch_size=16)
    res = noise_sweep(factory, data, train_fracs=(0.0,), infer_fracs=(1e-3,),
                      repeats=2, seed=3, train_kwargs=kwargs)
    trained, _ = train(factory(3), data, seed=3, **kwargs)
    spec = NoiseSpec(output_noise_frac=1e-3, enabled_in="inference",
                     seed=_subseed(3, "infer", 0, 0))
    ev = evaluate(trained, data, noise=spec, repeats=2,
                  seed=_subseed(3, "eval", 0, 0))
    assert tuple(res.accuracy[0, 0]) == ev.per_repeat
    assert res.clean_accuracy[0] == evaluate(trained, data).mean_accuracy


def test_noise_sweep_runs_deterministically():
    data = bundled_digits(test_count=40, max_train=40, max_test=30)
    seeds_seen = []

    def factory(s):
        seeds_seen.append(s)
        return SmallCNN.init(seed=s, image_shape=data.image_shape,
                             conv_filters=(4, 8), n_classes=data.n_classes)

    kwargs = dict(epochs=1, lr=0.05, batch_size=16)
    res = noise_sweep(factory, data, train_fracs=(0.0, 1e-3),
                      infer_fracs=(1e-3,), repeats=2, seed=7,
                      train_kwargs=kwargs)
    assert seeds_seen == [7, 7]  # every level starts from the same init
    assert res.accuracy.shape == (2, 1, 2)
    assert res.mean_accuracy().shape == (2, 1)
    rows = list(res.rows())
    assert len(rows) == 2 * (1 + 1 * 2)
    clean_rows = [r for r in rows if r["infer_noise"] == 0.0]
    assert [r["accuracy"] for r in clean_rows] == list(res.clean_accuracy)
    again = noise_sweep(factory, data, train_fracs=(0.0, 1e-3),
                        infer_fracs=(1e-3,), repeats=2, seed=7,
                        train_kwargs=kwargs)
    assert np.array_equal(res.accuracy, again.accuracy)
    assert np.array_equal(res.clean_accuracy, again.clean_accuracy)
