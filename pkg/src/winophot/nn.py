"""Noise-aware training and evaluation of a small Winograd-convolution CNN.

The network is deliberately desk-scale: two 3x3 convolution layers (run
through the tiled Winograd engine), ReLU, 2x2 mean pooling after each, and a
dense classifier.  Gaussian noise models the analog accumulation error of the
photonic datapath:

  * output noise: added after each layer's activation (and to the classifier
    logits), with sigma = output_noise_frac * that layer's maximum absolute
    activation measured on a clean calibration batch (frozen per calibration);
  * weight noise: each weight tensor perturbed once per forward pass with
    sigma = weight_noise_frac * max|w| of its layer.

Noise draws are treated as constants during backpropagation: gradients flow
through the noiseless functional path.  Everything is seeded and
deterministic; a forward pass is one executor invocation (a single image or
one batch).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources as importlib_resources

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .photonics import DeviceParams, Impairments, analog_ewmm, derived_rng
from .winograd import (WinogradPlan, _transform_filter_bank, _winograd_batch,
                       inverse_transform, make_plan, transform_input)

__all__ = [
    "Dataset",
    "NoiseSpec",
    "SmallCNN",
    "EvalResult",
    "SweepResult",
    "TrainingDivergedError",
    "load_dataset",
    "save_dataset",
    "split_dataset",
    "bundled_digits",
    "calibrate",
    "forward",
    "loss_and_grads",
    "train",
    "evaluate",
    "noise_sweep",
]

_PHASES = ("training", "inference")
_ENABLED = ("training", "inference", "both", "none")
_WEIGHT_MODES = ("fixed", "redraw")


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, last_stable_epoch: int):
        self.last_stable_epoch = last_stable_epoch
        super().__init__(f"training diverged (last stable epoch: {last_stable_epoch})")


def _subseed(*parts) -> int:
    """Stable integer seed derived from a tuple of ints/strings."""
    ints = []
    for p in parts:
        if isinstance(p, str):
            ints.append(int.from_bytes(p.encode("utf-8"), "little") % (1 << 63))
        else:
            ints.append(int(p) & ((1 << 63) - 1))
    return int(np.random.SeedSequence(ints).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Dataset:
    """Image classification data with a recorded, disjoint train/test split.

    Images are (count, channels, height, width) floats in [0, 1]; labels are
    integer class ids in [0, n_classes).
    """

    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        for imgs, labels, split in ((self.train_images, self.train_labels, "train"),
                                    (self.test_images, self.test_labels, "test")):
            if imgs.ndim != 4:
                raise ValueError(f"{split} images must be (n, c, h, w)")
            if len(imgs) != len(labels):
                raise ValueError(f"{split} images/labels length mismatch")
            if len(labels) and (labels.min() < 0 or labels.max() >= self.n_classes):
                raise ValueError(f"{split} labels out of range [0, {self.n_classes})")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        base = self.train_images if len(self.train_images) else self.test_images
        return tuple(base.shape[1:])


def load_dataset(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Read an image-set CSV; returns (images, labels, n_classes).

    Format: line 1 is `count,channels,height,width,n_classes`; each following
    line is `label,p0,p1,...` with pixels row-major in [0, 1].
    """
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            count, c, h, w, k = (int(v) for v in next(reader))
        except (StopIteration, ValueError) as exc:
            raise ValueError(f"{path}: malformed dataset header") from exc
        labels = np.empty(count, dtype=np.int64)
        images = np.empty((count, c, h, w), dtype=np.float64)
        for i in range(count):
            try:
                row = next(reader)
            except StopIteration:
                raise ValueError(f"{path}: expected {count} rows, got {i}") from None
            if len(row) != 1 + c * h * w:
                raise ValueError(f"{path}: row {i} has {len(row)} fields, "
                                 f"expected {1 + c * h * w}")
            labels[i] = int(row[0])
            images[i] = np.asarray(row[1:], dtype=np.float64).reshape(c, h, w)
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"{path}: labels outside [0, {k})")
    return images, labels, k


def save_dataset(path, images: np.ndarray, labels: np.ndarray, n_classes: int) -> None:
    """Write an image-set CSV in the load_dataset format."""
    count, c, h, w = images.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([count, c, h, w, n_classes])
        for i in range(count):
            # repr of builtin floats round-trips exactly and stays compact
            writer.writerow([int(labels[i])] +
                            [repr(float(v)) for v in images[i].ravel()])


def split_dataset(images: np.ndarray, labels: np.ndarray, n_classes: int,
                  test_count: int = 500, seed: int = 0,
                  max_train: int | None = None,
                  max_test: int | None = None) -> Dataset:
    """Shuffle deterministically and split off a disjoint test set."""
    if not 0 < test_count < len(images):
        raise ValueError("test_count must leave at least one training sample")
    perm = np.random.default_rng(seed).permutation(len(images))
    test_idx, train_idx = perm[:test_count], perm[test_count:]
    if max_train is not None:
        train_idx = train_idx[:max_train]
    if max_test is not None:
        test_idx = test_idx[:max_test]
    return Dataset(train_images=images[train_idx], train_labels=labels[train_idx],
                   test_images=images[test_idx], test_labels=labels[test_idx],
                   n_classes=n_classes)


def bundled_digits(test_count: int = 500, seed: int = 0,
                   max_train: int | None = None,
                   max_test: int | None = None) -> Dataset:
    """The bundled 8x8 grayscale handwritten-digit set (10 classes)."""
    path = importlib_resources.files("winophot.data") / "digits_8x8.csv"
    with importlib_resources.as_file(path) as p:
        images, labels, k = load_dataset(p)
    return split_dataset(images, labels, k, test_count=test_count, seed=seed,
                         max_train=max_train, max_test=max_test)


# ---------------------------------------------------------------------------
# model and noise


@dataclass(frozen=True)
class NoiseSpec:
    """Noise configuration for forward passes.

    enabled_in gates when injection happens ('training', 'inference', 'both',
    'none').  weight_mode chooses the inference-side treatment of weight
    noise: 'fixed' draws one perturbation per evaluation pass, 'redraw' draws
    per forward call.
    """

    output_noise_frac: float = 0.0
    weight_noise_frac: float = 0.0
    seed: int = 0
    enabled_in: str = "none"
    weight_mode: str = "fixed"

    def __post_init__(self):
        if self.output_noise_frac < 0 or self.weight_noise_frac < 0:
            raise ValueError("noise fractions must be non-negative")
        if self.enabled_in not in _ENABLED:
            raise ValueError(f"enabled_in must be one of {_ENABLED}")
        if self.weight_mode not in _WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {_WEIGHT_MODES}")

    def active(self, phase: str) -> bool:
        if phase not in _PHASES:
            raise ValueError(f"phase must be one of {_PHASES}")
        return self.enabled_in == "both" or self.enabled_in == phase


@dataclass
class SmallCNN:
    """Two Winograd conv layers (same padding) + mean pooling + dense classifier.

    swings holds the frozen per-injection-point clean activation maxima
    ('act1', 'act2', 'logits') set by calibrate(); noisy forwards require it.
    """

    conv1_w: np.ndarray  # (c1, c_in, 3, 3)
    conv1_b: np.ndarray
    conv2_w: np.ndarray  # (c2, c1, 3, 3)
    conv2_b: np.ndarray
    dense_w: np.ndarray  # (K, c2 * h/4 * w/4)
    dense_b: np.ndarray
    plan: WinogradPlan
    swings: dict[str, float] | None = None

    @classmethod
    def init(cls, seed: int = 0, image_shape: tuple[int, int, int] = (1, 8, 8),
             conv_filters: tuple[int, int] = (8, 16), n_classes: int = 10,
             plan: WinogradPlan | None = None) -> "SmallCNN":
        """He-initialized model for (c, h, w) inputs; h and w must be /4."""
        c_in, h, w = image_shape
        if h % 4 or w % 4:
            raise ValueError("image height/width must be divisible by 4 "
                             "(two 2x2 pooling stages)")
        c1, c2 = conv_filters
        feat = c2 * (h // 4) * (w // 4)
        rng = np.random.default_rng(seed)
        return cls(
            conv1_w=rng.normal(0, math.sqrt(2.0 / (c_in * 9)), (c1, c_in, 3, 3)),
            conv1_b=np.zeros(c1),
            conv2_w=rng.normal(0, math.sqrt(2.0 / (c1 * 9)), (c2, c1, 3, 3)),
            conv2_b=np.zeros(c2),
            dense_w=rng.normal(0, math.sqrt(2.0 / feat), (n_classes, feat)),
            dense_b=np.zeros(n_classes),
            plan=plan if plan is not None else make_plan(4, 3),
        )

    @property
    def n_classes(self) -> int:
        return len(self.dense_b)

    def params(self) -> dict[str, np.ndarray]:
        return {"conv1_w": self.conv1_w, "conv1_b": self.conv1_b,
                "conv2_w": self.conv2_w, "conv2_b": self.conv2_b,
                "dense_w": self.dense_w, "dense_b": self.dense_b}

    def copy(self) -> "SmallCNN":
        return SmallCNN(conv1_w=self.conv1_w.copy(), conv1_b=self.conv1_b.copy(),
                        conv2_w=self.conv2_w.copy(), conv2_b=self.conv2_b.copy(),
                        dense_w=self.dense_w.copy(), dense_b=self.dense_b.copy(),
                        plan=self.plan,
                        swings=dict(self.swings) if self.swings else None)


def _perturb_weights(model: SmallCNN, frac: float,
                     rng: np.random.Generator) -> SmallCNN:
    """One weight-noise draw: each weight tensor gets sigma = frac * max|w|."""
    new = model.copy()
    for name in ("conv1_w", "conv2_w", "dense_w"):
        w = getattr(new, name)
        sigma = frac * float(np.max(np.abs(w)))
        setattr(new, name, w + rng.standard_normal(w.shape) * sigma)
    return new


def _pad1(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))


def _meanpool2(x: np.ndarray) -> np.ndarray:
    b, c, h, w = x.shape
    return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def _unpool2(dy: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) / 4.0


def _forward_batch(model: SmallCNN, xb: np.ndarray, noise: NoiseSpec | None = None,
                   phase: str = "inference", rng: np.random.Generator | None = None,
                   apply_weight_noise: bool = True, capture: bool = False):
    """Batched digital forward pass; returns logits (and the cache if asked)."""
    inject = (noise is not None and noise.active(phase)
              and (noise.output_noise_frac > 0 or noise.weight_noise_frac > 0))
    if inject and rng is None:
        rng = derived_rng(noise.seed, "forward")
    m = model
    if inject and noise.weight_noise_frac > 0 and apply_weight_noise:
        m = _perturb_weights(model, noise.weight_noise_frac, rng)
    out_frac = noise.output_noise_frac if inject else 0.0
    if out_frac > 0 and model.swings is None:
        raise ValueError("noisy forward requires calibrated activation swings; "
                         "run calibrate(model, images) first")

    def _noisy(a: np.ndarray, key: str) -> np.ndarray:
        if out_frac <= 0:
            return a
        sigma = out_frac * model.swings[key]
        return a + rng.standard_normal(a.shape) * sigma

    xp1 = _pad1(xb)
    z1 = _winograd_batch(xp1, m.conv1_w, m.plan) + m.conv1_b[None, :, None, None]
    a1 = _noisy(np.maximum(z1, 0.0), "act1")
    p1 = _meanpool2(a1)
    xp2 = _pad1(p1)
    z2 = _winograd_batch(xp2, m.conv2_w, m.plan) + m.conv2_b[None, :, None, None]
    a2 = _noisy(np.maximum(z2, 0.0), "act2")
    p2 = _meanpool2(a2)
    flat = p2.reshape(len(xb), -1)
    logits = _noisy(flat @ m.dense_w.T + m.dense_b, "logits")
    if not capture:
        return logits
    cache = {"model": m, "xp1": xp1, "z1": z1, "xp2": xp2, "z2": z2,
             "flat": flat}
    return logits, cache


def calibrate(model: SmallCNN, images: np.ndarray) -> dict[str, float]:
    """Measure clean per-injection-point activation maxima and freeze them.

    Sets and returns model.swings; sigma for output noise is
    output_noise_frac times these values until the next calibration.
    """
    if images.ndim != 4 or len(images) < 1:
        raise ValueError("calibration needs a (n, c, h, w) image batch")
    xp1 = _pad1(images)
    z1 = _winograd_batch(xp1, model.conv1_w, model.plan) + model.conv1_b[None, :, None, None]
    a1 = np.maximum(z1, 0.0)
    p1 = _meanpool2(a1)
    z2 = _winograd_batch(_pad1(p1), model.conv2_w, model.plan) + model.conv2_b[None, :, None, None]
    a2 = np.maximum(z2, 0.0)
    flat = _meanpool2(a2).reshape(len(images), -1)
    logits = flat @ model.dense_w.T + model.dense_b
    model.swings = {"act1": float(np.max(np.abs(a1))),
                    "act2": float(np.max(np.abs(a2))),
                    "logits": float(np.max(np.abs(logits)))}
    return model.swings


# ---------------------------------------------------------------------------
# analog-path forward (single image)


def _conv_same_analog(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                      plan: WinogradPlan, dev: DeviceParams, seed: int,
                      impairments: Impairments, layer_tag: str) -> np.ndarray:
    """Same-padded conv with every element-wise multiply run through the
    analog chain, per-layer normalization scalars shared across tiles."""
    c, h, wd = x.shape
    n_f = w.shape[0]
    m, r, n = plan.m, plan.r, plan.n
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    oh, ow = h, wd
    th, tw = -(-oh // m), -(-ow // m)
    ph, pw = th * m + r - 1, tw * m + r - 1
    xpp = np.zeros((c, ph, pw))
    xpp[:, :xp.shape[1], :xp.shape[2]] = xp

    u_bank = _transform_filter_bank(w, plan)  # once per layer
    u_scale = float(np.max(np.abs(u_bank))) or 1.0
    v_tiles = np.empty((th, tw, c, n, n))
    for ti in range(th):
        for tj in range(tw):
            patch = xpp[:, ti * m:ti * m + n, tj * m:tj * m + n]
            for ch in range(c):
                v_tiles[ti, tj, ch] = transform_input(plan, patch[ch])
    v_scale = float(np.max(np.abs(v_tiles))) or 1.0

    out = np.zeros((n_f, th * m, tw * m))
    for ti in range(th):
        for tj in range(tw):
            for k in range(n_f):
                acc = np.zeros((m, m))
                for ch in range(c):
                    prod = analog_ewmm(
                        u_bank[k, ch], v_tiles[ti, tj, ch], dev,
                        seed=_subseed(seed, layer_tag, ti, tj, k, ch),
                        impairments=impairments,
                        u_scale=u_scale, v_scale=v_scale)
                    acc += inverse_transform(plan, prod)
                out[k, ti * m:(ti + 1) * m, tj * m:(tj + 1) * m] = acc
    return out[:, :oh, :ow] + b[:, None, None]


def forward(model: SmallCNN, x, noise: NoiseSpec | None = None,
            dev: DeviceParams | None = None, seed: int = 0,
            impairments: Impairments | None = None, phase: str = "inference",
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Class scores for one image.

    With dev=None this is the exact digital path.  With a DeviceParams the
    convolutions run their element-wise multiplies through the analog chain
    (impairments default to the device's full set); the classifier stays
    electronic.  Abstract Gaussian noise (NoiseSpec) applies in either mode.
    """
    xa = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if xa.ndim != 3:
        raise ValueError("expected a single (c, h, w) image")
    if dev is None:
        return _forward_batch(model, xa[None], noise=noise, phase=phase,
                              rng=rng)[0]

    imp = Impairments.full(dev) if impairments is None else impairments
    inject = noise is not None and noise.active(phase) and noise.output_noise_frac > 0
    if inject and model.swings is None:
        raise ValueError("noisy forward requires calibrated activation swings")
    if inject and rng is None:
        rng = derived_rng(noise.seed, "analog-forward")

    def _noisy(a, key):
        if not inject:
            return a
        return a + rng.standard_normal(a.shape) * (noise.output_noise_frac * model.swings[key])

    m = model
    if noise is not None and noise.active(phase) and noise.weight_noise_frac > 0:
        m = _perturb_weights(model, noise.weight_noise_frac,
                             rng or derived_rng(noise.seed, "analog-wn"))
    a1 = _noisy(np.maximum(_conv_same_analog(xa, m.conv1_w, m.conv1_b, m.plan,
                                             dev, seed, imp, "conv1"), 0.0), "act1")
    p1 = _meanpool2(a1[None])[0]
    a2 = _noisy(np.maximum(_conv_same_analog(p1, m.conv2_w, m.conv2_b, m.plan,
                                             dev, seed, imp, "conv2"), 0.0), "act2")
    p2 = _meanpool2(a2[None])[0]
    return _noisy(m.dense_w @ p2.ravel() + m.dense_b, "logits")


# ---------------------------------------------------------------------------
# loss, gradients, training


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and d(loss)/d(logits), numerically stable."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    bsz = len(labels)
    loss = -float(logp[np.arange(bsz), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(bsz), labels] -= 1.0
    return loss, dlogits / bsz


def _conv_grads(xp: np.ndarray, dz: np.ndarray, w: np.ndarray):
    """Gradients of a same-padded valid correlation.

    dW[k,c,u,v] = sum_b,p,q xp[b,c,p+u,q+v] dz[b,k,p,q]; dX is the full
    correlation of dz with the spatially flipped filters.
    """
    r = w.shape[2]
    oh, ow = dz.shape[2], dz.shape[3]
    win = sliding_window_view(xp, (oh, ow), axis=(2, 3))  # (B, c, r, r, oh, ow)
    dw = np.einsum("bcuvpq,bkpq->kcuv", win, dz)
    db = dz.sum(axis=(0, 2, 3))
    dz_pad = np.pad(dz, ((0, 0), (0, 0), (r - 1, r - 1), (r - 1, r - 1)))
    wf = w[:, :, ::-1, ::-1]
    win2 = sliding_window_view(dz_pad, (r, r), axis=(2, 3))  # (B, k, H, W, r, r)
    dxp = np.einsum("bkijuv,kcuv->bcij", win2, wf)
    return dw, db, dxp


def loss_and_grads(model: SmallCNN, xb: np.ndarray, yb: np.ndarray,
                   noise: NoiseSpec | None = None, phase: str = "training",
                   rng: np.random.Generator | None = None):
    """Cross-entropy loss and analytic parameter gradients for one batch.

    Injected noise (if any) is realized in the forward pass and held constant
    for the backward pass; with weight noise the gradients are taken at the
    perturbed weights, as the hardware would.
    """
    logits, cache = _forward_batch(model, xb, noise=noise, phase=phase, rng=rng,
                                   capture=True)
    loss, dlogits = _cross_entropy(logits, yb)
    m = cache["model"]
    grads: dict[str, np.ndarray] = {}
    grads["dense_w"] = dlogits.T @ cache["flat"]
    grads["dense_b"] = dlogits.sum(axis=0)
    dflat = dlogits @ m.dense_w

    b2, c2 = len(xb), len(m.conv2_b)
    h4 = cache["z2"].shape[2] // 2
    dp2 = dflat.reshape(b2, c2, h4, cache["z2"].shape[3] // 2)
    dz2 = _unpool2(dp2) * (cache["z2"] > 0)
    grads["conv2_w"], grads["conv2_b"], dxp2 = _conv_grads(cache["xp2"], dz2,
                                                           m.conv2_w)
    dp1 = dxp2[:, :, 1:-1, 1:-1]
    dz1 = _unpool2(dp1) * (cache["z1"] > 0)
    grads["conv1_w"], grads["conv1_b"], _ = _conv_grads(cache["xp1"], dz1,
                                                        m.conv1_w)
    return loss, grads


def train(model: SmallCNN, data: Dataset, epochs: int = 10, lr: float = 0.1,
          noise: NoiseSpec | None = None, batch_size: int = 32,
          momentum: float = 0.9, seed: int = 0,
          allow_weight_noise: bool = False, val_fraction: float = 0.1,
          modeled_write_events: int = 500_000) -> tuple[SmallCNN, list[float]]:
    """Mini-batch SGD (with momentum) on cross-entropy.

    Output noise is injected in forward passes only.  Weight noise during
    training is refused unless allow_weight_noise=True: analog weight error
    while *learning* is destructive (see below) and weights are assumed to be
    computed at full precision, so enabling it must be an explicit choice.

    When the override is engaged, every optimizer step also writes a
    *persistent* disturbance into the stored weights (each write through the
    analog medium leaves sigma = weight_noise_frac * max|w| behind), on top
    of the transient per-forward draw.  A production-scale training run makes
    on the order of 1e5-1e6 such writes while a desk-scale run makes a few
    hundred, so the per-step disturbance is scaled by
    sqrt(modeled_write_events / actual_steps): the run then accumulates the
    same end-of-training corruption a full-length run would.  Set
    modeled_write_events=0 to model only the writes that actually happen.

    Returns the trained model and the per-epoch clean loss on a held-out
    validation slice of the training split.  Raises TrainingDivergedError on
    non-finite loss.
    """
    if epochs < 1 or lr <= 0 or batch_size < 1:
        raise ValueError("epochs, lr and batch_size must be positive")
    if (noise is not None and noise.active("training")
            and noise.weight_noise_frac > 0 and not allow_weight_noise):
        raise ValueError(
            "weight noise during training is disabled by default (weights must "
            "be computed at full precision); pass allow_weight_noise=True to "
            "demonstrate the failure mode")
    n_total = len(data.train_images)
    if n_total < 2:
        raise ValueError("training needs at least two samples")
    n_val = min(max(1, int(n_total * val_fraction)), n_total - 1)
    fit_x, fit_y = data.train_images[:-n_val], data.train_labels[:-n_val]
    val_x, val_y = data.train_images[-n_val:], data.train_labels[-n_val:]
    calib = fit_x[:min(64, len(fit_x))]

    model = model.copy()
    shuffle_rng = derived_rng(seed, "shuffle")
    noise_rng = derived_rng(seed, noise.seed if noise else 0, "train-noise")
    params = model.params()  # live references into the model
    velocity = {k: np.zeros_like(v) for k, v in params.items()}

    wn_frac = (noise.weight_noise_frac
               if noise is not None and noise.active("training") else 0.0)
    total_steps = epochs * math.ceil(len(fit_x) / batch_size)
    write_scale = max(1.0, math.sqrt(modeled_write_events / total_steps))

    loss_curve: list[float] = []
    for epoch in range(epochs):
        calibrate(model, calib)
        order = shuffle_rng.permutation(len(fit_x))
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            if wn_frac > 0:
                for name in ("conv1_w", "conv2_w", "dense_w"):
                    w = params[name]
                    sigma = wn_frac * write_scale * float(np.max(np.abs(w)))
                    w += noise_rng.standard_normal(w.shape) * sigma
            loss, grads = loss_and_grads(model, fit_x[idx], fit_y[idx],
                                         noise=noise, phase="training",
                                         rng=noise_rng)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch - 1)
            for name, g in grads.items():
                velocity[name] = momentum * velocity[name] - lr * g
                params[name] += velocity[name]
        val_logits = _forward_batch(model, val_x)
        val_loss, _ = _cross_entropy(val_logits, val_y)
        if not math.isfinite(val_loss):
            raise TrainingDivergedError(epoch - 1)
        loss_curve.append(val_loss)
    calibrate(model, calib)  # leave swings matching the final weights
    return model, loss_curve


# ---------------------------------------------------------------------------
# evaluation and sweeps


@dataclass(frozen=True)
class EvalResult:
    """Accuracy over noise repeats."""

    mean_accuracy: float
    std_accuracy: float
    per_repeat: tuple[float, ...]


def evaluate(model: SmallCNN, data: Dataset, noise: NoiseSpec | None = None,
             repeats: int = 1, seed: int = 0) -> EvalResult:
    """Test-set accuracy, averaged over seeded noise redraws.

    With no active noise every repeat is identical (std 0).  Weight noise in
    'fixed' mode is drawn once per repeat; 'redraw' mode defers the draw to
    each forward call.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if len(data.test_images) < 1:
        raise ValueError("dataset has no test split")
    needs_noise = noise is not None and noise.active("inference") and \
        (noise.output_noise_frac > 0 or noise.weight_noise_frac > 0)
    if needs_noise and noise.output_noise_frac > 0 and model.swings is None:
        calib = data.train_images if len(data.train_images) else data.test_images
        calibrate(model, calib[:min(64, len(calib))])
    accs = []
    for rep in range(repeats):
        rng = derived_rng(seed, noise.seed if noise else 0, "eval", rep)
        m = model
        apply_in_forward = True
        if needs_noise and noise.weight_noise_frac > 0 and noise.weight_mode == "fixed":
            m = _perturb_weights(model, noise.weight_noise_frac, rng)
            apply_in_forward = False
        logits = _forward_batch(m, data.test_images, noise=noise,
                                phase="inference", rng=rng,
                                apply_weight_noise=apply_in_forward)
        accs.append(float((logits.argmax(axis=1) == data.test_labels).mean()))
    arr = np.asarray(accs)
    return EvalResult(float(arr.mean()), float(arr.std()), tuple(accs))


@dataclass(frozen=True)
class SweepResult:
    """Accuracy grid over (training noise) x (inference noise) x repeats."""

    train_fracs: tuple[float, ...]
    infer_fracs: tuple[float, ...]
    repeats: int
    accuracy: np.ndarray        # (T, I, R)
    clean_accuracy: np.ndarray  # (T,)

    def mean_accuracy(self) -> np.ndarray:
        return self.accuracy.mean(axis=2)

    def rows(self):
        """Flat records for CSV emission; clean accuracy appears as
        infer_noise=0 with repeat=0."""
        for ti, tf in enumerate(self.train_fracs):
            yield {"train_noise": tf, "infer_noise": 0.0, "repeat": 0,
                   "accuracy": float(self.clean_accuracy[ti])}
            for fi, inf in enumerate(self.infer_fracs):
                for rep in range(self.repeats):
                    yield {"train_noise": tf, "infer_noise": inf, "repeat": rep,
                           "accuracy": float(self.accuracy[ti, fi, rep])}


def noise_sweep(model_factory, data: Dataset, train_fracs=(0.0, 1e-3, 5e-3),
                infer_fracs=(1e-4, 3.162e-4, 1e-3, 3.162e-3, 1e-2),
                repeats: int = 5, seed: int = 0,
                train_kwargs: dict | None = None) -> SweepResult:
    """Train one model per training-noise level and sweep inference noise.

    model_factory(seed) must return a fresh SmallCNN; every training level
    starts from the same initialization so curves differ only by the injected
    noise.  The inference grid must be ascending within [1e-4, 1e-2] (the
    abstract noise model is calibrated for that range); training levels are
    free, with 0 meaning noise-free training.
    """
    train_fracs = tuple(float(f) for f in train_fracs)
    infer_fracs = tuple(float(f) for f in infer_fracs)
    if any(f < 0 for f in train_fracs):
        raise ValueError("training noise fractions must be non-negative")
    if not infer_fracs or any(not 1e-4 <= f <= 1e-2 for f in infer_fracs):
        raise ValueError("inference noise grid must lie within [1e-4, 1e-2]")
    if list(infer_fracs) != sorted(infer_fracs):
        raise ValueError("inference noise grid must be ascending")
    kwargs = dict(train_kwargs or {})
    accuracy = np.zeros((len(train_fracs), len(infer_fracs), repeats))
    clean = np.zeros(len(train_fracs))
    for ti, tf in enumerate(train_fracs):
        m0 = model_factory(seed)
        tr_noise = None
        if tf > 0:
            tr_noise = NoiseSpec(output_noise_frac=tf, enabled_in="training",
                                 seed=_subseed(seed, "train", ti))
        trained, _ = train(m0, data, noise=tr_noise, seed=seed, **kwargs)
        clean[ti] = evaluate(trained, data, noise=None, repeats=1,
                             seed=seed).mean_accuracy
        for fi, inf in enumerate(infer_fracs):
            spec = NoiseSpec(output_noise_frac=inf, enabled_in="inference",
                             seed=_subseed(seed, "infer", ti, fi))
            ev = evaluate(trained, data, noise=spec, repeats=repeats,
                          seed=_subseed(seed, "eval", ti, fi))
            accuracy[ti, fi] = ev.per_repeat
    return SweepResult(train_fracs=train_fracs, infer_fracs=infer_fracs,
                       repeats=repeats, accuracy=accuracy, clean_accuracy=clean)
