"""The alert: a fully-connected binary classifier over pooled features.

Plain numpy throughout: seeded uniform init, rectifier hidden layers with
inverted dropout, logistic output, binary cross-entropy trained with
adaptive-moment mini-batch gradient descent and class-balanced sampling.
Training is a single sequential stream of updates; inference is a pure
function of (model, input) and can run concurrently on shared models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, FrameIdMismatch, SingleClassDataset
from .model import AlertLabel, FeatureVector

BCE_EPS = 1e-12


@dataclass(frozen=True)
class AlertArchitecture:
    """Layer sizes of the alert classifier: input -> hidden... -> 1 logistic unit."""

    input_dim: int
    hidden_dims: tuple[int, ...] = (256, 128)
    dropout_rate: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden dims must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) per affine layer, output layer last."""
        dims = [self.input_dim, *self.hidden_dims, 1]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


@dataclass(frozen=True)
class AlertModel:
    """Immutable weights/biases per layer plus the seed that produced them."""

    architecture: AlertArchitecture
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    training_seed: int

    def __post_init__(self):
        expected = self.architecture.layer_dims()
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise DimensionMismatch("layer count mismatch with architecture")
        frozen_w, frozen_b = [], []
        for (out_d, in_d), w, b in zip(expected, self.weights, self.biases):
            # own a copy so freezing never touches the caller's buffers
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.shape != (out_d, in_d) or b.shape != (out_d,):
                raise DimensionMismatch(
                    f"layer shape mismatch: got {w.shape}/{b.shape}, want {(out_d, in_d)}/{(out_d,)}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("model parameters must be finite")
            w.setflags(write=False)
            b.setflags(write=False)
            frozen_w.append(w)
            frozen_b.append(b)
        object.__setattr__(self, "weights", tuple(frozen_w))
        object.__setattr__(self, "biases", tuple(frozen_b))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    balanced_sampling: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


def init_model(arch: AlertArchitecture, seed: int) -> AlertModel:
    """Seeded uniform init: weights in [-sqrt(6/fan_in), +sqrt(6/fan_in)], zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for out_d, in_d in arch.layer_dims():
        bound = np.sqrt(6.0 / in_d)
        weights.append(rng.uniform(-bound, bound, size=(out_d, in_d)))
        biases.append(np.zeros(out_d))
    return AlertModel(arch, tuple(weights), tuple(biases), seed)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_batch(
    weights,
    biases,
    dropout_rate: float,
    x: np.ndarray,
    training: bool,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, list]:
    """Probabilities for a (B, input_dim) batch plus the cache backprop needs."""
    a = x
    cache = []
    n_hidden = len(weights) - 1
    for i in range(n_hidden):
        z = a @ weights[i].T + biases[i]
        r = np.maximum(z, 0.0)
        if training and dropout_rate > 0.0:
            mask = (rng.random(r.shape) >= dropout_rate) / (1.0 - dropout_rate)
        else:
            mask = None
        a_next = r if mask is None else r * mask
        cache.append((a, z, mask))
        a = a_next
    z_out = a @ weights[-1].T + biases[-1]
    cache.append((a, z_out, None))
    return _sigmoid(z_out[:, 0]), cache


def _backward_batch(
    weights, cache: list, probs: np.ndarray, y: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of the mean BCE loss w.r.t. every weight and bias."""
    batch = y.shape[0]
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)

    a_last, _, _ = cache[-1]
    dz = ((probs - y) / batch)[:, None]
    grads_w[-1] = dz.T @ a_last
    grads_b[-1] = dz.sum(axis=0)
    da = dz @ weights[-1]

    for i in range(len(cache) - 2, -1, -1):
        a_prev, z, mask = cache[i]
        if mask is not None:
            da = da * mask
        dz_h = da * (z > 0.0)
        grads_w[i] = dz_h.T @ a_prev
        grads_b[i] = dz_h.sum(axis=0)
        da = dz_h @ weights[i]
    return grads_w, grads_b


def _as_matrix(features: list[FeatureVector], input_dim: int) -> np.ndarray:
    for f in features:
        if len(f) != input_dim:
            raise DimensionMismatch(
                f"feature {f.frame_id!r} has length {len(f)}, model expects {input_dim}"
            )
    return np.stack([f.values for f in features])


def forward(
    model: AlertModel,
    x: FeatureVector | np.ndarray,
    training: bool = False,
    dropout_seed: int = 0,
) -> float:
    """Failure probability for one feature vector.

    With ``training=True`` each hidden activation is dropped independently
    with the architecture's dropout rate and survivors are rescaled, so
    inference needs no adjustment; otherwise ``dropout_seed`` is ignored.
    """
    values = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
    if values.shape != (model.architecture.input_dim,):
        raise DimensionMismatch(
            f"input length {values.shape} does not match input_dim {model.architecture.input_dim}"
        )
    rng = np.random.default_rng(dropout_seed) if training else None
    probs, _ = _forward_batch(
        model.weights, model.biases, model.architecture.dropout_rate, values[None, :], training, rng
    )
    return float(probs[0])


def bce_loss(p: float, y: int) -> float:
    """Binary cross-entropy with the probability clamped to [eps, 1-eps]."""
    p = min(max(float(p), BCE_EPS), 1.0 - BCE_EPS)
    return -(y * np.log(p) + (1 - y) * np.log(1.0 - p))


def _bce_mean(probs: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def train(
    features: list[FeatureVector],
    labels: list[AlertLabel],
    cfg: TrainConfig,
    arch: AlertArchitecture | None = None,
) -> tuple[AlertModel, list[float]]:
    """Train the alert on aligned features/labels; returns (model, epoch losses).

    Balanced sampling draws each batch element's class uniformly at random
    and then a uniform member of that class with replacement; one epoch
    draws exactly ``len(features)`` samples. Fully deterministic given
    ``cfg.seed``.
    """
    if len(features) != len(labels):
        raise FrameIdMismatch(f"{len(features)} features vs {len(labels)} labels")
    for f, l in zip(features, labels):
        if f.frame_id != l.frame_id:
            raise FrameIdMismatch(f"feature {f.frame_id!r} paired with label {l.frame_id!r}")

    y = np.array([1.0 if l.is_failure else 0.0 for l in labels])
    pos_idx = np.flatnonzero(y == 1.0)
    neg_idx = np.flatnonzero(y == 0.0)
    if len(pos_idx) == 0 or len(neg_idx) == 0:
        raise SingleClassDataset("training data must contain both failure and success frames")

    if arch is None:
        arch = AlertArchitecture(input_dim=len(features[0]))
    x = _as_matrix(features, arch.input_dim)

    model = init_model(arch, cfg.seed)
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]

    rng = np.random.default_rng([cfg.seed, 1])
    n = len(features)
    step = 0
    history = []
    for _ in range(cfg.epochs):
        if cfg.balanced_sampling:
            classes = rng.integers(0, 2, size=n)
            picks_pos = rng.integers(0, len(pos_idx), size=n)
            picks_neg = rng.integers(0, len(neg_idx), size=n)
            epoch_idx = np.where(classes == 1, pos_idx[picks_pos], neg_idx[picks_neg])
        else:
            epoch_idx = rng.permutation(n)

        total_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = epoch_idx[start : start + cfg.batch_size]
            probs, cache = _forward_batch(
                weights, biases, arch.dropout_rate, x[batch], training=True, rng=rng
            )
            total_loss += _bce_mean(probs, y[batch]) * len(batch)
            grads_w, grads_b = _backward_batch(weights, cache, probs, y[batch])

            step += 1
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for params, grads, ms, vs in (
                (weights, grads_w, m_w, v_w),
                (biases, grads_b, m_b, v_b),
            ):
                for i, g in enumerate(grads):
                    ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * g
                    vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * g * g
                    params[i] = params[i] - cfg.learning_rate * (ms[i] / bc1) / (
                        np.sqrt(vs[i] / bc2) + cfg.adam_eps
                    )
        history.append(total_loss / n)

    return AlertModel(arch, tuple(weights), tuple(biases), cfg.seed), history


def predict(model: AlertModel, features: list[FeatureVector]) -> list[tuple[str, float]]:
    """Inference-mode failure probability per frame, input order preserved."""
    if not features:
        return []
    x = _as_matrix(features, model.architecture.input_dim)
    probs, _ = _forward_batch(
        model.weights, model.biases, model.architecture.dropout_rate, x, training=False, rng=None
    )
    return [(f.frame_id, float(p)) for f, p in zip(features, probs)]


def gradient_check(
    model: AlertModel,
    x: FeatureVector | np.ndarray,
    y: int,
    step: float = 1e-5,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Dropout is disabled. The relative error denominator is floored at 1e-6
    so parameters whose true gradient is (near) zero compare as agreeing
    instead of amplifying finite-difference noise.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    values = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
    xb = values[None, :]
    yb = np.array([float(y)])

    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    probs, cache = _forward_batch(weights, biases, 0.0, xb, training=False, rng=None)
    grads_w, grads_b = _backward_batch(weights, cache, probs, yb)

    def loss_at() -> float:
        p, _ = _forward_batch(weights, biases, 0.0, xb, training=False, rng=None)
        return bce_loss(p[0], y)

    worst = 0.0
    for params, grads in ((weights, grads_w), (biases, grads_b)):
        for arr, grad in zip(params, grads):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                hi = loss_at()
                flat[j] = orig - step
                lo = loss_at()
                flat[j] = orig
                numeric = (hi - lo) / (2.0 * step)
                denom = max(abs(gflat[j]), abs(numeric), 1e-6)
                worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst
