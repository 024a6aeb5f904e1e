"""Class-balanced multinomial logistic regression for the two evidence tiers.

The minimal tier sees the eight timing features, the rich tier all 23.
Training is full-batch gradient descent from zero weights, so a fit is a
deterministic function of its inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .features import MINIMAL_MASK, N_FEATURES, RICH_MASK
from .ingest import CLASS_INDEX, CLASSES

TIERS = {"minimal": MINIMAL_MASK, "rich": RICH_MASK}
SCALE_FLOOR = 1e-8


def standardize_fit(rows) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and population standard deviation (floored at 1e-8)."""
    x = np.asarray(rows, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError("standardisation needs at least one row")
    return x.mean(axis=0), np.maximum(x.std(axis=0), SCALE_FLOOR)


def softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def balanced_weights(y) -> np.ndarray:
    """``n_total / (n_present_classes * n_c)`` for every class index in ``y``."""
    counts = np.bincount(y, minlength=len(CLASSES)).astype(float)
    present = counts > 0
    w = np.zeros(len(CLASSES))
    w[present] = len(y) / (present.sum() * counts[present])
    return w


@dataclass
class ClassifierParams:
    tier: str
    feature_mask: tuple
    weights: np.ndarray  # (4, |mask| + 1), bias in the last column
    mean: np.ndarray
    scale: np.ndarray
    class_weights: np.ndarray
    classes_present: tuple = CLASSES
    seed: int = 0
    epochs: int = 2000
    learning_rate: float = 0.0
    l2: float = 1e-4
    n_inputs: int = N_FEATURES
    loss_history: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "tier": self.tier,
                "feature_mask": list(self.feature_mask),
                "weights": self.weights.ravel().tolist(),
                "weights_shape": list(self.weights.shape),
                "mean": self.mean.tolist(),
                "scale": self.scale.tolist(),
                "class_weights": self.class_weights.tolist(),
                "classes_present": list(self.classes_present),
                "seed": self.seed,
                "epochs": self.epochs,
                "learning_rate": self.learning_rate,
                "l2": self.l2,
                "n_inputs": self.n_inputs,
                "loss_history": self.loss_history,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "ClassifierParams":
        d = json.loads(text)
        return cls(
            tier=d["tier"],
            feature_mask=tuple(d["feature_mask"]),
            weights=np.asarray(d["weights"], dtype=float).reshape(d["weights_shape"]),
            mean=np.asarray(d["mean"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
            class_weights=np.asarray(d["class_weights"], dtype=float),
            classes_present=tuple(d["classes_present"]),
            seed=d["seed"],
            epochs=d["epochs"],
            learning_rate=d["learning_rate"],
            l2=d["l2"],
            n_inputs=d["n_inputs"],
            loss_history=d.get("loss_history", []),
        )


def _design(x, mean, scale):
    z = (x - mean) / scale
    return np.hstack([z, np.ones((z.shape[0], 1))])


def _label_indices(labels) -> np.ndarray:
    try:
        return np.array([CLASS_INDEX[c] for c in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"label {exc} is not one of {CLASSES}") from exc


def loss_and_grad(w, xb, y, sample_w, l2):
    """Weighted mean cross-entropy plus ``l2/2 * ||W||^2`` (bias excluded) and its gradient."""
    total = sample_w.sum()
    p = softmax(xb @ w.T)
    if total == 0:
        reg = w[:, :-1]
        return 0.5 * l2 * np.sum(reg * reg), np.hstack([l2 * reg, np.zeros((w.shape[0], 1))])
    rows = np.arange(len(y))
    nll = -np.log(np.maximum(p[rows, y], 1e-300))
    loss = float(np.dot(sample_w, nll) / total)
    reg = w[:, :-1]
    loss += 0.5 * l2 * float(np.sum(reg * reg))
    p[rows, y] -= 1.0
    grad = (p * sample_w[:, None]).T @ xb / total
    grad[:, :-1] += l2 * reg
    return loss, grad


def train(
    rows,
    labels,
    tier: str = "rich",
    class_weighting: str = "balanced",
    epochs: int = 2000,
    learning_rate: float | None = None,
    l2: float = 1e-4,
    seed: int = 0,
    checkpoint_every: int = 100,
) -> ClassifierParams:
    """Fit one tier's classifier on full 23-column feature rows.

    With ``learning_rate=None`` the step is ``1/L`` for the bound
    ``L = lambda_max(X'SX)/(2 sum S) + l2`` on the loss curvature, which makes
    every step non-increasing. Classes missing from ``labels`` keep an all-zero
    row, so their score is the (zero) bias.
    """
    if tier not in TIERS:
        raise ValidationError(f"unknown tier {tier!r}")
    mask = TIERS[tier]
    x_full = np.asarray(rows, dtype=float)
    if x_full.ndim != 2 or x_full.shape[0] == 0:
        raise ValidationError("training needs a nonempty 2-D feature matrix")
    if x_full.shape[1] != N_FEATURES:
        raise ValidationError(f"feature rows must have {N_FEATURES} columns, got {x_full.shape[1]}")
    bad = np.flatnonzero(~np.all(np.isfinite(x_full), axis=1))
    if bad.size:
        raise ValidationError(f"non-finite feature value in row {int(bad[0])}")
    y = _label_indices(labels)
    if len(y) != len(x_full):
        raise ValidationError("rows and labels differ in length")
    present = np.unique(y)
    if len(present) < 2:
        raise ValidationError("training needs at least two distinct classes")

    x = x_full[:, list(mask)]
    mean, scale = standardize_fit(x)
    xb = _design(x, mean, scale)
    if class_weighting == "balanced":
        cw = balanced_weights(y)
    elif class_weighting == "none":
        cw = (np.bincount(y, minlength=len(CLASSES)) > 0).astype(float)
    else:
        raise ValidationError(f"unknown class weighting {class_weighting!r}")
    sw = cw[y]
    if learning_rate is None:
        gram = (xb * sw[:, None]).T @ xb / sw.sum()
        learning_rate = 1.0 / (0.5 * float(np.linalg.eigvalsh(gram)[-1]) + l2)

    trainable = np.zeros(len(CLASSES), dtype=bool)
    trainable[present] = True
    w = np.zeros((len(CLASSES), xb.shape[1]))
    history = []
    for epoch in range(epochs):
        loss, grad = loss_and_grad(w, xb, y, sw, l2)
        if epoch % checkpoint_every == 0:
            history.append(loss)
        grad[~trainable] = 0.0
        w -= learning_rate * grad
    history.append(loss_and_grad(w, xb, y, sw, l2)[0])
    if not np.all(np.isfinite(w)):
        raise ValidationError("training diverged; lower the learning rate")

    return ClassifierParams(
        tier=tier,
        feature_mask=tuple(mask),
        weights=w,
        mean=mean,
        scale=scale,
        class_weights=cw,
        classes_present=tuple(CLASSES[i] for i in present),
        seed=seed,
        epochs=epochs,
        learning_rate=float(learning_rate),
        l2=l2,
        loss_history=history,
    )


def scores(params: ClassifierParams, rows) -> np.ndarray:
    """Linear class scores. Rows hold either all inputs or just the tier's masked columns."""
    x = np.atleast_2d(np.asarray(rows, dtype=float))
    if x.shape[1] == params.n_inputs:
        x = x[:, list(params.feature_mask)]
    elif x.shape[1] != len(params.feature_mask):
        raise ValidationError(
            f"expected {params.n_inputs} (or {len(params.feature_mask)} masked) features per row, got {x.shape[1]}"
        )
    if not np.all(np.isfinite(x)):
        raise ValidationError("feature rows must be finite")
    xb = _design(x, params.mean, params.scale)
    return xb @ params.weights.T


def predict(params: ClassifierParams, rows) -> np.ndarray:
    """Posterior over (N, S, V, F) for each row; a single row gives shape ``(4,)``."""
    single = np.asarray(rows).ndim == 1
    p = softmax(scores(params, rows))
    return p[0] if single else p


def predict_labels(params: ClassifierParams, rows) -> list[str]:
    p = np.atleast_2d(predict(params, rows))
    return [CLASSES[i] for i in p.argmax(axis=1)]


def grad_check(params: ClassifierParams, rows, labels, step: float = 1e-5, grad_fn=None) -> float:
    """Largest ``|g_analytic - g_fd| / max(1e-8, |g_fd|)`` over all weights.

    ``grad_fn(w, xb, y, sample_weights, l2)`` replaces the analytic gradient;
    the harness uses it to confirm the check notices a wrong gradient.
    """
    x = np.asarray(rows, dtype=float).reshape(-1, params.n_inputs)
    if x.shape[0] == 0:
        return 0.0
    y = _label_indices(labels)
    xb = _design(x[:, list(params.feature_mask)], params.mean, params.scale)
    sw = params.class_weights[y]
    w = params.weights.astype(float).copy()
    if grad_fn is None:
        analytic = loss_and_grad(w, xb, y, sw, params.l2)[1]
    else:
        analytic = grad_fn(w, xb, y, sw, params.l2)
    worst = 0.0
    for idx in np.ndindex(*w.shape):
        orig = w[idx]
        w[idx] = orig + step
        up = loss_and_grad(w, xb, y, sw, params.l2)[0]
        w[idx] = orig - step
        down = loss_and_grad(w, xb, y, sw, params.l2)[0]
        w[idx] = orig
        fd = (up - down) / (2 * step)
        worst = max(worst, abs(analytic[idx] - fd) / max(1e-8, abs(fd)))
    return worst
