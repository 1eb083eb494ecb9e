"""The beam-prediction classifier: a dense softmax network with per-layer
batch normalization, trained from scratch in numpy.

Layer ordering is dense -> batch norm -> rectified linear for every hidden
layer; the output layer is plain dense followed by softmax.  Inputs are raw
dBm RSS vectors; a per-feature standardization affine is fitted on the
training split and frozen into the model, so external callers (and attacks)
always work in raw input units and gradients are exact through the whole
chain.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .channel import Dataset
from .dataio import load_model_state, save_model_state
from .errors import (
    ShapeMismatchError,
    TrainingDivergedError,
    ValidationError,
)

# Hidden widths of the fixed architecture (input M and output N vary with
# the dataset; note 126, not 128, in the middle layer).
HIDDEN_WIDTHS = [32, 64, 126, 64, 32]

# Probabilities are clamped here before the log; the loss is constant (and
# its gradient exactly zero) wherever the clamp is active.
PROB_CLAMP = 1e-12

BN_EPS = 1e-5


@dataclass
class ModelSpec:
    """Layer widths of the classifier."""

    layer_widths: list[int]

    @classmethod
    def for_dims(cls, m: int, n: int) -> "ModelSpec":
        return cls(layer_widths=[m] + list(HIDDEN_WIDTHS) + [n])

    def validate(self) -> None:
        if len(self.layer_widths) != len(HIDDEN_WIDTHS) + 2:
            raise ShapeMismatchError(
                f"layer_widths: expected {len(HIDDEN_WIDTHS) + 2} entries, "
                f"got {len(self.layer_widths)}"
            )
        hidden = list(self.layer_widths[1:-1])
        if hidden != HIDDEN_WIDTHS:
            raise ShapeMismatchError(
                f"layer_widths: hidden widths {hidden} do not match the "
                f"fixed architecture {HIDDEN_WIDTHS}"
            )
        if self.layer_widths[0] < 1 or self.layer_widths[-1] < 2:
            raise ValidationError("layer_widths: input >= 1 and output >= 2")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    bn_momentum: float = 0.9
    rng_seed: int = 7

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValidationError("epochs: must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size: must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate: must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError("optimizer: must be 'adam' or 'sgd'")
        if not 0 <= self.bn_momentum < 1:
            raise ValidationError("bn_momentum: must lie in [0, 1)")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("input: entries must be finite")
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValidationError("input: must be a vector or a batch of vectors")


def _as_onehot_batch(y, n_classes: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(y, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n_classes:
        raise ValidationError(f"y: expected one-hot vectors of length {n_classes}")
    if not np.all((arr == 0.0) | (arr == 1.0)) or not np.all(arr.sum(axis=1) == 1.0):
        raise ValidationError("y: must be one-hot (single 1, rest 0)")
    return arr, single


class Model:
    """Classifier parameters, batch-norm statistics, and the frozen input
    standardization affine."""

    def __init__(self, spec: ModelSpec):
        spec.validate()
        self.spec = spec
        widths = spec.layer_widths
        n_dense = len(widths) - 1
        self.weights = [np.zeros((widths[i], widths[i + 1])) for i in range(n_dense)]
        self.biases = [np.zeros(widths[i + 1]) for i in range(n_dense)]
        self.bn_gamma = [np.ones(widths[i + 1]) for i in range(n_dense - 1)]
        self.bn_beta = [np.zeros(widths[i + 1]) for i in range(n_dense - 1)]
        self.bn_run_mean = [np.zeros(widths[i + 1]) for i in range(n_dense - 1)]
        self.bn_run_var = [np.ones(widths[i + 1]) for i in range(n_dense - 1)]
        self.std_mean = np.zeros(widths[0])
        self.std_std = np.ones(widths[0])
        self.bn_eps = BN_EPS
        self.bn_momentum = 0.9
        self.dataset_hash = ""
        self.train_config: dict = {}

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, spec: ModelSpec, rng_seed: int) -> "Model":
        """He-normal weight init, zero biases, identity batch norm."""
        model = cls(spec)
        rng = np.random.default_rng(rng_seed)
        for i, w in enumerate(model.weights):
            fan_in = w.shape[0]
            model.weights[i] = rng.normal(0.0, np.sqrt(2.0 / fan_in), w.shape)
        return model

    @property
    def n_inputs(self) -> int:
        return self.spec.layer_widths[0]

    @property
    def n_classes(self) -> int:
        return self.spec.layer_widths[-1]

    def set_standardizer(self, x_train: np.ndarray) -> None:
        mean = x_train.mean(axis=0)
        std = x_train.std(axis=0)
        if np.any(std <= 0):
            raise ValidationError(
                "standardizer: training features must have positive variance"
            )
        self.std_mean = mean
        self.std_std = std

    # -- inference ----------------------------------------------------------

    def _forward_batch(self, x: np.ndarray, mode: str) -> np.ndarray:
        h = (x - self.std_mean) / self.std_std
        n_hidden = len(self.weights) - 1
        for i in range(n_hidden):
            z = h @ self.weights[i] + self.biases[i]
            if mode == "train":
                mu = z.mean(axis=0)
                var = z.var(axis=0)
            else:
                mu = self.bn_run_mean[i]
                var = self.bn_run_var[i]
            z_hat = (z - mu) / np.sqrt(var + self.bn_eps)
            h = np.maximum(self.bn_gamma[i] * z_hat + self.bn_beta[i], 0.0)
        return h @ self.weights[-1] + self.biases[-1]

    def forward(self, x, mode: str = "infer"):
        """Logits and softmax probabilities for one input or a batch."""
        if mode not in ("infer", "train"):
            raise ValidationError("mode: must be 'infer' or 'train'")
        batch, single = _as_batch(x)
        if batch.shape[1] != self.n_inputs:
            raise ValidationError(
                f"input: expected {self.n_inputs} features, got {batch.shape[1]}"
            )
        logits = self._forward_batch(batch, mode)
        probs = softmax(logits)
        if single:
            return logits[0], probs[0]
        return logits, probs

    def predict(self, x):
        """Most probable beam index (ties resolve to the lowest index)."""
        _, probs = self.forward(x)
        if probs.ndim == 1:
            return int(np.argmax(probs))
        return np.argmax(probs, axis=1)

    def loss(self, x, y):
        """Cross-entropy -log p(true class), clamped away from log(0)."""
        _, probs = self.forward(x)
        batch_probs = probs[None, :] if probs.ndim == 1 else probs
        y_batch, single = _as_onehot_batch(y, self.n_classes)
        if y_batch.shape[0] != batch_probs.shape[0]:
            raise ValidationError("y: batch size does not match input batch")
        p_true = (batch_probs * y_batch).sum(axis=1)
        values = -np.log(np.maximum(p_true, PROB_CLAMP))
        if single and probs.ndim == 1:
            return float(values[0])
        return values

    def input_gradient(self, x, y):
        """Exact gradient of loss() with respect to the raw dBm input.

        Uses inference-mode (running) batch-norm statistics, so the whole
        network is a fixed piecewise-affine map and the gradient is exact;
        wherever the probability clamp in loss() is active the loss is
        locally constant and the gradient is exactly zero.  The rectified
        linear kink contributes subgradient 0.
        """
        batch, single = _as_batch(x)
        if batch.shape[1] != self.n_inputs:
            raise ValidationError(
                f"input: expected {self.n_inputs} features, got {batch.shape[1]}"
            )
        y_batch, _ = _as_onehot_batch(y, self.n_classes)
        if y_batch.shape[0] != batch.shape[0]:
            raise ValidationError("y: batch size does not match input batch")

        n_hidden = len(self.weights) - 1
        h = (batch - self.std_mean) / self.std_std
        masks = []
        for i in range(n_hidden):
            z = h @ self.weights[i] + self.biases[i]
            z_hat = (z - self.bn_run_mean[i]) / np.sqrt(self.bn_run_var[i] + self.bn_eps)
            a = self.bn_gamma[i] * z_hat + self.bn_beta[i]
            masks.append(a > 0)
            h = np.maximum(a, 0.0)
        logits = h @ self.weights[-1] + self.biases[-1]
        probs = softmax(logits)

        p_true = (probs * y_batch).sum(axis=1)
        live = (p_true > PROB_CLAMP).astype(np.float64)
        d = (probs - y_batch) * live[:, None]
        d = d @ self.weights[-1].T
        for i in range(n_hidden - 1, -1, -1):
            d = d * masks[i]
            d = d * (self.bn_gamma[i] / np.sqrt(self.bn_run_var[i] + self.bn_eps))
            d = d @ self.weights[i].T
        grad = d / self.std_std
        if single:
            return grad[0]
        return grad

    # -- persistence --------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "layer_widths": list(self.spec.layer_widths),
            "bn_eps": self.bn_eps,
            "bn_momentum": self.bn_momentum,
            "dataset_hash": self.dataset_hash,
            "train_config": dict(self.train_config),
            "std_mean": self.std_mean,
            "std_std": self.std_std,
            "weights": self.weights,
            "biases": self.biases,
            "bn_gamma": self.bn_gamma,
            "bn_beta": self.bn_beta,
            "bn_run_mean": self.bn_run_mean,
            "bn_run_var": self.bn_run_var,
        }

    @classmethod
    def from_state(cls, state: dict) -> "Model":
        spec = ModelSpec(layer_widths=list(state["layer_widths"]))
        model = cls(spec)
        model.bn_eps = float(state["bn_eps"])
        model.bn_momentum = float(state["bn_momentum"])
        model.dataset_hash = state.get("dataset_hash", "")
        model.train_config = dict(state.get("train_config", {}))
        model.std_mean = np.asarray(state["std_mean"], dtype=np.float64)
        model.std_std = np.asarray(state["std_std"], dtype=np.float64)
        if np.any(model.std_std <= 0):
            raise ShapeMismatchError("std_std: entries must be positive")
        model.weights = [np.asarray(w, dtype=np.float64) for w in state["weights"]]
        model.biases = [np.asarray(b, dtype=np.float64) for b in state["biases"]]
        model.bn_gamma = [np.asarray(g, dtype=np.float64) for g in state["bn_gamma"]]
        model.bn_beta = [np.asarray(b, dtype=np.float64) for b in state["bn_beta"]]
        model.bn_run_mean = [np.asarray(m, dtype=np.float64)
                             for m in state["bn_run_mean"]]
        model.bn_run_var = [np.asarray(v, dtype=np.float64)
                            for v in state["bn_run_var"]]
        if np.any([np.any(v <= 0) for v in model.bn_run_var]):
            raise ShapeMismatchError("bn_run_var: entries must be positive")
        return model

    def save(self, path: str) -> None:
        save_model_state(self.state_dict(), path)

    @classmethod
    def load(cls, path: str) -> "Model":
        return cls.from_state(load_model_state(path))


# ---------------------------------------------------------------------------
# training

def train(model: Model, dataset: Dataset, cfg: TrainConfig):
    """Mini-batch gradient descent on the cross-entropy.

    Batch-norm layers use batch statistics forward (with the full batch-mean
    and batch-variance terms in the backward pass) and update running
    statistics with the configured momentum.  Returns the trained model and
    a per-epoch history of train/validation loss and accuracy (both measured
    in inference mode after the epoch).
    """
    cfg.validate()
    if dataset.n_train < 1 or dataset.n_val < 1:
        raise ValidationError("dataset: needs nonempty train and validation splits")
    model.bn_momentum = cfg.bn_momentum
    model.train_config = asdict(cfg)

    x_all = dataset.x_m
    tr = dataset.split_indices("train")
    va = dataset.split_indices("val")
    x_train, y_train = x_all[tr], dataset.labels[tr]
    x_val, y_val = x_all[va], dataset.labels[va]
    model.set_standardizer(x_train)

    n = len(x_train)
    n_classes = model.n_classes
    eye = np.eye(n_classes)
    y_onehot = eye[y_train]
    y_val_onehot = eye[y_val]

    params = (model.weights + model.biases + model.bn_gamma + model.bn_beta)
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    step = 0
    n_hidden = len(model.weights) - 1
    mom = cfg.bn_momentum
    rng = np.random.default_rng(cfg.rng_seed)
    history = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            xb, yb = x_train[rows], y_onehot[rows]
            b = len(rows)

            # forward with batch statistics
            h = (xb - model.std_mean) / model.std_std
            caches = []
            for i in range(n_hidden):
                z = h @ model.weights[i] + model.biases[i]
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                inv = 1.0 / np.sqrt(var + model.bn_eps)
                z_hat = (z - mu) * inv
                a = model.bn_gamma[i] * z_hat + model.bn_beta[i]
                caches.append((h, z, mu, inv, z_hat, a > 0))
                model.bn_run_mean[i] = mom * model.bn_run_mean[i] + (1 - mom) * mu
                model.bn_run_var[i] = mom * model.bn_run_var[i] + (1 - mom) * var
                h = np.maximum(a, 0.0)
            logits = h @ model.weights[-1] + model.biases[-1]
            probs = softmax(logits)
            p_true = (probs * yb).sum(axis=1)
            batch_loss = -np.log(np.maximum(p_true, PROB_CLAMP)).mean()
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(epoch, start // cfg.batch_size)

            # backward
            grads_w = [None] * (n_hidden + 1)
            grads_b = [None] * (n_hidden + 1)
            grads_g = [None] * n_hidden
            grads_be = [None] * n_hidden
            d = (probs - yb) / b
            grads_w[n_hidden] = h.T @ d
            grads_b[n_hidden] = d.sum(axis=0)
            d = d @ model.weights[-1].T
            for i in range(n_hidden - 1, -1, -1):
                h_in, z, mu, inv, z_hat, mask = caches[i]
                d = d * mask
                grads_g[i] = (d * z_hat).sum(axis=0)
                grads_be[i] = d.sum(axis=0)
                dz_hat = d * model.bn_gamma[i]
                dvar = (dz_hat * (z - mu)).sum(axis=0) * (-0.5) * inv ** 3
                dmu = (-inv) * dz_hat.sum(axis=0) \
                    + dvar * (-2.0 / b) * (z - mu).sum(axis=0)
                d = dz_hat * inv + dvar * 2.0 * (z - mu) / b + dmu / b
                grads_w[i] = h_in.T @ d
                grads_b[i] = d.sum(axis=0)
                d = d @ model.weights[i].T

            grads = grads_w + grads_b + grads_g + grads_be
            step += 1
            if cfg.optimizer == "adam":
                b1, b2, eps = 0.9, 0.999, 1e-8
                lr = cfg.learning_rate
                for j, (p, g) in enumerate(zip(params, grads)):
                    adam_m[j] = b1 * adam_m[j] + (1 - b1) * g
                    adam_v[j] = b2 * adam_v[j] + (1 - b2) * g * g
                    m_hat = adam_m[j] / (1 - b1 ** step)
                    v_hat = adam_v[j] / (1 - b2 ** step)
                    p -= lr * m_hat / (np.sqrt(v_hat) + eps)
            else:
                for p, g in zip(params, grads):
                    p -= cfg.learning_rate * g

        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(model.loss(x_train, y_onehot))),
            "train_acc": float(np.mean(model.predict(x_train) == y_train)),
            "val_loss": float(np.mean(model.loss(x_val, y_val_onehot))),
            "val_acc": float(np.mean(model.predict(x_val) == y_val)),
        })
    return model, history


def train_new_model(dataset: Dataset, cfg: TrainConfig):
    """Initialize a fresh model for the dataset's dimensions and train it."""
    spec = ModelSpec.for_dims(len(dataset.subset_indices), dataset.config.n_beams)
    model = Model.initialize(spec, cfg.rng_seed)
    return train(model, dataset, cfg)


def history_csv_lines(history: list[dict]) -> list[str]:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for row in history:
        lines.append(
            f"{row['epoch']},{row['train_loss']:.9f},{row['train_acc']:.6f},"
            f"{row['val_loss']:.9f},{row['val_acc']:.6f}"
        )
    return lines
