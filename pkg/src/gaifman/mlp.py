"""Feed-forward base classifier: sigmoid hidden layers, input dropout, 2-way softmax.

Inputs may be dense arrays or scipy CSR matrices; feature vectors are
sparse, so the first layer is a sparse-dense product.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DataError, TrainingDiverged

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden: tuple[int, ...] = (100, 100)
    activation: str = "sigmoid"
    input_dropout: float = 0.2
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise DataError("layer widths must be positive")
        if not 0.0 <= self.input_dropout < 1.0:
            raise DataError("input_dropout must lie in [0, 1)")
        if self.activation != "sigmoid":
            raise DataError(f"unsupported activation {self.activation!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise DataError("batch_size must be >= 1 and epochs >= 0")
        values = (self.learning_rate, self.beta1, self.beta2, self.eps)
        if not all(np.isfinite(v) for v in values):
            raise DataError("optimizer hyperparameters must be finite")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_input(X):
    if sp.issparse(X):
        return X.tocsr()
    X = np.asarray(X, dtype=np.float64)
    return X[None, :] if X.ndim == 1 else X


@dataclass
class MlpModel:
    config: MlpConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, config: MlpConfig, rng: np.random.Generator | None = None) -> "MlpModel":
        """Glorot-uniform hidden weights, zero output layer, zero biases.

        The zero output layer makes the untrained model exactly symmetric
        (p = 0.5 for every input).
        """
        rng = rng or np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
        dims = (config.input_dim,) + config.hidden + (2,)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-2], dims[1:-1]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        weights.append(np.zeros((dims[-2], 2)))
        biases.append(np.zeros(2))
        return cls(config, weights, biases)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    # -- forward / backward ---------------------------------------------

    def _forward(self, X, dropout_rng=None):
        X = _as_input(X)
        if X.shape[1] != self.config.input_dim:
            raise DataError(f"input has {X.shape[1]} features, model expects {self.config.input_dim}")
        p = self.config.input_dropout
        if dropout_rng is not None and p > 0:
            keep = 1.0 - p
            if sp.issparse(X):
                mask = dropout_rng.random(X.nnz) < keep
                X = sp.csr_matrix((X.data * mask / keep, X.indices, X.indptr), shape=X.shape)
            else:
                X = X * (dropout_rng.random(X.shape) < keep) / keep
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = np.asarray(h @ W) + b
            h = z if i == last else _sigmoid(z)
            acts.append(h)
        probs = _softmax(acts[-1])
        return probs, acts

    def predict_proba(self, X) -> np.ndarray:
        """Positive-class probability for each row (inference mode)."""
        return self._forward(X)[0][:, 1]

    def gradients(self, X, y, dropout_rng=None):
        """Summed cross-entropy loss and its gradients for every parameter."""
        y = np.asarray(y, dtype=np.int64)
        probs, acts = self._forward(X, dropout_rng)
        n = len(y)
        loss = float(-np.log(np.maximum(probs[np.arange(n), y], LOG_CLAMP)).sum())
        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            grads_w[i] = np.asarray(a_in.T @ delta)
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                a = acts[i]
                delta = (delta @ self.weights[i].T) * a * (1.0 - a)
        return loss, grads_w, grads_b, probs[:, 1]

    # -- persistence ------------------------------------------------------

    def header(self) -> dict:
        return {
            "config": asdict(self.config),
            "shapes": [list(p.shape) for p in self.params],
            "feature_hash": self.meta.get("feature_hash"),
            "meta": self.meta,
        }

    def save(self, path) -> None:
        header = self.header()
        body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in self.params)
        header["n_bytes"] = len(body)
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
            fh.write(body)


_MAGIC = b"GAIFMAN-MLP 1\n"


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise DataError(f"{path}: not a model file")
        line = fh.readline()
    try:
        return json.loads(line)
    except json.JSONDecodeError:
        raise DataError(f"{path}: unreadable model header") from None


def load(path, feature_hash: str | None = None) -> MlpModel:
    """Read a model; with ``feature_hash`` given, refuse models built for another feature set."""
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise DataError(f"{path}: not a model file")
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError:
            raise DataError(f"{path}: unreadable model header") from None
        body = fh.read()
    if len(body) != header["n_bytes"]:
        raise DataError(f"{path}: truncated model file ({len(body)} of {header['n_bytes']} bytes)")
    if feature_hash is not None and header.get("feature_hash") != feature_hash:
        raise DataError(
            f"{path}: model was trained on feature set {header.get('feature_hash')}, "
            f"not {feature_hash}"
        )
    cfg = header["config"]
    cfg["hidden"] = tuple(cfg["hidden"])
    config = MlpConfig(**cfg)
    params, off = [], 0
    for shape in header["shapes"]:
        size = int(np.prod(shape)) * 8
        params.append(np.frombuffer(body[off:off + size], dtype="<f8").reshape(shape).copy())
        off += size
    return MlpModel(config, params[0::2], params[1::2], header.get("meta", {}))


def save(model: MlpModel, path) -> None:
    model.save(path)


def forward(model: MlpModel, v, mode: str = "infer", rng: np.random.Generator | None = None):
    """p_M(v): positive-class probability; dropout only in ``train`` mode."""
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    drop = (rng or np.random.default_rng()) if mode == "train" else None
    p = model._forward(v, drop)[0][:, 1]
    return float(p[0]) if np.ndim(v) == 1 and not sp.issparse(v) else p


def loss(model: MlpModel, X, y) -> float:
    """Summed cross-entropy, log clamped at 1e-12 (inference mode)."""
    p = model.predict_proba(X)
    y = np.asarray(y)
    pos = np.log(np.maximum(p[y == 1], LOG_CLAMP)).sum()
    neg = np.log(np.maximum(1.0 - p[y == 0], LOG_CLAMP)).sum()
    return float(-(pos + neg))


# -- training ---------------------------------------------------------------


class Adam:
    def __init__(self, config: MlpConfig, params: list[np.ndarray]):
        self.c = config
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c = self.c
        lr = c.learning_rate * np.sqrt(1 - c.beta2 ** self.t) / (1 - c.beta1 ** self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            p -= lr * m / (np.sqrt(v) + c.eps)


def train(config: MlpConfig, dataset, expect_negatives: bool = True,
          history: list | None = None) -> MlpModel:
    """Shuffled mini-batch Adam on the summed loss divided by batch size.

    ``history`` (if given) receives ``(epoch, mean loss, accuracy)`` rows;
    epoch 0 is the untrained model in inference mode.
    """
    X = dataset.X if hasattr(dataset, "X") else dataset[0]
    y = np.asarray(dataset.y if hasattr(dataset, "y") else dataset[1], dtype=np.int64)
    X = _as_input(X)
    n = len(y)
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    if expect_negatives and (y.min() == y.max()):
        log.warning("training set contains a single class (%d rows, label %d)", n, y[0])
    init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(config.seed).spawn(3)
    model = MlpModel.init(config, np.random.default_rng(init_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    opt = Adam(config, model.params)
    rows = history if history is not None else []
    p0 = model.predict_proba(X)
    rows.append((0, loss(model, X, y) / n, float(((p0 >= 0.5) == (y == 1)).mean())))
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        total, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = X[idx]
            l, gw, gb, p = model.gradients(xb, y[idx], drop_rng)
            if not np.isfinite(l):
                raise TrainingDiverged(f"loss became {l} in epoch {epoch}")
            scale = 1.0 / len(idx)
            grads = []
            for a, b in zip(gw, gb):
                grads += [a * scale, b * scale]
            params = model.params
            opt.step(params, grads)
            if not all(np.isfinite(q).all() for q in params):
                raise TrainingDiverged(f"non-finite parameter after an update in epoch {epoch}")
            total += l
            correct += int(((p >= 0.5) == (y[idx] == 1)).sum())
        rows.append((epoch, total / n, correct / n))
        log.debug("epoch %d loss %.5f acc %.4f", epoch, total / n, correct / n)
    model.meta["history"] = [list(r) for r in rows]
    return model


def history_csv(rows) -> str:
    return "epoch,loss,accuracy\n" + "".join(f"{e},{l:.6f},{a:.4f}\n" for e, l, a in rows)


def gradient_check(model: MlpModel, X, y, h: float = 1e-4, floor: float = 1e-7) -> float:
    """Max relative error between backprop and central differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; dropout is off.
    The default step balances round-off in the summed loss (about eps * L / h)
    against the O(h^2) truncation error.
    """
    X = _as_input(X)
    y = np.asarray(y, dtype=np.int64)
    _, gw, gb, _ = model.gradients(X, y)
    analytic = []
    for a, b in zip(gw, gb):
        analytic += [a, b]
    worst = 0.0
    for p, g in zip(model.params, analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss(model, X, y)
            flat[i] = old - h
            down = loss(model, X, y)
            flat[i] = old
            num = (up - down) / (2 * h)
            err = abs(gflat[i] - num) / max(abs(gflat[i]), abs(num), floor)
            worst = max(worst, err)
    return worst
