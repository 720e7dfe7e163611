"""Self-contained MLP engine: forward, backprop, Adam, dropout, residual
connections, and a checksummed weight-file format.  Double precision
throughout so finite-difference gradient checks are clean."""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

MODEL_MAGIC = b"PCMLP1\n"
MODEL_SCHEMA_VERSION = 1

TAG_BASE = "base-6-layer-residual"
TAG_CALIB = "calib-3-layer"
TAG_WE = "we-model"


class ModelError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 4096
    dropout: float = 0.5
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must be in [0, 1)")
        if self.batch_size < 1:
            raise ModelError("batch size must be >= 1")


def _relu(x):
    return np.maximum(x, 0.0)


@dataclass
class MlpModel:
    """Fully-connected network with ReLU hidden layers and identity output.

    ``residual`` lists (src, dst) pairs of hidden-layer indices (1-based);
    the post-activation output of hidden layer src is added to the
    post-activation output of hidden layer dst.
    """

    sizes: list
    weights: list
    biases: list
    residual: list = field(default_factory=list)
    tag: str = TAG_CALIB
    x_mean: np.ndarray | None = None
    x_std: np.ndarray | None = None
    y_mean: np.ndarray | None = None
    y_std: np.ndarray | None = None

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_hidden(self):
        return self.n_layers - 1

    def validate(self):
        if len(self.sizes) < 2:
            raise ModelError("need at least 2 layers")
        for src, dst in self.residual:
            if not (1 <= src < dst <= self.n_hidden):
                raise ModelError(f"bad residual pair ({src}, {dst})")
            if self.sizes[src] != self.sizes[dst]:
                raise ModelError("residual connections require equal widths")
        return self

    def set_normalization(self, x_mean, x_std, y_mean, y_std):
        self.x_mean = np.asarray(x_mean, dtype=float)
        self.x_std = np.asarray(x_std, dtype=float)
        self.y_mean = np.asarray(y_mean, dtype=float)
        self.y_std = np.asarray(y_std, dtype=float)

    def copy(self):
        return MlpModel(
            sizes=list(self.sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            residual=list(self.residual),
            tag=self.tag,
            x_mean=None if self.x_mean is None else self.x_mean.copy(),
            x_std=None if self.x_std is None else self.x_std.copy(),
            y_mean=None if self.y_mean is None else self.y_mean.copy(),
            y_std=None if self.y_std is None else self.y_std.copy(),
        )

    # ---- inference -----------------------------------------------------

    def forward(self, x, train_mode=False, dropout=0.0, rng=None):
        """Network output in normalized space; ``x`` already normalized."""
        out, _ = self._forward_cached(x, train_mode, dropout, rng)
        return out

    def _forward_cached(self, x, train_mode, dropout, rng):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ModelError(
                f"input width {x.shape[1]} != expected {self.sizes[0]}"
            )
        hidden_out = {0: x}
        pre = {}
        masks = {}
        h = x
        use_dropout = train_mode and dropout > 0.0
        if use_dropout and rng is None:
            raise ModelError("dropout in train mode needs an rng")
        for k in range(1, self.n_hidden + 1):
            z = h @ self.weights[k - 1] + self.biases[k - 1]
            pre[k] = z
            h = _relu(z)
            for src, dst in self.residual:
                if dst == k:
                    h = h + hidden_out[src]
            if use_dropout:
                mask = (rng.uniform(size=h.shape) >= dropout) / (1.0 - dropout)
                masks[k] = mask
                h = h * mask
            hidden_out[k] = h
        out = h @ self.weights[-1] + self.biases[-1]
        cache = (hidden_out, pre, masks)
        return out, cache

    def predict(self, x):
        """Denormalized prediction from raw features."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.x_mean is None:
            raise ModelError("model has no normalization stats")
        xn = (x - self.x_mean) / self.x_std
        yn = self.forward(xn)
        return yn * self.y_std + self.y_mean

    # ---- gradients -----------------------------------------------------

    def backward(self, x, cache, grad_out):
        """Gradients of a scalar loss wrt weights and biases, given the
        gradient at the network output."""
        hidden_out, pre, masks = cache
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        grads_w[-1] = hidden_out[self.n_hidden].T @ grad_out
        grads_b[-1] = grad_out.sum(axis=0)
        grad_h = {k: None for k in range(self.n_hidden + 1)}
        grad_h[self.n_hidden] = grad_out @ self.weights[-1].T
        for k in range(self.n_hidden, 0, -1):
            g = grad_h[k]
            if masks:
                g = g * masks[k]
            # the residual add bypasses this layer's activation entirely
            for src, dst in self.residual:
                if dst == k:
                    if grad_h[src] is None:
                        grad_h[src] = g.copy()
                    else:
                        grad_h[src] = grad_h[src] + g
            gz = g * (pre[k] > 0)
            grads_w[k - 1] = hidden_out[k - 1].T @ gz
            grads_b[k - 1] = gz.sum(axis=0)
            back = gz @ self.weights[k - 1].T
            if grad_h[k - 1] is None:
                grad_h[k - 1] = back
            else:
                grad_h[k - 1] = grad_h[k - 1] + back
        return grads_w, grads_b


def init_model(sizes, seed, residual=(), tag=TAG_CALIB):
    """He-uniform initialization scaled by fan-in, deterministic per seed."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise ModelError("need at least 2 layers")
    if any(s <= 0 for s in sizes):
        raise ModelError("zero-width layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(
        sizes=sizes,
        weights=weights,
        biases=biases,
        residual=list(residual),
        tag=tag,
    ).validate()


def base_architecture(in_dim, width=128, out_dim=6, seed=0):
    """6 weight layers (5 hidden) with skip connections 1->3 and 3->5."""
    sizes = [in_dim] + [width] * 5 + [out_dim]
    return init_model(sizes, seed, residual=[(1, 3), (3, 5)], tag=TAG_BASE)


def calib_architecture(in_dim, width=128, out_dim=6, seed=0):
    """3 weight layers (2 hidden), used by the residual calibration models."""
    sizes = [in_dim, width, width, out_dim]
    return init_model(sizes, seed, tag=TAG_CALIB)


def we_architecture(in_dim, width=128, out_dim=6, seed=0):
    sizes = [in_dim, width, width, out_dim]
    return init_model(sizes, seed, tag=TAG_WE)


class Trainer:
    """Adam minibatch training with persistent optimizer state.

    Owns the model exclusively; epoch order and shuffling are seeded so a
    given (model seed, config, data) triple always produces identical
    weights.
    """

    def __init__(self, model: MlpModel, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.m_w = [np.zeros_like(w) for w in model.weights]
        self.v_w = [np.zeros_like(w) for w in model.weights]
        self.m_b = [np.zeros_like(b) for b in model.biases]
        self.v_b = [np.zeros_like(b) for b in model.biases]
        self.step = 0
        self.loss_history = []

    def run_epoch(self, x, y):
        """One pass over (x, y) in normalized space; returns mean MSE."""
        cfg = self.cfg
        n = len(x)
        order = self.rng.permutation(n) if n > cfg.batch_size else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            out, cache = self.model._forward_cached(
                xb, train_mode=True, dropout=cfg.dropout, rng=self.rng
            )
            err = out - yb
            loss = float(np.mean(err**2))
            if not np.isfinite(loss):
                raise ModelError(f"non-finite loss at step {self.step}")
            total += loss * len(xb)
            grad_out = 2.0 * err / err.size
            gw, gb = self.model.backward(xb, cache, grad_out)
            self._adam_update(gw, gb)
        mean_loss = total / n
        self.loss_history.append(mean_loss)
        return mean_loss

    def _adam_update(self, gw, gb):
        cfg = self.cfg
        self.step += 1
        t = self.step
        corr1 = 1.0 - cfg.beta1**t
        corr2 = 1.0 - cfg.beta2**t
        for params, grads, ms, vs in (
            (self.model.weights, gw, self.m_w, self.v_w),
            (self.model.biases, gb, self.m_b, self.v_b),
        ):
            for i, g in enumerate(grads):
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * params[i]
                ms[i] = cfg.beta1 * ms[i] + (1 - cfg.beta1) * g
                vs[i] = cfg.beta2 * vs[i] + (1 - cfg.beta2) * g**2
                params[i] -= cfg.lr * (ms[i] / corr1) / (
                    np.sqrt(vs[i] / corr2) + cfg.adam_eps
                )


def normalization_stats(x, y):
    """Feature/target means and stds; near-constant columns carry no
    information, so their std is forced to 1 instead of a tiny floor that
    would blow the normalized values up."""

    def std_of(a):
        s = np.std(a, axis=0)
        return np.where(s < 1e-8, 1.0, s)

    return np.mean(x, axis=0), std_of(x), np.mean(y, axis=0), std_of(y)


def train(model: MlpModel, x, y, cfg: TrainConfig, normalize=True):
    """Train in place on raw features/targets; returns the loss history.

    When the dataset fits in one batch this degenerates to full-batch
    gradient descent (the fine-tuning case).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0:
        raise ModelError("empty dataset")
    if normalize or model.x_mean is None:
        model.set_normalization(*normalization_stats(x, y))
    xn = (x - model.x_mean) / model.x_std
    yn = (y - model.y_mean) / model.y_std
    trainer = Trainer(model, cfg)
    for _ in range(cfg.epochs):
        trainer.run_epoch(xn, yn)
    return trainer.loss_history


# ---- persistence -------------------------------------------------------


def save_model(model: MlpModel, path):
    buf = io.BytesIO()
    arrays = {}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    for name in ("x_mean", "x_std", "y_mean", "y_std"):
        v = getattr(model, name)
        if v is not None:
            arrays[name] = v
    np.savez(buf, **arrays)
    payload = buf.getvalue()
    header = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "tag": model.tag,
        "sizes": list(model.sizes),
        "residual": [list(p) for p in model.residual],
        "checksum": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode() + b"\n"
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(len(header_bytes).to_bytes(8, "little"))
        f.write(header_bytes)
        f.write(payload)


def load_model(path, expect_tag=None):
    with open(path, "rb") as f:
        magic = f.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise ModelError("not a model file")
        hlen = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(hlen).decode())
        payload = f.read()
    if header.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ModelError("unsupported model schema version")
    if hashlib.sha256(payload).hexdigest() != header["checksum"]:
        raise ModelError("model file failed the integrity check")
    if expect_tag is not None and header["tag"] != expect_tag:
        raise ModelError(
            f"architecture tag mismatch: file has {header['tag']!r}, "
            f"expected {expect_tag!r}"
        )
    with np.load(io.BytesIO(payload)) as z:
        n_layers = len(header["sizes"]) - 1
        weights = [z[f"w{i}"] for i in range(n_layers)]
        biases = [z[f"b{i}"] for i in range(n_layers)]
        stats = {
            name: (z[name] if name in z else None)
            for name in ("x_mean", "x_std", "y_mean", "y_std")
        }
    model = MlpModel(
        sizes=header["sizes"],
        weights=weights,
        biases=biases,
        residual=[tuple(p) for p in header["residual"]],
        tag=header["tag"],
        **stats,
    )
    return model.validate()


def numeric_gradient(model, x, y, eps=1e-6):
    """Central finite differences of the MSE loss wrt all parameters."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)

    def loss():
        out = model.forward(x)
        return float(np.mean((out - y) ** 2))

    grads_w, grads_b = [], []
    for w in model.weights:
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = w[i]
            w[i] = old + eps
            lp = loss()
            w[i] = old - eps
            lm = loss()
            w[i] = old
            g[i] = (lp - lm) / (2 * eps)
        grads_w.append(g)
    for b in model.biases:
        g = np.zeros_like(b)
        for i in range(len(b)):
            old = b[i]
            b[i] = old + eps
            lp = loss()
            b[i] = old - eps
            lm = loss()
            b[i] = old
            g[i] = (lp - lm) / (2 * eps)
        grads_b.append(g)
    return grads_w, grads_b
