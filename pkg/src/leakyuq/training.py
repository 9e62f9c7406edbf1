"""Mini-batch ADAM training of leaky-ReLU networks.

Desk-scale defaults (N=32, 100 epochs) keep a run to seconds; ``FULL_SCALE_PRESETS``
holds the full-size optimizer settings (N=64, 10^6 samples).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import TrainingError, ValidationError
from .network import DEFAULT_ALPHA, FeedForwardNet, init_net
from .rng import substream

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "FULL_SCALE_PRESETS", "train_adam", "mse"]


@dataclass(frozen=True)
class TrainConfig:
    n_layers: int = 1
    width: int = 32
    epochs: int = 100
    batch_size: int = 1000
    learning_rate: float = 1e-3
    seed: int = 0
    alpha: float = DEFAULT_ALPHA
    architecture: str = "mlp"
    validation_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    quadrature_weighted: bool = False

    def validate(self):
        bad = [
            name
            for name in ("n_layers", "width", "epochs", "batch_size")
            if int(getattr(self, name)) < 1
        ]
        if self.learning_rate <= 0:
            bad.append("learning_rate")
        if not 0.0 <= self.validation_fraction < 1.0:
            bad.append("validation_fraction")
        if bad:
            raise ValidationError(f"invalid training config fields: {', '.join(bad)}")


# (operator, layers) -> full-size optimizer settings; width 64.
FULL_SCALE_PRESETS = {
    ("nonlinear", 1): dict(batch_size=2000, epochs=1000, learning_rate=0.01),
    ("nonlinear", 5): dict(batch_size=1000, epochs=300, learning_rate=0.01),
    ("nonlinear", 20): dict(batch_size=2000, epochs=900, learning_rate=0.01),
    ("linear", 1): dict(batch_size=1000, epochs=5000, learning_rate=0.001),
    ("linear", 5): dict(batch_size=1000, epochs=100, learning_rate=0.001),
    ("linear", 20): dict(batch_size=1000, epochs=200, learning_rate=0.001),
}
FULL_SCALE_SAMPLES = 1_000_000
FULL_SCALE_WIDTH = 64


def mse(net, inputs, targets, weights=None):
    """Mean squared error over samples and output nodes."""
    resid = net(inputs) - targets
    if weights is None:
        return float(np.mean(resid**2))
    return float(np.mean(resid**2 @ weights) / np.sum(weights))


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _loss_and_grads(net, x, y, weights):
    alpha = net.alpha
    hs, rs = [], [x]
    r = x
    for W, b in net.layers:
        h = r @ W.T + b
        r = np.where(h >= 0.0, h, alpha * h)
        hs.append(h)
        rs.append(r)
    g = r @ net.A.T
    if net.architecture == "resnet":
        g = g + x
    resid = g - y
    n, n_y = resid.shape
    if weights is None:
        loss = np.mean(resid**2)
        dg = 2.0 * resid / (n * n_y)
    else:
        scale = n * np.sum(weights)
        loss = np.sum(resid**2 @ weights) / scale
        dg = 2.0 * resid * weights / scale
    grads_A = dg.T @ rs[-1]
    dr = dg @ net.A
    grads = []
    for k in range(net.n_layers - 1, -1, -1):
        W, _ = net.layers[k]
        dh = dr * np.where(hs[k] >= 0.0, 1.0, alpha)
        grads.append((dh.T @ rs[k], dh.sum(axis=0)))
        if k:
            dr = dh @ W
    grads.reverse()
    flat = []
    for gW, gb in grads:
        flat.extend((gW, gb))
    flat.append(grads_A)
    return float(loss), flat


def train_adam(dataset, config=None):
    """Fit a network to ``dataset`` by mini-batch ADAM on the squared error.

    The last ``validation_fraction`` of a seeded permutation is held out.
    Training runs for exactly ``config.epochs`` epochs; the per-epoch loss
    history, split and stopping rule are stored in ``net.metadata``.

    Raises
    ------
    ValidationError
        Empty dataset or non-positive hyperparameters.
    TrainingError
        The loss became non-finite.
    """
    config = config or TrainConfig()
    config.validate()
    n = len(dataset)
    if n == 0:
        raise ValidationError("cannot train on an empty dataset")
    gen = substream(config.seed, "train-split")
    order = gen.permutation(n)
    n_val = int(round(config.validation_fraction * n)) if n > 1 else 0
    train_idx, val_idx = order[: n - n_val], order[n - n_val :]
    x_train, y_train = dataset.inputs[train_idx], dataset.outputs[train_idx]

    weights = None
    if config.quadrature_weighted:
        weights = dataset.grids()[1].quad_weights

    net = init_net(
        dataset.n_x,
        config.width,
        config.n_layers,
        n_outputs=dataset.n_y,
        alpha=config.alpha,
        architecture=config.architecture,
        seed=config.seed,
    )
    params = []
    for W, b in net.layers:
        params.extend((W, b))
    params.append(net.A)
    opt = _Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)

    shuffle = substream(config.seed, "train-shuffle")
    history = []
    n_train = x_train.shape[0]
    batch = min(config.batch_size, n_train)
    for epoch in range(config.epochs):
        perm = shuffle.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, batch):
            idx = perm[start : start + batch]
            loss, grads = _loss_and_grads(net, x_train[idx], y_train[idx], weights)
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch + 1}")
            opt.step(grads)
            total += loss * idx.size
        history.append(total / n_train)
        if epoch == 0 or (epoch + 1) % 25 == 0:
            log.info("epoch %d loss %.6e", epoch + 1, history[-1])

    final_train = mse(net, x_train, y_train, weights)
    if not np.isfinite(final_train):
        raise TrainingError("final loss is not finite")
    summary = {
        "optimizer": "adam",
        "config": asdict(config),
        "operator_tag": dataset.operator_tag,
        "dataset_seed": dataset.seed,
        "n_samples": n,
        "split": {"train": int(n_train), "validation": int(n_val), "rule": "seeded permutation, last fraction held out"},
        "stopping": "fixed epoch count",
        "loss_history": history,
        "final_train_mse": final_train,
    }
    if n_val:
        x_val, y_val = dataset.inputs[val_idx], dataset.outputs[val_idx]
        summary["validation_mse"] = mse(net, x_val, y_val, weights)
        summary["validation_relative_rmse"] = float(
            np.sqrt(np.mean((net(x_val) - y_val) ** 2) / np.mean(y_val**2))
        )
    net.metadata["training"] = summary
    return net
