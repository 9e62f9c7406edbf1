"""Deterministic leaky-ReLU feed-forward networks.

Two architectures share one container::

    mlp:     g = A phi(W_L phi(... phi(W_1 f + b_1) ...) + b_L)
    resnet:  g = f + A phi(W_L phi(... phi(W_1 f + b_1) ...) + b_L)

All maps accept a single input vector or a batch with one input per row.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, ParseError, ValidationError
from .rng import substream

__all__ = [
    "ARCHITECTURES",
    "DEFAULT_ALPHA",
    "FeedForwardNet",
    "ForwardTrace",
    "leaky_relu",
    "leaky_relu_prime",
    "forward",
    "forward_trace",
    "init_net",
    "save",
    "load",
    "net_to_dict",
    "net_from_dict",
    "fingerprint",
]

ARCHITECTURES = ("mlp", "resnet")
DEFAULT_ALPHA = 0.01
WEIGHT_FORMAT = "leakyuq-net/1"


def leaky_relu(x, alpha=DEFAULT_ALPHA):
    """``x`` for ``x >= 0``, ``alpha * x`` otherwise."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0.0, x, alpha * x)
    return float(out) if out.ndim == 0 else out


def leaky_relu_prime(x, alpha=DEFAULT_ALPHA):
    """Slope of the leaky ReLU; the kink ``x == 0`` takes slope 1."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0.0, 1.0, alpha)
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class FeedForwardNet:
    """Weights of an ``L``-layer leaky-ReLU network.

    ``layers[n] = (W, b)`` with ``W`` of shape ``(N, N_x)`` for the first
    layer and ``(N, N)`` afterwards; ``A`` has shape ``(N_y, N)``.
    """

    layers: list
    A: np.ndarray
    alpha: float = DEFAULT_ALPHA
    architecture: str = "mlp"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("a network needs at least one hidden layer")
        self.layers = [
            (np.asarray(W, dtype=float), np.asarray(b, dtype=float)) for W, b in self.layers
        ]
        self.A = np.asarray(self.A, dtype=float)
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(
                f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        width = self.layers[0][0].shape[0]
        fan_in = self.layers[0][0].shape[1]
        for n, (W, b) in enumerate(self.layers):
            expected = (width, fan_in if n == 0 else width)
            if W.ndim != 2 or W.shape != expected:
                raise DimensionError(f"layers[{n}].W has shape {W.shape}, expected {expected}")
            if b.shape != (width,):
                raise DimensionError(f"layers[{n}].b has shape {b.shape}, expected ({width},)")
        if self.A.ndim != 2 or self.A.shape[1] != width:
            raise DimensionError(f"A has shape {self.A.shape}, expected (N_y, {width})")
        if self.architecture == "resnet" and self.A.shape[0] != fan_in:
            raise DimensionError("a resnet needs N_y == N_x for the skip connection")

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def width(self):
        return self.A.shape[1]

    @property
    def n_inputs(self):
        return self.layers[0][0].shape[1]

    @property
    def n_outputs(self):
        return self.A.shape[0]

    @property
    def weights(self):
        return [W for W, _ in self.layers]

    @property
    def biases(self):
        return [b for _, b in self.layers]

    def __call__(self, f):
        return forward(self, f)


@dataclass(eq=False)
class ForwardTrace:
    preactivations: list
    activations: list
    output: np.ndarray


def _check_input(net, f):
    f = np.asarray(f, dtype=float)
    if f.ndim not in (1, 2) or f.shape[-1] != net.n_inputs:
        raise DimensionError(f"input must end in length {net.n_inputs}, got shape {f.shape}")
    return f


def forward_trace(net, f):
    """Forward pass keeping every preactivation ``h_n`` and activation ``r_n``."""
    f = _check_input(net, f)
    h_list, r_list = [], []
    r = f
    for W, b in net.layers:
        h = r @ W.T + b
        r = np.where(h >= 0.0, h, net.alpha * h)
        h_list.append(h)
        r_list.append(r)
    g = r @ net.A.T
    if net.architecture == "resnet":
        g = g + f
    return ForwardTrace(h_list, r_list, g)


def forward(net, f):
    f = _check_input(net, f)
    r = f
    for W, b in net.layers:
        h = r @ W.T + b
        r = np.where(h >= 0.0, h, net.alpha * h)
    g = r @ net.A.T
    if net.architecture == "resnet":
        g = g + f
    return g


def init_net(
    n_inputs,
    width,
    n_layers,
    n_outputs=None,
    alpha=DEFAULT_ALPHA,
    architecture="mlp",
    seed=0,
    bias_scale=0.0,
):
    """He-style uniform initialization, ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``.

    Biases are ``U(-bias_scale, bias_scale)``.
    """
    n_outputs = n_inputs if n_outputs is None else n_outputs
    gen = substream(seed, "init-net")
    layers = []
    fan_in = n_inputs
    for _ in range(n_layers):
        bound = np.sqrt(6.0 / fan_in)
        W = gen.uniform(-bound, bound, size=(width, fan_in))
        b = gen.uniform(-bias_scale, bias_scale, size=width) if bias_scale else np.zeros(width)
        layers.append((W, b))
        fan_in = width
    bound = np.sqrt(6.0 / width)
    A = gen.uniform(-bound, bound, size=(n_outputs, width))
    return FeedForwardNet(layers, A, alpha=alpha, architecture=architecture)


# Floats go out through repr(), the shortest string that round-trips to the
# same IEEE double, so load(save(net)) is bit-exact.


def net_to_dict(net):
    return {
        "format": WEIGHT_FORMAT,
        "alpha": net.alpha,
        "architecture_tag": net.architecture,
        "dims": {
            "N_x": net.n_inputs,
            "N": net.width,
            "N_y": net.n_outputs,
            "L": net.n_layers,
        },
        "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in net.layers],
        "A": net.A.tolist(),
        "metadata": net.metadata,
    }


def _field_array(obj, key, where, ndim):
    if key not in obj:
        raise ParseError(f"{where}: missing field {key!r}")
    try:
        arr = np.array(obj[key], dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{where}.{key}: not a numeric array") from None
    if arr.ndim != ndim:
        raise ParseError(f"{where}.{key}: expected a {ndim}-d array, got {arr.ndim}-d")
    return arr


def net_from_dict(data, where="net"):
    if not isinstance(data, dict):
        raise ParseError(f"{where}: expected a JSON object")
    for key in ("alpha", "architecture_tag", "dims", "layers", "A"):
        if key not in data:
            raise ParseError(f"{where}: missing field {key!r}")
    dims = data["dims"]
    try:
        n_x, width, n_y, depth = (int(dims[k]) for k in ("N_x", "N", "N_y", "L"))
    except (KeyError, TypeError, ValueError):
        raise ParseError(f"{where}.dims: needs integer N_x, N, N_y, L") from None
    if not isinstance(data["layers"], list) or len(data["layers"]) != depth:
        raise ParseError(f"{where}.layers: expected {depth} layers per dims.L")
    layers = []
    for n, layer in enumerate(data["layers"]):
        W = _field_array(layer, "W", f"{where}.layers[{n}]", 2)
        b = _field_array(layer, "b", f"{where}.layers[{n}]", 1)
        expected = (width, n_x if n == 0 else width)
        if W.shape != expected:
            raise ParseError(f"{where}.layers[{n}].W: shape {W.shape} contradicts dims {expected}")
        if b.shape != (width,):
            raise ParseError(f"{where}.layers[{n}].b: length {b.size} contradicts dims.N={width}")
        layers.append((W, b))
    A = _field_array(data, "A", where, 2)
    if A.shape != (n_y, width):
        raise ParseError(f"{where}.A: shape {A.shape} contradicts dims {(n_y, width)}")
    try:
        return FeedForwardNet(
            layers,
            A,
            alpha=float(data["alpha"]),
            architecture=data["architecture_tag"],
            metadata=dict(data.get("metadata", {})),
        )
    except (ValidationError, DimensionError) as exc:
        raise ParseError(f"{where}: {exc}") from None


def save(net, path):
    Path(path).write_text(json.dumps(net_to_dict(net), indent=1) + "\n")


def load(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return net_from_dict(data, where=str(path))


def fingerprint(net):
    """SHA-256 over the weights, alpha and architecture (metadata excluded)."""
    payload = net_to_dict(net)
    payload.pop("metadata")
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
