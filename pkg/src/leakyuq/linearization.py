"""Linearized leaky-ReLU surrogate of a network around the input mean.

Each activation is replaced by its tangent line at the unperturbed
preactivation, giving ``g ~= m + Q z`` with ``Q = A J_L`` (plus the
identity for a resnet) where ``J_L`` chains ``diag(phi'(h_n)) W_n``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, ParseError
from .linalg import face_split
from .network import forward_trace, leaky_relu_prime

__all__ = [
    "KINK_TOL",
    "SensitivityModel",
    "jacobian_chain",
    "jacobian_chain_face_split",
    "sensitivity",
    "linear_predict",
    "save_model",
    "load_model",
]

KINK_TOL = 1e-12


@dataclass(eq=False)
class SensitivityModel:
    """Unperturbed output ``m``, sensitivity rows ``Q`` and input amplitude ``beta``.

    ``beta`` is a scalar or one amplitude per input component.
    """

    m: np.ndarray
    Q: np.ndarray
    beta: float | np.ndarray
    architecture: str = "mlp"
    mu: np.ndarray | None = None
    flags: tuple = ()

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        if self.Q.ndim != 2 or self.Q.shape[0] != self.m.shape[0]:
            raise DimensionError(f"Q has shape {self.Q.shape}, m has length {self.m.shape[0]}")
        if not np.all(np.isfinite(self.Q)):
            raise DimensionError("Q has non-finite rows")
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim == 1 and beta.shape[0] != self.Q.shape[1]:
            raise DimensionError(f"beta has {beta.shape[0]} entries for {self.Q.shape[1]} inputs")
        if np.any(beta < 0):
            raise DimensionError("beta must be non-negative")
        self.beta = float(beta) if beta.ndim == 0 else beta
        self.flags = tuple(self.flags)

    @property
    def n_outputs(self):
        return self.Q.shape[0]

    @property
    def n_inputs(self):
        return self.Q.shape[1]

    @property
    def beta_vector(self):
        return np.broadcast_to(np.asarray(self.beta, dtype=float), (self.n_inputs,))

    def with_beta(self, beta):
        return SensitivityModel(self.m, self.Q, beta, self.architecture, self.mu, self.flags)

    def to_dict(self):
        beta = self.beta if np.ndim(self.beta) == 0 else np.asarray(self.beta).tolist()
        return {
            "format": "leakyuq-sensitivity/1",
            "architecture_tag": self.architecture,
            "m": self.m.tolist(),
            "Q": self.Q.tolist(),
            "beta": beta,
            "mu": None if self.mu is None else np.asarray(self.mu).tolist(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, data, where="model"):
        try:
            return cls(
                np.array(data["m"], dtype=float),
                np.array(data["Q"], dtype=float),
                data["beta"],
                data.get("architecture_tag", "mlp"),
                None if data.get("mu") is None else np.array(data["mu"], dtype=float),
                tuple(data.get("flags", ())),
            )
        except (KeyError, TypeError, ValueError, DimensionError) as exc:
            raise ParseError(f"{where}: invalid sensitivity model ({exc})") from None


def _check_mu(net, mu):
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (net.n_inputs,):
        raise DimensionError(f"mu must have length {net.n_inputs}, got shape {mu.shape}")
    return mu


def _chain(net, mu):
    trace = forward_trace(net, mu)
    J = None
    kink = False
    for (W, _), h in zip(net.layers, trace.preactivations):
        kink |= bool(np.any(np.abs(h) < KINK_TOL))
        layer = leaky_relu_prime(h, net.alpha)[:, None] * W
        J = layer if J is None else layer @ J
    return J, trace, kink


def jacobian_chain(net, mu):
    """``J_L = D_L W_L ... D_1 W_1`` with ``D_n = diag(phi'(h_n))`` at ``mu``."""
    return _chain(net, _check_mu(net, mu))[0]


def jacobian_chain_face_split(net, mu):
    """Same product written with face-splitting factors ``phi'(h_n) [x] W_n``."""
    trace = forward_trace(net, _check_mu(net, mu))
    J = None
    for (W, _), h in zip(net.layers, trace.preactivations):
        slope = np.atleast_1d(leaky_relu_prime(h, net.alpha))[:, None]
        layer = face_split(slope, W)
        J = layer if J is None else layer @ J
    return J


def sensitivity(net, mu, beta):
    """Linearize ``net`` at ``mu`` for perturbation amplitude ``beta``.

    The returned model carries the flag ``"kink"`` when some preactivation
    at ``mu`` is within ``1e-12`` of zero, where the tangent depends on the
    direction of approach.
    """
    mu = _check_mu(net, mu)
    J, trace, kink = _chain(net, mu)
    m = net.A @ trace.activations[-1]
    Q = net.A @ J
    if net.architecture == "resnet":
        m = m + mu
        Q = Q + np.eye(net.n_inputs)
    return SensitivityModel(
        m, Q, beta, net.architecture, mu=mu.copy(), flags=("kink",) if kink else ()
    )


def linear_predict(model, z):
    """``m + Q z`` for one perturbation or a batch (rows)."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != model.n_inputs:
        raise DimensionError(f"z must end in length {model.n_inputs}, got shape {z.shape}")
    return model.m + z @ model.Q.T


def save_model(model, path):
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n")


def load_model(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return SensitivityModel.from_dict(data, where=str(path))
