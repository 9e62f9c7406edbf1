"""Exact linearization error and its a-priori bounds.

A perturbation ``z`` of the input propagates through layer ``n`` as
``z_{n+1} = D_n W_n z_n + dphi_n`` where ``D_n = diag(phi'(h_n))`` and the
residual ``dphi_n`` is nonzero only on the flip set, the indices whose
preactivation changes sign. Accumulating the residuals through the
remaining linear maps,

    E_1 = dphi_1,    E_n = D_n W_n E_{n-1} + dphi_n,

gives ``forward(mu + z) = m + Q z + A E_L`` exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, ParseError, ValidationError
from .linalg import spectral_norm
from .montecarlo import sample_perturbations
from .network import forward_trace, leaky_relu_prime

__all__ = [
    "ErrorTrace",
    "ErrorStatistics",
    "exact_error",
    "exact_errors",
    "deterministic_bound",
    "deterministic_bounds",
    "bernstein_coefficient",
    "concentration_threshold",
    "bernstein_constant",
    "bernstein_bound",
    "error_statistics",
    "read_histograms",
]


@dataclass(eq=False)
class ErrorTrace:
    """Layer-by-layer record of one perturbation.

    ``perturbations[n]`` is the perturbation entering layer ``n`` (so
    ``perturbations[0]`` is the input perturbation), ``residuals[n]`` the
    linearization residual of that layer and ``accumulated[n]`` the residual
    carried to its output. ``output_error`` is ``|A E_L|``;
    ``last_layer_error`` is ``|A dphi_L|`` without the carried residuals.
    """

    preactivations: list
    perturbations: list
    residuals: list
    flip_sets: list
    accumulated: list
    output_error: np.ndarray
    last_layer_error: np.ndarray

    @property
    def flipped(self):
        return any(s.size for s in self.flip_sets)


def _check_perturbation(net, mu, z):
    mu = np.asarray(mu, dtype=float)
    z = np.asarray(z, dtype=float)
    if mu.shape != (net.n_inputs,):
        raise DimensionError(f"mu must have length {net.n_inputs}, got shape {mu.shape}")
    if z.shape[-1] != net.n_inputs or z.ndim not in (1, 2):
        raise DimensionError(f"z must end in length {net.n_inputs}, got shape {z.shape}")
    return mu, z


def _recursion(net, h_list, z):
    alpha = net.alpha
    zs, residuals, acc, flips = [z], [], [], []
    E = None
    zn = z
    for (W, _), h in zip(net.layers, h_list):
        d = leaky_relu_prime(h, alpha)
        wz = zn @ W.T
        x = h + wz
        d_new = np.where(x >= 0.0, 1.0, alpha)
        flip = d_new != d
        # Off the flip set the slopes agree and the residual is exactly 0.
        dphi = (d_new - d) * x
        E = dphi if E is None else d * (E @ W.T) + dphi
        zn = d * wz + dphi
        residuals.append(dphi)
        acc.append(E)
        flips.append(flip)
        zs.append(zn)
    return zs, residuals, acc, flips


def exact_error(net, mu, z):
    """Run the perturbation recursion for one input perturbation ``z``.

    The output error also holds for a resnet, whose skip connection is linear
    and cancels.
    """
    mu, z = _check_perturbation(net, mu, z)
    if z.ndim != 1:
        raise DimensionError("exact_error takes one perturbation; use exact_errors for a batch")
    trace = forward_trace(net, mu)
    zs, residuals, acc, flips = _recursion(net, trace.preactivations, z)
    return ErrorTrace(
        preactivations=list(trace.preactivations),
        perturbations=zs[:-1],
        residuals=residuals,
        flip_sets=[np.flatnonzero(f) for f in flips],
        accumulated=acc,
        output_error=np.abs(net.A @ acc[-1]),
        last_layer_error=np.abs(net.A @ residuals[-1]),
    )


def exact_errors(net, mu, Z):
    """Batched output errors.

    Returns
    -------
    errors : ndarray, shape (n, N_y)
        ``|A E_L|`` per perturbation.
    last_layer : ndarray, shape (n, N_y)
        ``|A dphi_L|`` per perturbation.
    flipped : ndarray of bool, shape (n,)
        Whether any preactivation changed sign.
    """
    mu, Z = _check_perturbation(net, mu, np.atleast_2d(Z))
    trace = forward_trace(net, mu)
    _, residuals, acc, flips = _recursion(net, trace.preactivations, Z)
    flipped = np.zeros(Z.shape[0], dtype=bool)
    for f in flips:
        flipped |= f.any(axis=1)
    return np.abs(acc[-1] @ net.A.T), np.abs(residuals[-1] @ net.A.T), flipped


def _bound_prefactors(net, mu):
    """``(1 - alpha) ||W_L|| prod_{n<L} lambda_n`` and the row norms of ``A``."""
    trace = forward_trace(net, np.asarray(mu, dtype=float))
    alpha = net.alpha
    norms = [spectral_norm(W) for W in net.weights]
    prod = 1.0
    for h, nrm in zip(trace.preactivations[:-1], norms[:-1]):
        slope_inf = 1.0 if np.any(h >= 0.0) else alpha
        prod *= (slope_inf + 1.0 - alpha) * nrm
    return (1.0 - alpha) * norms[-1] * prod, np.linalg.norm(net.A, axis=1)


def deterministic_bounds(net, mu, beta):
    """Worst-case output error per component for ``|z_n| <= beta``."""
    if beta < 0:
        raise ValidationError(f"beta must be non-negative, got {beta}")
    core, row_norms = _bound_prefactors(net, mu)
    return core * row_norms * math.sqrt(net.n_inputs) * float(beta)


def deterministic_bound(net, mu, beta, i):
    """``(1 - alpha) sqrt(N_x) ||A_i|| ||W_L|| (prod_{n<L} lambda_n) beta``.

    ``lambda_n = (||phi'(h_n)||_inf + 1 - alpha) ||W_n||`` with spectral norms.
    """
    if not 0 <= i < net.n_outputs:
        raise DimensionError(f"output index {i} out of range for {net.n_outputs} outputs")
    return float(deterministic_bounds(net, mu, beta)[i])


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")


def bernstein_coefficient(n_x, delta):
    """``c`` with ``P(|z|^2 > c beta^2) <= delta`` for i.i.d. ``U[-beta, beta]`` entries.

    ``c = N_x/3 + sqrt((8 N_x / 45) ln(1/delta)) + (2/3) ln(1/delta)``.
    """
    _check_delta(delta)
    log_inv = math.log(1.0 / delta)
    return n_x / 3.0 + math.sqrt(8.0 * n_x / 45.0 * log_inv) + 2.0 / 3.0 * log_inv


def concentration_threshold(n_x, beta, delta):
    """Level that ``|z|^2`` exceeds with probability at most ``delta``."""
    return float(beta) ** 2 * bernstein_coefficient(n_x, delta)


def bernstein_constant(net, mu, i):
    """``K`` such that ``e_i <= K |z|``: the deterministic prefactor without ``sqrt(N_x) beta``.

    For one layer this is ``(1 - alpha) ||A_i|| ||W_1||``.
    """
    core, row_norms = _bound_prefactors(net, mu)
    return float(core * row_norms[i])


def bernstein_bound(n_x, beta, delta, K_coeff):
    """Error level exceeded with probability at most ``delta``: ``K beta sqrt(c)``."""
    return float(K_coeff) * float(beta) * math.sqrt(bernstein_coefficient(n_x, delta))


@dataclass(eq=False)
class ErrorStatistics:
    n: int
    beta: float
    seed: int
    max_error: np.ndarray
    mean_error: np.ndarray
    zero_fraction: np.ndarray
    flip_fraction: float
    bounds: np.ndarray
    violations: np.ndarray
    last_layer_violations: np.ndarray
    bin_edges: list
    counts: list
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "n": self.n,
            "beta": self.beta,
            "seed": self.seed,
            "max_error": self.max_error.tolist(),
            "mean_error": self.mean_error.tolist(),
            "zero_fraction": self.zero_fraction.tolist(),
            "flip_fraction": self.flip_fraction,
            "deterministic_bound": self.bounds.tolist(),
            "violations": self.violations.tolist(),
            "last_layer_violations": self.last_layer_violations.tolist(),
            "metadata": self.metadata,
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    def write_histograms(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["component", "bin_lo", "bin_hi", "count", "density"])
            for j, (edges, counts) in enumerate(zip(self.bin_edges, self.counts)):
                widths = np.diff(edges)
                dens = counts / (self.n * widths)
                for lo, hi, c, d in zip(edges[:-1], edges[1:], counts, dens):
                    writer.writerow([j, repr(float(lo)), repr(float(hi)), int(c), repr(float(d))])


def error_statistics(net, mu, beta, n, seed=0, bins=50, workers=1):
    """Sample ``n`` uniform perturbations and summarize the exact output errors.

    Histograms are per component on ``[0, max error]``; a component with no
    error puts all its mass in the first bin of ``[0, 1]``.
    """
    n = int(n)
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}")
    Z = sample_perturbations(net.n_inputs, beta, n, seed, workers=workers)
    errors, last, flipped = exact_errors(net, mu, Z)
    bounds = deterministic_bounds(net, mu, beta)
    edges, counts = [], []
    for j in range(errors.shape[1]):
        top = errors[:, j].max()
        e = np.linspace(0.0, top if top > 0 else 1.0, bins + 1)
        c, _ = np.histogram(errors[:, j], bins=e)
        edges.append(e)
        counts.append(c)
    return ErrorStatistics(
        n=n,
        beta=float(beta),
        seed=int(seed),
        max_error=errors.max(axis=0),
        mean_error=errors.mean(axis=0),
        zero_fraction=np.mean(errors == 0.0, axis=0),
        flip_fraction=float(np.mean(flipped)),
        bounds=bounds,
        violations=np.sum(errors > bounds, axis=0),
        last_layer_violations=np.sum(last > bounds, axis=0),
        bin_edges=edges,
        counts=counts,
        metadata={"n_layers": net.n_layers, "architecture": net.architecture},
    )


def read_histograms(path):
    """Inverse of :meth:`ErrorStatistics.write_histograms`: ``{component: (edges, counts)}``."""
    path = Path(path)
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head != ["component", "bin_lo", "bin_hi", "count", "density"]:
            raise ParseError(f"{path}:1: unexpected columns {head}")
        for lineno, row in enumerate(reader, start=2):
            try:
                j, lo, hi, c = int(row[0]), float(row[1]), float(row[2]), int(row[3])
            except (IndexError, ValueError):
                raise ParseError(f"{path}:{lineno}: malformed row") from None
            edges, counts = out.setdefault(j, ([], []))
            if not edges:
                edges.append(lo)
            edges.append(hi)
            counts.append(c)
    return {j: (np.array(e), np.array(c)) for j, (e, c) in out.items()}

