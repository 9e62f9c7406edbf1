"""Monte Carlo reference: perturbation ensembles and their statistics.

Everything is reproducible from ``(net, mu, beta, seed, n)``; draws come in
fixed shards of counter-based substreams so threading never changes them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import iqr

from .exceptions import DimensionError, ParseError, ValidationError
from .marginals import MomentSummary, correlation_from_covariance
from .network import fingerprint, forward
from .rng import RNG_ALGORITHM, SHARD_SIZE, sharded_draw

__all__ = [
    "Ensemble",
    "DensityCurve",
    "sample_perturbations",
    "push_forward",
    "run_ensemble",
    "empirical_moments",
    "moment_standard_errors",
    "histogram_pdf",
    "l1_distance",
    "ks_statistic",
    "ks_critical",
    "compare_marginals",
    "write_ensemble",
    "read_ensemble",
]

MIN_BINS = 40


def sample_perturbations(n_x, beta, n, seed=0, workers=1):
    """``n`` i.i.d. draws of ``z`` with entries uniform on ``[-beta_k, beta_k]``."""
    n = int(n)
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}")
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n_x,))
    if np.any(beta < 0):
        raise ValidationError("beta must be non-negative")
    unit = sharded_draw(
        seed, "perturbations", n, lambda gen, rows: gen.uniform(-1.0, 1.0, (rows, n_x)), workers=workers
    )
    return unit * beta


@dataclass(eq=False)
class Ensemble:
    samples: np.ndarray
    seed: int | None
    beta: float | list | None
    net_fingerprint: str

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[0] < 1:
            raise ValidationError("an ensemble needs at least one sample")

    def __len__(self):
        return self.samples.shape[0]


def push_forward(net, mu, perturbations, seed=None, beta=None, workers=1):
    """Ensemble with row ``k`` equal to ``forward(mu + z_k)``."""
    mu = np.asarray(mu, dtype=float)
    Z = np.atleast_2d(np.asarray(perturbations, dtype=float))
    if mu.shape != (net.n_inputs,) or Z.shape[1] != net.n_inputs:
        raise DimensionError(
            f"mu {mu.shape} and perturbations {Z.shape} must match N_x = {net.n_inputs}"
        )
    out = np.empty((Z.shape[0], net.n_outputs))
    for start in range(0, Z.shape[0], SHARD_SIZE):
        out[start : start + SHARD_SIZE] = forward(net, mu + Z[start : start + SHARD_SIZE])
    if beta is not None and np.ndim(beta):
        beta = np.asarray(beta, dtype=float).tolist()
    return Ensemble(out, seed, beta, fingerprint(net))


def run_ensemble(net, mu, beta, n, seed=0, workers=1):
    Z = sample_perturbations(net.n_inputs, beta, n, seed, workers=workers)
    return push_forward(net, mu, Z, seed=seed, beta=beta if np.ndim(beta) else float(beta))


def _samples(ens):
    return ens.samples if isinstance(ens, Ensemble) else np.atleast_2d(np.asarray(ens, dtype=float))


def empirical_moments(ens):
    """Sample mean and unbiased covariance as a :class:`MomentSummary`."""
    X = _samples(ens)
    if X.shape[0] < 2:
        raise ValidationError("covariance needs at least two samples")
    mean = X.mean(axis=0)
    D = X - mean
    cov = D.T @ D / (X.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    return MomentSummary(mean, cov, correlation_from_covariance(cov))


def moment_standard_errors(ens):
    """Standard errors of the sample mean and sample variance per component.

    The variance error uses the fourth central moment,
    ``sqrt((m4 - (n - 3)/(n - 1) s^4) / n)``.
    """
    X = _samples(ens)
    n = X.shape[0]
    if n < 4:
        raise ValidationError("standard errors need at least four samples")
    D = X - X.mean(axis=0)
    var = np.sum(D * D, axis=0) / (n - 1)
    m4 = np.mean(D**4, axis=0)
    se_var = np.sqrt(np.maximum(m4 - (n - 3) / (n - 1) * var**2, 0.0) / n)
    return np.sqrt(var / n), se_var


@dataclass(eq=False)
class DensityCurve:
    x: np.ndarray
    density: np.ndarray
    edges: np.ndarray | None = None

    def __iter__(self):
        return iter((self.x, self.density))


def histogram_pdf(samples, bins=None):
    """Normalized histogram reported at bin centers.

    ``bins=None`` uses the Freedman-Diaconis width, with at least 40 bins.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1:
        raise ValidationError("histogram needs at least one sample")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        half = 1e-12 * max(abs(lo), 1.0)
        lo, hi = lo - half, hi + half
    if bins is None:
        width = 2.0 * iqr(x) * x.size ** (-1.0 / 3.0)
        bins = MIN_BINS if width <= 0 else max(MIN_BINS, int(np.ceil((hi - lo) / width)))
    counts, edges = np.histogram(x, bins=int(bins), range=(lo, hi))
    density = counts / (x.size * np.diff(edges))
    return DensityCurve(0.5 * (edges[:-1] + edges[1:]), density, edges)


def l1_distance(curve_a, curve_b):
    """Trapezoid integral of ``|p_a - p_b|`` over shared abscissae."""
    xa, pa = (np.asarray(v, dtype=float) for v in curve_a)
    xb, pb = (np.asarray(v, dtype=float) for v in curve_b)
    if xa.shape != xb.shape or not np.array_equal(xa, xb):
        raise ValidationError("curves must share the same abscissae")
    return float(np.trapezoid(np.abs(pa - pb), xa))


def ks_statistic(samples, cdf):
    """``sup |F_emp - F|`` against a callable ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValidationError("KS statistic needs at least one sample")
    F = np.asarray(cdf(x), dtype=float)
    k = np.arange(1, n + 1)
    return float(max(np.max(k / n - F), np.max(F - (k - 1) / n)))


def ks_critical(n, level=0.01):
    """Asymptotic one-sample KS critical value (1.63/sqrt(n) at the 1% level)."""
    from scipy.stats import kstwobign

    return float(kstwobign.isf(level) / np.sqrt(n))


def compare_marginals(ens, laws, components=None, analytic_moments=None):
    """Analytic-vs-ensemble metrics per component.

    Degenerate laws are compared by their point value only.
    """
    X = _samples(ens)
    components = range(X.shape[1]) if components is None else components
    emp = empirical_moments(X)
    se_mean, se_var = moment_standard_errors(X)
    rows = []
    for j in components:
        law = laws[j]
        row = {"component": int(j)}
        mean_a = law.center if analytic_moments is None else float(analytic_moments.mean[j])
        var_a = law.variance if analytic_moments is None else float(analytic_moments.covariance[j, j])
        row["mean_delta"] = float(emp.mean[j] - mean_a)
        row["mean_se"] = float(se_mean[j])
        row["variance_delta"] = float(emp.covariance[j, j] - var_a)
        row["variance_se"] = float(se_var[j])
        if law.is_degenerate:
            row.update(l1=None, ks=None, degenerate=True)
        else:
            hist = histogram_pdf(X[:, j])
            row["l1"] = l1_distance(hist, (hist.x, law.pdf(hist.x)))
            row["ks"] = ks_statistic(X[:, j], law.cdf)
            row["degenerate"] = False
        rows.append(row)
    return {"n": int(X.shape[0]), "ks_critical_1pct": ks_critical(X.shape[0]), "components": rows}


def write_ensemble(ens, path):
    header = {
        "format": "leakyuq-ensemble/1",
        "seed": ens.seed,
        "beta": ens.beta,
        "net_fingerprint": ens.net_fingerprint,
        "rng": RNG_ALGORITHM,
    }
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow([f"g{k}" for k in range(ens.samples.shape[1])])
        for row in ens.samples:
            writer.writerow([repr(float(v)) for v in row])


def read_ensemble(path):
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ParseError(f"{path}:1: missing ensemble header")
        try:
            header = json.loads(first[2:])
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:1: bad header ({exc.msg})") from None
        reader = csv.reader(fh)
        cols = next(reader, None)
        if not cols:
            raise ParseError(f"{path}:2: missing column row")
        rows = []
        for lineno, row in enumerate(reader, start=3):
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
            if len(vals) != len(cols):
                raise ParseError(f"{path}:{lineno}: expected {len(cols)} values, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no samples")
    return Ensemble(np.array(rows), header.get("seed"), header.get("beta"), header.get("net_fingerprint", ""))
