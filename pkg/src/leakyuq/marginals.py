"""Analytic one-point laws and moments of the linearized network output.

Under the linearized model each output ``g_j = m_j + q_j . z`` is a sum of
independent uniforms on ``[-w_n, w_n]`` with ``w_n = beta_n |q_jn|``. Its
characteristic function is a product of sincs and the density is recovered by
cosine inversion::

    p(m_j + eta) = (1/pi) int_0^inf cos(a eta) prod_n sinc(a w_n) da

The trapezoid rule with step ``pi / (16 s)`` (``s = sum w_n``) is free of
aliasing for a density supported on ``[-s, s]``, so truncation is the only
discretization error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import ndtr, sici

from .exceptions import CapabilityError, DegenerateLawError, ParseError, ValidationError

__all__ = [
    "MarginalLaw",
    "MomentSummary",
    "characteristic_function",
    "marginal_pdf",
    "marginal_pdf_oracle",
    "cdf",
    "inverse_cdf",
    "marginal_laws",
    "moments",
    "correlation_from_covariance",
    "read_curve",
]

ZERO_COEFF_RTOL = 1e-13
ENVELOPE_TOL = 1e-10
# With the closed-form tail the two-term case only needs the sum to be near-converged.
TWO_TERM_ENVELOPE_TOL = 1e-8
TAIL_TOL = 1e-9
MAX_NODES = 2**23
CDF_GRID_POINTS = 4097
ORACLE_MAX_TERMS = 20
_CHUNK = 1 << 22


@dataclass(frozen=True)
class _QuadraturePlan:
    step: float
    cutoff: float
    n_nodes: int
    capped: bool


class MarginalLaw:
    """Law of ``center + sum_n c_n U_n`` with ``U_n ~ U[-beta_n, beta_n]``.

    Parameters
    ----------
    center : float
        Location ``m_j`` (the unperturbed output).
    coeffs : array_like
        Sensitivity row ``q_j``.
    beta : float or array_like
        Input amplitude, scalar or one per coefficient.
    """

    def __init__(self, center, coeffs, beta):
        self.center = float(center)
        self.coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        self.beta = np.broadcast_to(np.asarray(beta, dtype=float), self.coeffs.shape).copy()
        widths = np.abs(self.beta * self.coeffs)
        wmax = widths.max() if widths.size else 0.0
        keep = widths > ZERO_COEFF_RTOL * wmax if wmax > 0 else np.zeros(widths.shape, bool)
        self.half_widths = widths[keep]

    def __repr__(self):
        return f"MarginalLaw(center={self.center!r}, K={self.K}, support_radius={self.support_radius!r})"

    @property
    def K(self):
        """Number of non-negligible uniform summands."""
        return int(self.half_widths.size)

    @property
    def is_degenerate(self):
        return self.K == 0

    @cached_property
    def support_radius(self):
        return float(np.sum(self.half_widths))

    @property
    def support(self):
        return self.center - self.support_radius, self.center + self.support_radius

    @property
    def mean(self):
        return self.center

    @cached_property
    def variance(self):
        return float(np.sum(self.half_widths**2) / 3.0)

    def characteristic_function(self, a):
        a = np.asarray(a, dtype=float)
        # np.sinc is the normalized sinc: sin(pi x) / (pi x).
        out = np.ones(a.shape)
        for w in self.half_widths:
            out = out * np.sinc(a * w / np.pi)
        return out

    @cached_property
    def quadrature(self):
        """Node spacing and cutoff for the cosine-inversion sum."""
        w = self.half_widths
        s = self.support_radius
        step = np.pi / (16.0 * s)
        cutoff = 16.0 / w.max()
        capped = False
        while True:
            decay = np.minimum(1.0, 1.0 / (w * cutoff))
            envelope = float(np.prod(decay))
            n_decaying = int(np.sum(w * cutoff >= 1.0))
            if n_decaying >= 2:
                # For a >= cutoff each decaying factor is at most (cutoff/a) times its value.
                tail = envelope * cutoff / ((n_decaying - 1) * np.pi)
            else:
                tail = np.inf
            # Two summands: the integrated envelope decays only like 1/a, so the
            # tail is instead added in closed form (see _two_term_tail).
            tail_ok = tail < TAIL_TOL or (self.K == 2 and n_decaying == 2)
            env_tol = TWO_TERM_ENVELOPE_TOL if self.K == 2 else ENVELOPE_TOL
            if envelope < env_tol and tail_ok:
                break
            if 2.0 * cutoff / step > MAX_NODES:
                capped = True
                break
            cutoff *= 2.0
        n_nodes = int(math.ceil(cutoff / step)) + 1
        return _QuadraturePlan(step, (n_nodes - 1) * step, n_nodes, capped)

    @cached_property
    def _weighted_cf(self):
        plan = self.quadrature
        a = plan.step * np.arange(plan.n_nodes)
        wts = np.full(plan.n_nodes, plan.step / np.pi)
        wts[0] *= 0.5
        wts[-1] *= 0.5
        return a, wts * self.characteristic_function(a)

    def _two_term_tail(self, eta):
        # Exact (1/pi) int_A^inf cos(a eta) Phi(a) da for K = 2, where the
        # a^-2 decay leaves an O(1/A) truncation error at the kinks.
        w1, w2 = self.half_widths
        A = self.quadrature.cutoff

        def I(c):
            c = np.abs(c)
            return np.cos(c * A) / A - c * (0.5 * np.pi - sici(c * A)[0])

        d, s = w1 - w2, w1 + w2
        return (I(d + eta) + I(d - eta) - I(s + eta) - I(s - eta)) / (4.0 * np.pi * w1 * w2)

    def _require_density(self):
        if self.is_degenerate:
            raise DegenerateLawError(
                f"law at {self.center} is a point mass (all coefficients zero); it has no density"
            )

    def pdf(self, g):
        """Density at ``g`` by sinc-product inversion."""
        self._require_density()
        g = np.asarray(g, dtype=float)
        eta = np.abs(g - self.center).ravel()
        out = np.zeros(eta.shape)
        s = self.support_radius
        if self.K == 1:
            out[eta <= s] = 0.5 / s
            return out.reshape(g.shape) if g.ndim else float(out[0])
        inside = np.flatnonzero(eta < s)
        if inside.size:
            a, wcf = self._weighted_cf
            vals = np.zeros(inside.size)
            rows = max(1, _CHUNK // a.size)
            cols = max(1, _CHUNK // max(inside.size, 1))
            for r0 in range(0, inside.size, rows):
                e = eta[inside[r0 : r0 + rows]]
                acc = np.zeros(e.size)
                for c0 in range(0, a.size, cols):
                    acc += np.cos(np.multiply.outer(e, a[c0 : c0 + cols])) @ wcf[c0 : c0 + cols]
                vals[r0 : r0 + rows] = acc
            if self.K == 2:
                vals += self._two_term_tail(eta[inside])
            out[inside] = np.maximum(vals, 0.0)
        return out.reshape(g.shape) if g.ndim else float(out[0])

    def pdf_oracle(self, g):
        """Density from the closed-form convolution of ``K`` rectangles.

        Sums ``2^K`` truncated powers; limited to ``K <= 20``.
        """
        self._require_density()
        K = self.K
        if K > ORACLE_MAX_TERMS:
            raise CapabilityError(f"closed form needs 2^{K} terms; limit is K <= {ORACLE_MAX_TERMS}")
        g = np.asarray(g, dtype=float)
        s = self.support_radius
        x = np.abs(g - self.center).ravel() / s
        v = self.half_widths / s
        if K == 1:
            out = np.where(x <= 1.0, 0.5, 0.0)
        else:
            signs = np.array(list(product((1.0, -1.0), repeat=K)))
            shifts = signs @ v
            parity = np.prod(signs, axis=1)
            norm = math.factorial(K - 1) * 2.0**K * float(np.prod(v))
            out = np.empty(x.size)
            for k, xi in enumerate(x):
                t = np.maximum(xi + shifts, 0.0)
                out[k] = math.fsum(parity * t ** (K - 1)) / norm
            out = np.where(x < 1.0, np.maximum(out, 0.0), 0.0)
        out = out / s
        return out.reshape(g.shape) if g.ndim else float(out[0])

    def _pdf_on_table_grid(self):
        # Table spacing 2s/(n-1) times node step pi/(16 s) is 2 pi / period, so
        # the cosine sums at every table point form one DFT of the nodes
        # folded modulo the period.
        n = CDF_GRID_POINTS
        period = 16 * (n - 1)
        a, wcf = self._weighted_cf
        k = np.arange(a.size)
        folded = np.bincount(k % period, weights=wcf * np.cos(k * np.pi / 16.0), minlength=period)
        folded = folded + 1j * np.bincount(
            k % period, weights=-wcf * np.sin(k * np.pi / 16.0), minlength=period
        )
        vals = np.fft.ifft(folded).real[:n] * period
        if self.K == 2:
            s = self.support_radius
            vals += self._two_term_tail(np.linspace(-s, s, n))
        vals[0] = vals[-1] = 0.0
        return np.maximum(vals, 0.0)

    @cached_property
    def _cdf_table(self):
        s = self.support_radius
        grid = np.linspace(-s, s, CDF_GRID_POINTS)
        if self.K == 1:
            F = (grid + s) / (2.0 * s)
        else:
            p = self._pdf_on_table_grid()
            F = np.concatenate(([0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(grid))))
            F /= F[-1]
            F = 0.5 * (F + 1.0 - F[::-1])
            F = np.maximum.accumulate(np.clip(F, 0.0, 1.0))
        return grid, F, PchipInterpolator(grid, F)

    def cdf(self, g):
        if self.is_degenerate:
            g = np.asarray(g, dtype=float)
            out = (g >= self.center).astype(float)
            return out if out.ndim else float(out)
        grid, _, interp = self._cdf_table
        g = np.asarray(g, dtype=float)
        eta = g - self.center
        s = self.support_radius
        out = np.clip(interp(np.clip(eta, -s, s)), 0.0, 1.0)
        out = np.where(eta <= -s, 0.0, np.where(eta >= s, 1.0, out))
        return out if out.ndim else float(out)

    def inverse_cdf(self, u, tol=1e-10):
        """Quantile by bisection on the monotone cubic CDF interpolant."""
        u = np.asarray(u, dtype=float)
        if np.any(~(u >= 0.0) | ~(u <= 1.0)):
            raise ValidationError("probabilities must lie in [0, 1]")
        if self.is_degenerate:
            out = np.full(u.shape, self.center)
            return out if out.ndim else float(out)
        s = self.support_radius
        if self.K == 1:
            out = self.center + s * (2.0 * u - 1.0)
            return out if out.ndim else float(out)
        grid, F, interp = self._cdf_table
        flat = u.ravel()
        idx = np.clip(np.searchsorted(F, flat, side="left") - 1, 0, grid.size - 2)
        coef = interp.c[:, idx]
        lo = np.zeros(flat.size)
        hi = np.full(flat.size, grid[1] - grid[0])
        n_iter = max(1, int(math.ceil(math.log2((grid[1] - grid[0]) / (tol * s)))))
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            val = ((coef[0] * mid + coef[1]) * mid + coef[2]) * mid + coef[3]
            below = val < flat
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = self.center + grid[idx] + 0.5 * (lo + hi)
        out = np.where(flat <= 0.0, self.center - s, np.where(flat >= 1.0, self.center + s, out))
        out = out.reshape(u.shape)
        return out if out.ndim else float(out)

    def latent_quantile(self, x):
        """``F^{-1}(Phi(x))``: the map from a standard normal variable to this law.

        The upper half is reflected through the center so large ``x`` does not
        lose resolution to ``Phi(x)`` rounding to 1.
        """
        x = np.asarray(x, dtype=float)
        neg = self.inverse_cdf(ndtr(-np.abs(x)))
        out = np.where(x > 0, 2.0 * self.center - neg, neg)
        out = np.where(x == 0, self.center, out)
        return out if out.ndim else float(out)

    def curve(self, n_points=512):
        """``(g, pdf, cdf)`` sampled uniformly over the support."""
        lo, hi = self.support
        g = np.linspace(lo, hi, n_points)
        return g, self.pdf(g), self.cdf(g)

    def write_curve(self, path, n_points=512):
        g, p, F = self.curve(n_points)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["g", "pdf", "cdf"])
            for row in zip(g, p, F):
                writer.writerow([repr(float(v)) for v in row])

    def summary(self):
        return {
            "center": self.center,
            "coeffs": self.coeffs.tolist(),
            "beta": self.beta.tolist(),
            "K": self.K,
            "support_radius": self.support_radius,
            "variance": self.variance,
        }

    @classmethod
    def from_summary(cls, data):
        return cls(data["center"], data["coeffs"], data["beta"])


def characteristic_function(law, a):
    return law.characteristic_function(a)


def marginal_pdf(law, g):
    return law.pdf(g)


def marginal_pdf_oracle(law, g):
    return law.pdf_oracle(g)


def cdf(law, g):
    return law.cdf(g)


def inverse_cdf(law, u):
    return law.inverse_cdf(u)


def marginal_laws(model):
    """One :class:`MarginalLaw` per output component of a sensitivity model."""
    beta = model.beta_vector
    return [MarginalLaw(model.m[j], model.Q[j], beta) for j in range(model.n_outputs)]


@dataclass(eq=False)
class MomentSummary:
    mean: np.ndarray
    covariance: np.ndarray
    correlation: np.ndarray

    @property
    def variance(self):
        return np.diag(self.covariance).copy()

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "covariance": self.covariance.tolist(),
            "correlation": self.correlation.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            np.array(data["mean"], dtype=float),
            np.array(data["covariance"], dtype=float),
            np.array(data["correlation"], dtype=float),
        )


def correlation_from_covariance(cov):
    """Pearson correlation; zero-variance components get a unit row."""
    var = np.diag(cov)
    live = var > 0
    sd = np.sqrt(np.where(live, var, 1.0))
    corr = cov / np.outer(sd, sd)
    corr[~live, :] = 0.0
    corr[:, ~live] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr


def moments(model):
    """Mean ``m`` and covariance ``(1/3) (beta o q_i) . (beta o q_j)``.

    For scalar ``beta`` the covariance is ``beta^2/3 q_i . q_j``.
    """
    scaled = model.Q * model.beta_vector
    cov = scaled @ scaled.T / 3.0
    cov = 0.5 * (cov + cov.T)
    return MomentSummary(model.m.copy(), cov, correlation_from_covariance(cov))


def _read_numeric_csv(path, columns):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head != columns:
            raise ParseError(f"{path}:1: expected columns {columns}, got {head}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
            if len(vals) != len(columns):
                raise ParseError(f"{path}:{lineno}: expected {len(columns)} values")
            rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, len(columns))


def read_curve(path):
    """Inverse of :meth:`MarginalLaw.write_curve`: arrays ``(g, pdf, cdf)``."""
    table = _read_numeric_csv(path, ["g", "pdf", "cdf"])
    return table[:, 0], table[:, 1], table[:, 2]

