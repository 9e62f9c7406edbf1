"""Gaussian-copula surrogate for the joint law of the output components.

The copula correlation ``R`` is fitted pair by pair so that the copula
reproduces the analytic second moments ``C_ij = E[g_i g_j]``, then repaired
to the nearest correlation matrix and factorized once for sampling.
"""

from __future__ import annotations

import csv
import json
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.linalg import solve_triangular
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .exceptions import DegenerateLawError, DimensionError, ParseError, ValidationError
from .linalg import cholesky, nearest_correlation
from .marginals import MarginalLaw, marginal_laws, moments
from .rng import RNG_ALGORITHM, sharded_draw

__all__ = [
    "RHO_CAP",
    "RhoFit",
    "CopulaModel",
    "std_normal_cdf",
    "std_normal_quantile",
    "copula_density",
    "pair_moment",
    "fit_rho",
    "build_copula",
    "sample",
    "joint_density",
    "save_copula",
    "load_copula",
    "write_samples",
    "read_samples",
]

RHO_CAP = 0.999
HERMITE_POINTS = 64
REPAIR_MIN_EIGENVALUE = 1e-10
RHO_XTOL = 1e-12

_GH_NODES, _GH_WEIGHTS = hermegauss(HERMITE_POINTS)
_GH_WEIGHTS = _GH_WEIGHTS / np.sqrt(2.0 * np.pi)

RhoFit = namedtuple("RhoFit", ["rho", "residual", "clipped"])


def std_normal_cdf(x):
    return ndtr(x)


def std_normal_quantile(u):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0.0) | ~(u < 1.0)):
        raise ValidationError("normal quantile needs probabilities strictly inside (0, 1)")
    out = ndtri(u)
    return out if out.ndim else float(out)


def _chol_solve_parts(R):
    L = cholesky(R)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return L, logdet


def _log_copula_density(L, logdet, z):
    # z (I - R^-1) z^T = |z|^2 - |L^-1 z|^2
    y = solve_triangular(L, z.T, lower=True)
    quad = np.sum(z * z, axis=-1) - np.sum(y * y, axis=0)
    return -0.5 * logdet + 0.5 * quad


def copula_density(R, u):
    """Gaussian copula density ``det(R)^(-1/2) exp(z (I - R^-1) z^T / 2)``.

    ``u`` is one point of ``(0, 1)^d`` or a batch with one point per row.

    Raises
    ------
    FactorizationError
        ``R`` is not positive definite.
    """
    R = np.asarray(R, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != R.shape[0]:
        raise DimensionError(f"u must end in length {R.shape[0]}, got shape {u.shape}")
    z = np.atleast_2d(std_normal_quantile(u))
    L, logdet = _chol_solve_parts(R)
    out = np.exp(_log_copula_density(L, logdet, z))
    return float(out[0]) if u.ndim == 1 else out


def pair_moment(law_i, law_j, rho):
    """``E[g_i g_j]`` when ``(g_i, g_j)`` share a Gaussian copula with correlation ``rho``.

    Integrated over the latent normals ``x, y`` with
    ``g_i = F_i^-1(Phi(x))`` and ``g_j = F_j^-1(Phi(rho x + sqrt(1 - rho^2) y))``
    by a tensor Gauss-Hermite rule.
    """
    rho = float(rho)
    if not -1.0 < rho < 1.0:
        raise ValidationError(f"rho must lie in (-1, 1), got {rho}")
    xi = _centered_quantile(law_i, _GH_NODES)
    latent = rho * _GH_NODES[:, None] + np.sqrt(1.0 - rho * rho) * _GH_NODES[None, :]
    xj = _centered_quantile(law_j, latent)
    return law_i.center * law_j.center + float(_GH_WEIGHTS @ (xi[:, None] * xj) @ _GH_WEIGHTS)


def _centered_quantile(law, x):
    if law.is_degenerate:
        return np.zeros(np.shape(x))
    return law.latent_quantile(x) - law.center


def fit_rho(law_i, law_j, target):
    """Copula correlation whose pair moment matches ``target``.

    The pair moment increases monotonically in ``rho``, so the match is a
    bracketed root search on ``[-RHO_CAP, RHO_CAP]``, first tried in a narrow
    bracket around the Pearson correlation of the two laws. Targets beyond
    the attainable range are clipped to the nearest end and flagged.
    """
    target = float(target)
    base = law_i.center * law_j.center
    f = lambda r: pair_moment(law_i, law_j, r) - target  # noqa: E731
    sd = np.sqrt(law_i.variance * law_j.variance)
    if sd == 0.0:
        return RhoFit(0.0, abs(base - target), False)
    rho0 = float(np.clip((target - base) / sd, -RHO_CAP, RHO_CAP))
    a, b = max(-RHO_CAP, rho0 - 0.02), min(RHO_CAP, rho0 + 0.02)
    if not f(a) <= 0.0 <= f(b):
        lo_val, hi_val = f(-RHO_CAP), f(RHO_CAP)
        if lo_val >= 0.0:
            return RhoFit(-RHO_CAP, abs(lo_val), lo_val > 0.0)
        if hi_val <= 0.0:
            return RhoFit(RHO_CAP, abs(hi_val), hi_val < 0.0)
        a, b = -RHO_CAP, RHO_CAP
    rho = brentq(f, a, b, xtol=RHO_XTOL, rtol=4 * np.finfo(float).eps)
    return RhoFit(float(rho), abs(f(rho)), False)


class CopulaModel:
    """Gaussian copula ``R`` joined with per-component :class:`MarginalLaw` objects.

    Components with a point-mass marginal keep a unit row in ``R`` and are
    reproduced exactly at their center by :meth:`sample`.
    """

    def __init__(self, R, marginals, rho_flags=None, metadata=None):
        self.R = np.array(R, dtype=float)
        self.marginals = list(marginals)
        if self.R.shape != (len(self.marginals),) * 2:
            raise DimensionError(f"R has shape {self.R.shape} for {len(self.marginals)} marginals")
        self.rho_flags = dict(rho_flags or {})
        self.metadata = dict(metadata or {})
        self.live = np.array([not law.is_degenerate for law in self.marginals], dtype=bool)
        live = np.flatnonzero(self.live)
        self._live_idx = live
        self.cholesky_L = cholesky(self.R)
        self._live_chol = cholesky(self.R[np.ix_(live, live)]) if live.size else None
        if live.size:
            self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._live_chol))))

    @property
    def dim(self):
        return len(self.marginals)

    def marginal(self, indices):
        """Sub-copula on the listed components."""
        idx = [int(i) for i in indices]
        flags = {k: v for k, v in self.rho_flags.items() if k[0] in idx and k[1] in idx}
        remap = {old: new for new, old in enumerate(idx)}
        flags = {(remap[i], remap[j]): v for (i, j), v in flags.items()}
        return CopulaModel(
            self.R[np.ix_(idx, idx)], [self.marginals[i] for i in idx], flags, self.metadata
        )

    def density(self, u):
        """Copula density on the non-degenerate components."""
        u = np.asarray(u, dtype=float)
        return copula_density(self.R[np.ix_(self._live_idx, self._live_idx)], u[..., self._live_idx])

    def joint_density(self, g):
        """Copula density at the marginal CDF values times the marginal densities.

        Point-mass components are left out of the product, so this is the
        density of the non-degenerate components.
        """
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != self.dim:
            raise DimensionError(f"g must end in length {self.dim}, got shape {g.shape}")
        if self._live_chol is None:
            raise DegenerateLawError("every component is a point mass; no joint density exists")
        pts = np.atleast_2d(g)
        n = pts.shape[0]
        live = self._live_idx
        z = np.zeros((n, live.size))
        logp = np.zeros(n)
        inside = np.ones(n, dtype=bool)
        for k, j in enumerate(live):
            law = self.marginals[j]
            p = np.atleast_1d(law.pdf(pts[:, j]))
            F = np.atleast_1d(law.cdf(pts[:, j]))
            ok = (p > 0) & (F > 0) & (F < 1)
            inside &= ok
            z[:, k] = np.where(ok, ndtri(np.clip(F, 1e-300, 1.0 - 1e-16)), 0.0)
            logp += np.log(np.where(ok, p, 1.0))
        logc = _log_copula_density(self._live_chol, self._logdet, z)
        out = np.where(inside, np.exp(logc + logp), 0.0)
        return float(out[0]) if g.ndim == 1 else out

    def sample(self, n, seed=0, workers=1):
        """Draw ``n`` output vectors: ``s = L h``, then ``g_j = F_j^-1(Phi(s_j))``."""
        n = int(n)
        if n < 1:
            raise ValidationError(f"n must be at least 1, got {n}")
        live = self._live_idx
        out = np.empty((n, self.dim))
        for j, law in enumerate(self.marginals):
            if law.is_degenerate:
                out[:, j] = law.center
        if live.size:
            h = sharded_draw(
                seed,
                "copula-sample",
                n,
                lambda gen, rows: gen.standard_normal((rows, live.size)),
                workers=workers,
            )
            s = h @ self._live_chol.T
            for k, j in enumerate(live):
                out[:, j] = self.marginals[j].latent_quantile(s[:, k])
        return out

    def to_dict(self):
        return {
            "format": "leakyuq-copula/1",
            "R": self.R.tolist(),
            "rho_flags": [
                {"i": int(i), "j": int(j), "flag": flag} for (i, j), flag in sorted(self.rho_flags.items())
            ],
            "marginals": [law.summary() for law in self.marginals],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data, where="copula"):
        try:
            marginals = [MarginalLaw.from_summary(m) for m in data["marginals"]]
            flags = {(int(f["i"]), int(f["j"])): f["flag"] for f in data.get("rho_flags", [])}
            return cls(np.array(data["R"], dtype=float), marginals, flags, data.get("metadata"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: invalid copula ({exc})") from None


def build_copula(model, workers=1):
    """Fit a Gaussian copula to a :class:`SensitivityModel`.

    Each off-diagonal ``rho_ij`` matches ``C_ij = m_i m_j + Cov_ij`` for the
    pair alone; the assembled matrix is then projected to a correlation
    matrix with eigenvalues at least ``1e-10`` so its Cholesky factor exists.

    Raises
    ------
    DegenerateLawError
        Every output component has zero variance.
    """
    laws = marginal_laws(model)
    mom = moments(model)
    live = [j for j, law in enumerate(laws) if not law.is_degenerate]
    if not live:
        raise DegenerateLawError("all output components are point masses; no copula to fit")
    n = len(laws)
    pairs = [(i, j) for a, i in enumerate(live) for j in live[a + 1 :]]
    C = np.outer(mom.mean, mom.mean) + mom.covariance

    def fit(pair):
        i, j = pair
        return fit_rho(laws[i], laws[j], C[i, j])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(fit, pairs))
    else:
        fits = [fit(p) for p in pairs]

    R = np.eye(n)
    flags = {}
    worst = 0.0
    for (i, j), res in zip(pairs, fits):
        R[i, j] = R[j, i] = res.rho
        worst = max(worst, res.residual / (1.0 + abs(C[i, j])))
        if res.clipped:
            flags[(i, j)] = "clipped"
    R_fit = R
    R = nearest_correlation(R, min_eigenvalue=REPAIR_MIN_EIGENVALUE)
    metadata = {
        "pair_quadrature": f"tensor Gauss-Hermite {HERMITE_POINTS}x{HERMITE_POINTS} in latent normals",
        "rho_solver": f"bracketed Brent root search on [-{RHO_CAP}, {RHO_CAP}], xtol {RHO_XTOL}",
        "psd_repair": f"eigenvalue clip at {REPAIR_MIN_EIGENVALUE}, unit-diagonal rescale",
        "repair_shift_max": float(np.max(np.abs(R - R_fit))),
        "max_relative_fit_residual": float(worst),
        "rng": RNG_ALGORITHM,
    }
    return CopulaModel(R, laws, flags, metadata)


def sample(copula, n, seed=0, workers=1):
    return copula.sample(n, seed=seed, workers=workers)


def joint_density(copula, g):
    return copula.joint_density(g)


def save_copula(copula, path):
    Path(path).write_text(json.dumps(copula.to_dict(), indent=1) + "\n")


def load_copula(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return CopulaModel.from_dict(data, where=str(path))


def write_samples(samples, path):
    samples = np.atleast_2d(samples)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"g{k}" for k in range(samples.shape[1])])
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])


def read_samples(path):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if not head:
            raise ParseError(f"{path}:1: missing column row")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
            if len(vals) != len(head):
                raise ParseError(f"{path}:{lineno}: expected {len(head)} values, got {len(vals)}")
            rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, len(head))

