"""Gauss-Legendre-Lobatto discretization of the benchmark operators.

Input and output functions live on GLL grids; ``f'`` is taken with the
Lagrange differentiation matrix and integrals with the Lobatto weights.
Two operators are provided::

    linear:     g(y) = int_{-1}^{1} f(x) y + f'(x)      sin(pi y^2) cos(x) dx
    nonlinear:  g(y) = int_{-1}^{1} f(x) y + f(x) f'(x) sin(pi y^2) cos(x) dx
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, ParseError, ValidationError
from .rng import RNG_ALGORITHM, sharded_draw

__all__ = [
    "GLLGrid",
    "gll_grid",
    "apply_linear_operator",
    "apply_nonlinear_operator",
    "apply_operator",
    "SamplerSpec",
    "Dataset",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "OPERATORS",
]

NEWTON_TOL = 1e-14
NEWTON_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class GLLGrid:
    n_points: int
    nodes: np.ndarray
    quad_weights: np.ndarray
    diff_matrix: np.ndarray
    interval: tuple = (-1.0, 1.0)

    def integrate(self, values):
        """Quadrature of node values (last axis)."""
        return np.asarray(values) @ self.quad_weights

    def differentiate(self, values):
        """Derivative at the nodes of the interpolant through ``values`` (last axis)."""
        return np.asarray(values) @ self.diff_matrix.T


def _legendre_nodes(n_points):
    """Lobatto nodes and ``P_N`` at them, ``N = n_points - 1``."""
    N = n_points - 1
    # Chebyshev-Lobatto seed; ascending order.
    x = -np.cos(np.pi * np.arange(n_points) / N)
    P = np.zeros((n_points, n_points))
    for _ in range(NEWTON_MAX_ITER):
        x_old = x.copy()
        P[:, 0] = 1.0
        P[:, 1] = x
        for k in range(2, n_points):
            P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
        x = x_old - (x * P[:, N] - P[:, N - 1]) / (n_points * P[:, N])
        if np.max(np.abs(x - x_old)) < NEWTON_TOL:
            break
    P[:, 0] = 1.0
    P[:, 1] = x
    for k in range(2, n_points):
        P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
    x[0], x[-1] = -1.0, 1.0
    return x, P[:, N]


def gll_grid(n_points, interval=(-1.0, 1.0)):
    """Build the ``n_points`` Gauss-Legendre-Lobatto grid on ``interval``.

    Nodes are the roots of ``(1 - x^2) P'_{n-1}(x)`` found by Newton
    iteration from Chebyshev-Lobatto points. The differentiation matrix uses
    the negative-sum diagonal so it annihilates constants to rounding.
    """
    n_points = int(n_points)
    if n_points < 2:
        raise ValidationError(f"a Lobatto grid needs at least 2 points, got {n_points}")
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValidationError(f"interval must be increasing, got {interval}")
    N = n_points - 1
    if n_points == 2:
        xi = np.array([-1.0, 1.0])
        PN = xi.copy()
    else:
        xi, PN = _legendre_nodes(n_points)
    w = 2.0 / (N * (N + 1) * PN**2)

    diff = xi[:, None] - xi[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (PN[:, None] / PN[None, :]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))

    half = 0.5 * (hi - lo)
    nodes = lo + half * (xi + 1.0)
    nodes[0], nodes[-1] = lo, hi
    return GLLGrid(
        n_points=n_points,
        nodes=nodes,
        quad_weights=half * w,
        diff_matrix=D / half,
        interval=(lo, hi),
    )


def _check_input(f, grid):
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != grid.n_points:
        raise DimensionError(
            f"input has {f.shape[-1]} values but the grid has {grid.n_points} nodes"
        )
    return f


def apply_linear_operator(f, grid, y_nodes):
    """Linear operator on node values ``f`` (one sample per row)."""
    f = _check_input(f, grid)
    y = np.asarray(y_nodes, dtype=float)
    mass = grid.integrate(f)
    transport = grid.integrate(grid.differentiate(f) * np.cos(grid.nodes))
    return np.multiply.outer(mass, y) + np.multiply.outer(transport, np.sin(np.pi * y**2))


def apply_nonlinear_operator(f, grid, y_nodes):
    """Nonlinear operator on node values ``f`` (one sample per row)."""
    f = _check_input(f, grid)
    y = np.asarray(y_nodes, dtype=float)
    mass = grid.integrate(f)
    transport = grid.integrate(f * grid.differentiate(f) * np.cos(grid.nodes))
    return np.multiply.outer(mass, y) + np.multiply.outer(transport, np.sin(np.pi * y**2))


OPERATORS = {
    "linear": apply_linear_operator,
    "nonlinear": apply_nonlinear_operator,
}


def apply_operator(operator_tag, f, grid, y_nodes):
    try:
        op = OPERATORS[operator_tag]
    except KeyError:
        raise ValidationError(
            f"unknown operator {operator_tag!r}; expected one of {sorted(OPERATORS)}"
        ) from None
    return op(f, grid, y_nodes)


@dataclass(frozen=True)
class SamplerSpec:
    """Training-input law: i.i.d. ``N(0, scale^2)`` node values."""

    n_x: int = 31
    n_y: int = 31
    scale: float = 1.0


@dataclass(eq=False)
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    operator_tag: str
    seed: int
    sampler: SamplerSpec = field(default_factory=SamplerSpec)

    def __post_init__(self):
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise DimensionError("inputs and outputs must have the same number of rows")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def n_x(self):
        return self.inputs.shape[1]

    @property
    def n_y(self):
        return self.outputs.shape[1]

    def grids(self):
        return gll_grid(self.n_x), gll_grid(self.n_y)


def generate_dataset(count, operator_tag, sampler=None, seed=0, workers=1):
    """Sample ``count`` Gaussian inputs and push them through the operator.

    Deterministic in ``seed``; row ``k`` depends only on ``(seed, k)``.
    """
    if count < 1:
        raise ValidationError(f"count must be at least 1, got {count}")
    if operator_tag not in OPERATORS:
        raise ValidationError(
            f"unknown operator {operator_tag!r}; expected one of {sorted(OPERATORS)}"
        )
    sampler = sampler or SamplerSpec()
    x_grid, y_grid = gll_grid(sampler.n_x), gll_grid(sampler.n_y)
    inputs = sampler.scale * sharded_draw(
        seed,
        "dataset-inputs",
        count,
        lambda gen, rows: gen.standard_normal((rows, sampler.n_x)),
        workers=workers,
    )
    outputs = apply_operator(operator_tag, inputs, x_grid, y_grid.nodes)
    return Dataset(inputs, outputs, operator_tag, int(seed), sampler)


# File layout: line 1 is a JSON header; the rest is CSV with columns
# ``sample,kind,v0,v1,...``. Each sample contributes an ``input`` row
# (N_x values) followed by an ``output`` row (N_y values).


def save_dataset(dataset, path):
    header = {
        "format": "leakyuq-dataset/1",
        "operator_tag": dataset.operator_tag,
        "N_x": dataset.n_x,
        "N_y": dataset.n_y,
        "count": len(dataset),
        "seed": dataset.seed,
        "input_scale": dataset.sampler.scale,
        "rng": RNG_ALGORITHM,
        "columns": "sample,kind,v0..v{N-1}; kind in {input, output}",
    }
    width = max(dataset.n_x, dataset.n_y)
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["sample", "kind"] + [f"v{k}" for k in range(width)])
        for k in range(len(dataset)):
            writer.writerow([k, "input"] + [repr(float(v)) for v in dataset.inputs[k]])
            writer.writerow([k, "output"] + [repr(float(v)) for v in dataset.outputs[k]])


def load_dataset(path):
    path = Path(path)
    text = path.read_text()
    first, _, body = text.partition("\n")
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:1: dataset header is not JSON ({exc.msg})") from None
    for key in ("operator_tag", "N_x", "N_y", "count", "seed"):
        if key not in header:
            raise ParseError(f"{path}:1: header is missing field {key!r}")
    n_x, n_y, count = int(header["N_x"]), int(header["N_y"]), int(header["count"])
    inputs = np.empty((count, n_x))
    outputs = np.empty((count, n_y))
    reader = csv.reader(io.StringIO(body))
    next(reader, None)
    seen = 0
    for lineno, row in enumerate(reader, start=3):
        try:
            k, kind, values = int(row[0]), row[1], np.array(row[2:], dtype=float)
        except (IndexError, ValueError):
            raise ParseError(f"{path}:{lineno}: malformed row") from None
        target, size = (inputs, n_x) if kind == "input" else (outputs, n_y)
        if kind not in ("input", "output") or values.size != size or not 0 <= k < count:
            raise ParseError(f"{path}:{lineno}: bad {kind!r} row for sample {k}")
        target[k] = values
        seen += 1
    if seen != 2 * count:
        raise ParseError(f"{path}: expected {2 * count} data rows, found {seen}")
    sampler = SamplerSpec(n_x, n_y, float(header.get("input_scale", 1.0)))
    return Dataset(inputs, outputs, header["operator_tag"], int(header["seed"]), sampler)
