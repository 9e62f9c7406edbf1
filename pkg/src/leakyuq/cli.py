"""Command-line driver for the propagation workflow.

Each command reads a flat YAML config (``--config``), applies flag
overrides, and writes its artifacts into the run directory (``--out``),
recording them in ``manifest.json``. Outputs carry no timestamps, so equal
inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .copula import build_copula, load_copula, save_copula, write_samples
from .error_analysis import (
    bernstein_bound,
    bernstein_coefficient,
    bernstein_constant,
    concentration_threshold,
    error_statistics,
)
from .exceptions import LeakyUQError, ValidationError
from .linearization import load_model, save_model, sensitivity
from .marginals import marginal_laws, moments
from .montecarlo import compare_marginals, run_ensemble, write_ensemble
from .network import load as load_net
from .network import save as save_net
from .rng import RNG_ALGORITHM
from .spectral import SamplerSpec, generate_dataset, gll_grid, load_dataset, save_dataset
from .training import TrainConfig, train_adam

log = logging.getLogger("leakyuq")

BETA_SWEEP = (0.1, 0.5, 1.0, 1.5, 2.0, 3.0)
MU_PRESETS = {
    "sin": lambda x: np.sin(np.pi * x),
    "cos": lambda x: np.cos(np.pi * x),
    "zero": lambda x: np.zeros_like(x),
    "one": lambda x: np.ones_like(x),
    "linear": lambda x: x.copy(),
}
_EXPR_NAMES = {
    "pi": np.pi,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


@dataclass
class RunConfig:
    operator_tag: str = "linear"
    n_x: int = 31
    n_y: int = 31
    input_scale: float = 1.0
    n_train: int = 20000
    n_layers: int = 3
    width: int = 32
    alpha: float = 0.01
    architecture: str = "mlp"
    epochs: int = 60
    batch_size: int = 1000
    learning_rate: float = 1e-3
    mu: object = "sin"
    beta: object = 0.1
    n_samples: int = 100000
    n_copula_samples: int = 10000
    n_error_samples: int = 100000
    delta: float = 0.1
    curve_points: int = 512
    components: object = None
    seed: int = 0
    workers: int = 1

    def validate(self):
        """Raise one :class:`ValidationError` naming every bad field."""
        bad = []
        positive_int = ("n_x", "n_y", "n_train", "n_layers", "width", "epochs", "batch_size",
                        "n_samples", "n_copula_samples", "n_error_samples", "curve_points", "workers")
        for name in positive_int:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                bad.append(f"{name} (positive integer, got {value!r})")
        if isinstance(self.n_x, int) and self.n_x == 1:
            bad.append("n_x (at least 2 grid points)")
        if self.operator_tag not in ("linear", "nonlinear"):
            bad.append(f"operator_tag (linear|nonlinear, got {self.operator_tag!r})")
        if self.architecture not in ("mlp", "resnet"):
            bad.append(f"architecture (mlp|resnet, got {self.architecture!r})")
        if not isinstance(self.alpha, (int, float)) or not 0.0 < self.alpha < 1.0:
            bad.append(f"alpha (in (0, 1), got {self.alpha!r})")
        if not isinstance(self.learning_rate, (int, float)) or self.learning_rate <= 0:
            bad.append(f"learning_rate (positive, got {self.learning_rate!r})")
        if not isinstance(self.input_scale, (int, float)) or self.input_scale <= 0:
            bad.append(f"input_scale (positive, got {self.input_scale!r})")
        if not isinstance(self.delta, (int, float)) or not 0.0 < self.delta < 1.0:
            bad.append(f"delta (in (0, 1), got {self.delta!r})")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            bad.append(f"seed (non-negative integer, got {self.seed!r})")
        try:
            beta = np.asarray(self.beta, dtype=float)
            if beta.ndim > 1 or np.any(beta < 0) or not np.all(np.isfinite(beta)):
                raise ValueError
            if beta.ndim == 1 and beta.size != self.n_x:
                bad.append(f"beta (list of length n_x={self.n_x}, got {beta.size})")
        except (TypeError, ValueError):
            bad.append(f"beta (non-negative number or list, got {self.beta!r})")
        if self.architecture == "resnet" and self.n_x != self.n_y:
            bad.append("n_y (must equal n_x for a resnet)")
        try:
            self.mu_vector()
        except (ValidationError, TypeError, ValueError) as exc:
            bad.append(f"mu ({exc})")
        if self.components is not None:
            try:
                comps = self.component_list()
                if any(not 0 <= c < self.n_y for c in comps):
                    raise ValueError
            except (TypeError, ValueError):
                bad.append(f"components (indices in [0, {self.n_y}), got {self.components!r})")
        if bad:
            raise ValidationError("invalid config: " + "; ".join(bad))

    def mu_vector(self):
        """Input mean on the GLL nodes from a preset name, a list, or an expression in ``x``."""
        x = gll_grid(self.n_x).nodes
        spec = self.mu
        if isinstance(spec, str):
            if spec in MU_PRESETS:
                return MU_PRESETS[spec](x)
            try:
                code = compile(spec, "<mu>", "eval")
            except SyntaxError:
                raise ValidationError(f"cannot parse expression {spec!r}") from None
            disallowed = set(code.co_names) - set(_EXPR_NAMES) - {"x"}
            if disallowed:
                raise ValidationError(f"unknown names {sorted(disallowed)} in {spec!r}")
            value = eval(code, {"__builtins__": {}}, dict(_EXPR_NAMES, x=x))  # noqa: S307
            return np.broadcast_to(np.asarray(value, dtype=float), x.shape).copy()
        arr = np.asarray(spec, dtype=float)
        if arr.shape != x.shape:
            raise ValidationError(f"expected {x.size} values, got shape {arr.shape}")
        return arr

    def beta_value(self):
        beta = np.asarray(self.beta, dtype=float)
        return float(beta) if beta.ndim == 0 else beta

    def component_list(self):
        if self.components is None:
            return list(range(self.n_y))
        if isinstance(self.components, str):
            return [int(c) for c in self.components.split(",") if c.strip()]
        if isinstance(self.components, int):
            return [self.components]
        return [int(c) for c in self.components]

    def train_config(self):
        return TrainConfig(
            n_layers=self.n_layers,
            width=self.width,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            alpha=self.alpha,
            architecture=self.architecture,
        )


CONFIG_FIELDS = {f.name for f in fields(RunConfig)}


def load_config(path=None, overrides=None):
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(path)
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark else str(path)
            raise ValidationError(f"{where}: config is not valid YAML") from None
        data = data or {}
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: config must be a flat key-value mapping")
        unknown = sorted(set(data) - CONFIG_FIELDS)
        nested = sorted(k for k, v in data.items() if isinstance(v, dict))
        if unknown or nested:
            problems = [f"unknown key {k!r}" for k in unknown] + [f"nested value for {k!r}" for k in nested]
            raise ValidationError(f"{path}: " + "; ".join(problems))
        values.update(data)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = RunConfig(**values)
    config.validate()
    return config


class Run:
    """Output directory with its manifest."""

    def __init__(self, out, config, command):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.command = command
        self.manifest_path = self.dir / "manifest.json"
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
        else:
            self.manifest = {"format": "leakyuq-run/1", "artifacts": {}}

    def metadata(self, **extra):
        meta = {
            "command": self.command,
            "package_version": __version__,
            "rng": RNG_ALGORITHM,
            "config": _jsonable(asdict(self.config)),
        }
        meta.update(extra)
        return meta

    def path(self, name):
        return self.dir / name

    def record(self, name, kind, **extra):
        self.manifest["artifacts"][name] = dict(kind=kind, command=self.command, **_jsonable(extra))
        self.manifest["config"] = _jsonable(asdict(self.config))
        self.manifest["rng"] = RNG_ALGORITHM
        write_json(self.manifest_path, self.manifest)

    def require(self, name, flag=None):
        path = Path(flag) if flag else self.path(name)
        if not path.is_file():
            raise FileNotFoundError(path)
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, data):
    Path(path).write_text(json.dumps(_jsonable(data), indent=1, sort_keys=True) + "\n")


def _load_net(run, args):
    return load_net(run.require("net.json", getattr(args, "net", None)))


def _model(run, args):
    """Sensitivity model from ``--model``, else linearize the run's network."""
    cfg = run.config
    if getattr(args, "model", None):
        return load_model(run.require("", args.model)).with_beta(cfg.beta_value())
    return sensitivity(_load_net(run, args), cfg.mu_vector(), cfg.beta_value())


def cmd_generate_data(run, args):
    cfg = run.config
    sampler = SamplerSpec(cfg.n_x, cfg.n_y, float(cfg.input_scale))
    data = generate_dataset(cfg.n_train, cfg.operator_tag, sampler, seed=cfg.seed, workers=cfg.workers)
    save_dataset(data, run.path("dataset.csv"))
    run.record("dataset.csv", "dataset", count=len(data), operator_tag=cfg.operator_tag, seed=cfg.seed)
    return f"wrote {len(data)} samples to {run.path('dataset.csv')}"


def cmd_train(run, args):
    cfg = run.config
    data = load_dataset(run.require("dataset.csv", args.data))
    net = train_adam(data, cfg.train_config())
    net.metadata["run"] = run.metadata()
    save_net(net, run.path("net.json"))
    summary = net.metadata["training"]
    run.record("net.json", "network", validation_mse=summary.get("validation_mse"))
    return f"trained L={cfg.n_layers} N={cfg.width}; validation mse {summary.get('validation_mse', float('nan')):.3e}"


def cmd_propagate(run, args):
    cfg = run.config
    net = _load_net(run, args)
    mu = cfg.mu_vector()
    betas = BETA_SWEEP if args.sweep else (cfg.beta_value(),)
    model = sensitivity(net, mu, betas[0])
    save_model(model, run.path("sensitivity.json"))
    run.record("sensitivity.json", "sensitivity", flags=list(model.flags))
    for beta in betas:
        name = "moments.json" if not args.sweep else f"moments_beta{beta:g}.json"
        mom = moments(model.with_beta(beta))
        write_json(run.path(name), {"moments": mom.to_dict(), "beta": beta, "metadata": run.metadata()})
        run.record(name, "moments", beta=beta)
    return f"linearized at mu; flags={list(model.flags)}"


def cmd_pdf(run, args):
    cfg = run.config
    model = _model(run, args)
    laws = marginal_laws(model)
    notes = []
    for j in cfg.component_list():
        law = laws[j]
        if law.is_degenerate:
            name = f"pdf_g{j}.point_mass.json"
            write_json(run.path(name), {"component": j, "point_mass_at": law.center, "metadata": run.metadata()})
            run.record(name, "point-mass", component=j)
            notes.append(f"g{j}: degenerate law (point mass at {law.center:.6g})")
            continue
        name = f"pdf_g{j}.csv"
        law.write_curve(run.path(name), cfg.curve_points)
        run.record(name, "marginal-curve", component=j, support=list(law.support), K=law.K)
    for note in notes:
        print(f"notice: {note}", file=sys.stderr)
    return f"wrote marginal curves for {len(cfg.component_list())} components"


def cmd_copula(run, args):
    cfg = run.config
    cop = build_copula(_model(run, args), workers=cfg.workers)
    cop.metadata.update(run.metadata())
    save_copula(cop, run.path("copula.json"))
    run.record("copula.json", "copula", clipped_pairs=len(cop.rho_flags))
    return f"fitted copula on {cop.dim} components ({len(cop.rho_flags)} clipped pairs)"


def cmd_sample(run, args):
    cfg = run.config
    cop = load_copula(run.require("copula.json", args.copula))
    comps = cfg.component_list()
    draws = cop.sample(cfg.n_copula_samples, seed=cfg.seed, workers=cfg.workers)[:, comps]
    write_samples(draws, run.path("samples.csv"))
    run.record("samples.csv", "copula-samples", n=cfg.n_copula_samples, components=comps, seed=cfg.seed)
    return f"wrote {cfg.n_copula_samples} copula draws"


def cmd_bounds(run, args):
    cfg = run.config
    net = _load_net(run, args)
    mu = cfg.mu_vector()
    beta = cfg.beta_value()
    if np.ndim(beta):
        raise ValidationError("bounds need a scalar beta")
    stats = error_statistics(net, mu, beta, cfg.n_error_samples, seed=cfg.seed, workers=cfg.workers)
    comps = cfg.component_list()
    coeff = bernstein_coefficient(net.n_inputs, cfg.delta)
    report = {
        "beta": beta,
        "delta": cfg.delta,
        "bernstein_coefficient": coeff,
        "norm_threshold": concentration_threshold(net.n_inputs, beta, cfg.delta),
        "components": [
            {
                "component": j,
                "deterministic_bound": float(stats.bounds[j]),
                "bernstein_bound": bernstein_bound(
                    net.n_inputs, beta, cfg.delta, bernstein_constant(net, mu, j)
                ),
                "max_error": float(stats.max_error[j]),
                "mean_error": float(stats.mean_error[j]),
                "violations": int(stats.violations[j]),
            }
            for j in comps
        ],
        "statistics": stats.to_dict(),
        "metadata": run.metadata(),
    }
    write_json(run.path("bounds.json"), report)
    stats.write_histograms(run.path("error_histograms.csv"))
    run.record("bounds.json", "bounds-report", violations=int(stats.violations.sum()))
    run.record("error_histograms.csv", "error-histograms", n=cfg.n_error_samples)
    return f"deterministic bound violations: {int(stats.violations.sum())}"


def cmd_compare(run, args):
    cfg = run.config
    net = _load_net(run, args)
    mu = cfg.mu_vector()
    beta = cfg.beta_value()
    model = sensitivity(net, mu, beta)
    ens = run_ensemble(net, mu, beta, cfg.n_samples, seed=cfg.seed, workers=cfg.workers)
    report = compare_marginals(ens, marginal_laws(model), cfg.component_list(), moments(model))
    report["metadata"] = run.metadata(net_fingerprint=ens.net_fingerprint)
    write_json(run.path("compare.json"), report)
    run.record("compare.json", "comparison", n=cfg.n_samples)
    if args.save_ensemble:
        write_ensemble(ens, run.path("ensemble.csv"))
        run.record("ensemble.csv", "ensemble", n=cfg.n_samples)
    l1 = [r["l1"] for r in report["components"] if r["l1"] is not None]
    worst = max(l1) if l1 else float("nan")
    return f"max L1 {worst:.4f} over {len(l1)} components"


COMMANDS = {
    "generate-data": (cmd_generate_data, "sample operator input/output pairs"),
    "train": (cmd_train, "fit a network to the run's dataset"),
    "propagate": (cmd_propagate, "linearize at mu and write moments"),
    "pdf": (cmd_pdf, "write analytic marginal pdf/cdf curves"),
    "copula": (cmd_copula, "fit the Gaussian copula"),
    "sample": (cmd_sample, "draw from a fitted copula"),
    "bounds": (cmd_bounds, "exact-error statistics and bounds"),
    "compare": (cmd_compare, "analytic marginals against Monte Carlo"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="leakyuq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat YAML config file")
    common.add_argument("--out", default="run", help="run directory (default: ./run)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--components", help="comma-separated output indices")
    common.add_argument("--beta", type=float, help="override a scalar beta")
    common.add_argument("--workers", type=int, help="threads for sampling")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "train":
            p.add_argument("--data", help="dataset file (default: <out>/dataset.csv)")
        if name in ("propagate", "pdf", "copula", "bounds", "compare"):
            p.add_argument("--net", help="network file (default: <out>/net.json)")
        if name in ("pdf", "copula"):
            p.add_argument("--model", help="sensitivity model file instead of a network")
        if name == "propagate":
            p.add_argument("--sweep", action="store_true", help=f"moments for beta in {BETA_SWEEP}")
        if name == "sample":
            p.add_argument("--copula", help="copula file (default: <out>/copula.json)")
        if name == "compare":
            p.add_argument("--save-ensemble", action="store_true", help="also write ensemble.csv")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        overrides = {"seed": args.seed, "components": args.components, "beta": args.beta, "workers": args.workers}
        config = load_config(args.config, overrides)
        run = Run(args.out, config, args.command)
        log.info("%s: config %s", args.command, json.dumps(_jsonable(asdict(config)), sort_keys=True))
        message = COMMANDS[args.command][0](run, args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (LeakyUQError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
