"""INI run configuration: problem families, grid, LP, certificate and simulation settings.

Example::

    [problem]
    dimension = 1
    lo = -0.5
    hi = 0.5
    density = uniform
    bias = linear
    alpha = 0.5
    kappa = 1
    curvature = quadratic

    [grid]
    nodes = 241
    rho = 3

Every key is optional except ``[problem] bias``; unknown sections or keys are
rejected so typos fail before any computation starts.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ValidationError
from .model import (AffineBias, Box, DelegationProblem, LinearBias, NormalMixture,
                    Quadratic, TruncatedNormal, Uniform)

SCHEMA = {
    "problem": {"dimension", "lo", "hi", "density", "mean", "sd", "weights", "means", "sds",
                "bias", "alpha", "beta", "kappa", "curvature"},
    "grid": {"nodes", "rho", "vertices", "initial_radius"},
    "lp": {"method", "max_iter", "pricing"},
    "cert": {"tol", "tol_2d", "points", "boundary_tol", "max_iters"},
    "sim": {"samples", "seed", "threads"},
}

DENSITIES = ("uniform", "truncnormal", "mixture")
BIASES = ("linear", "affine")
CURVATURES = ("quadratic",)
LP_METHODS = ("simplex", "highs")
PRICING = ("dantzig", "bland")


@dataclass(frozen=True)
class ProblemSpec:
    """Named-family description of a problem; ``build`` turns it into a DelegationProblem."""

    dimension: int = 1
    lo: tuple = (-0.5,)
    hi: tuple = (0.5,)
    density: str = "uniform"
    mean: tuple = (0.0,)
    sd: tuple = (1.0,)
    weights: tuple = ()
    means: tuple = ()
    sds: tuple = ()
    bias: str = "linear"
    alpha: float = 0.5
    beta: tuple = (0.0,)
    kappa: float = 1.0
    curvature: str = "quadratic"

    def build(self) -> DelegationProblem:
        n = self.dimension
        box = Box(_broadcast(self.lo, n, "lo"), _broadcast(self.hi, n, "hi"))
        if self.density == "uniform":
            dens = Uniform(box)
        elif self.density == "truncnormal":
            dens = TruncatedNormal(box, _broadcast(self.mean, n, "mean"),
                                   _broadcast(self.sd, n, "sd"))
        else:
            dens = NormalMixture(box, self.weights, self.means, self.sds)
        if self.bias == "linear":
            bias = LinearBias(self.alpha)
        else:
            bias = AffineBias(_broadcast(self.beta, n, "beta"))
        return DelegationProblem(box, dens, bias, self.kappa, Quadratic())

    def to_dict(self) -> dict:
        out = {"dimension": self.dimension, "lo": list(self.lo), "hi": list(self.hi),
               "density": self.density, "bias": self.bias, "kappa": self.kappa,
               "curvature": self.curvature}
        if self.density == "truncnormal":
            out.update(mean=list(self.mean), sd=list(self.sd))
        elif self.density == "mixture":
            out.update(weights=list(self.weights), means=list(self.means), sds=list(self.sds))
        if self.bias == "linear":
            out["alpha"] = self.alpha
        else:
            out["beta"] = list(self.beta)
        return out


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    nodes: int = 241
    rho: float = 3.0
    vertices: int = 64
    initial_radius: float = 0.2
    lp_method: str = "simplex"
    lp_max_iter: int = 1_000_000
    pricing: str = "dantzig"
    tol: float = 1e-6
    tol_2d: float = 5e-3
    points: int = 2001
    boundary_tol: float = 1e-3
    max_iters: int = 400
    samples: int = 1_000_000
    seed: int = 0
    threads: int = 1

    def build_problem(self) -> DelegationProblem:
        return self.problem.build()

    def with_overrides(self, alpha=None, tol=None, seed=None, threads=None) -> "RunConfig":
        cfg = self
        if alpha is not None:
            if cfg.problem.bias != "linear":
                raise ValidationError("--alpha only applies to a linear bias")
            cfg = replace(cfg, problem=replace(cfg.problem, alpha=float(alpha)))
        if tol is not None:
            cfg = replace(cfg, tol=float(tol))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if threads is not None:
            cfg = replace(cfg, threads=int(threads))
        cfg.validate()
        return cfg

    def validate(self) -> DelegationProblem:
        """Check every setting and construct the problem; raises ValidationError."""
        p = self.problem
        if p.dimension < 1:
            raise ValidationError("dimension must be at least 1")
        _choice(p.density, DENSITIES, "density")
        _choice(p.bias, BIASES, "bias")
        _choice(p.curvature, CURVATURES, "curvature")
        _choice(self.lp_method, LP_METHODS, "lp method")
        _choice(self.pricing, PRICING, "pricing")
        _positive(p.kappa, "kappa")
        if p.bias == "linear":
            _finite(p.alpha, "alpha")
        for name in ("rho", "initial_radius", "tol", "tol_2d", "boundary_tol"):
            _positive(getattr(self, name), name)
        if self.rho < 1:
            raise ValidationError("rho must be at least 1")
        for name, least in (("nodes", 3), ("vertices", 16), ("points", 11), ("max_iters", 1),
                            ("lp_max_iter", 1), ("samples", 1), ("threads", 1)):
            if getattr(self, name) < least:
                raise ValidationError(f"{name} must be at least {least}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        try:
            return self.build_problem()
        except ValidationError:
            raise
        except (ValueError, TypeError) as exc:
            raise ValidationError(str(exc)) from exc


def _choice(value, allowed, name):
    if value not in allowed:
        raise ValidationError(f"{name} must be one of {', '.join(allowed)}; got {value!r}")


def _finite(x, name):
    if not math.isfinite(x):
        raise ValidationError(f"{name} must be finite")


def _positive(x, name):
    _finite(x, name)
    if x <= 0:
        raise ValidationError(f"{name} must be positive")


def _broadcast(values, n, name) -> tuple:
    values = tuple(values)
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise ValidationError(f"{name} needs 1 or {n} entries, got {len(values)}")
    return values


def _floats(text: str, name: str) -> tuple:
    try:
        vals = tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise ValidationError(f"{name}: {exc}") from exc
    if not vals:
        raise ValidationError(f"{name} is empty")
    for v in vals:
        _finite(v, name)
    return vals


def _scalar(sec, key, conv, default):
    if key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ValidationError(f"{key}: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse and validate INI text."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from exc
    for name in parser.sections():
        if name not in SCHEMA:
            raise ValidationError(f"unknown section [{name}]")
        extra = set(parser[name]) - SCHEMA[name]
        if extra:
            raise ValidationError(f"unknown keys in [{name}]: {', '.join(sorted(extra))}")
    if "problem" not in parser or "bias" not in parser["problem"]:
        raise ValidationError("[problem] with a bias family is required")

    sec = parser["problem"]
    base = ProblemSpec()
    listed = {k: _floats(sec[k], k) for k in ("lo", "hi", "mean", "sd", "weights", "means",
                                              "sds", "beta") if k in sec}
    problem = ProblemSpec(
        dimension=_scalar(sec, "dimension", int, base.dimension),
        density=sec.get("density", base.density).strip().lower(),
        bias=sec["bias"].strip().lower(),
        alpha=_scalar(sec, "alpha", float, base.alpha),
        kappa=_scalar(sec, "kappa", float, base.kappa),
        curvature=sec.get("curvature", base.curvature).strip().lower(),
        **{k: listed.get(k, getattr(base, k)) for k in ("lo", "hi", "mean", "sd", "weights",
                                                        "means", "sds", "beta")},
    )
    if problem.bias == "affine" and "beta" not in sec:
        raise ValidationError("affine bias needs beta")
    if problem.density == "mixture" and not {"weights", "means", "sds"} <= set(sec):
        raise ValidationError("mixture density needs weights, means and sds")

    def get(section, key, conv, default):
        return _scalar(parser[section], key, conv, default) if section in parser else default

    d = RunConfig()
    cfg = RunConfig(
        problem=problem,
        nodes=get("grid", "nodes", int, d.nodes),
        rho=get("grid", "rho", float, d.rho),
        vertices=get("grid", "vertices", int, d.vertices),
        initial_radius=get("grid", "initial_radius", float, d.initial_radius),
        lp_method=get("lp", "method", str, d.lp_method).strip().lower(),
        lp_max_iter=get("lp", "max_iter", int, d.lp_max_iter),
        pricing=get("lp", "pricing", str, d.pricing).strip().lower(),
        tol=get("cert", "tol", float, d.tol),
        tol_2d=get("cert", "tol_2d", float, d.tol_2d),
        points=get("cert", "points", int, d.points),
        boundary_tol=get("cert", "boundary_tol", float, d.boundary_tol),
        max_iters=get("cert", "max_iters", int, d.max_iters),
        samples=get("sim", "samples", int, d.samples),
        seed=get("sim", "seed", int, d.seed),
        threads=get("sim", "threads", int, d.threads),
    )
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
