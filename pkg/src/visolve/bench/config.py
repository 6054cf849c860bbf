"""Experiment configuration files.

A config is an INI file with four sections::

    [problem]
    kind = affine            ; affine | denoise | adversarial
    dim = 20
    n = 10

    [regularize]
    mu = 0                   ; > 0 adds mu (z - z0) to every component

    [solver]
    method = eg              ; eg | vr-eg | det-eg
    gamma = theory           ; a number or "theory"
    epochs = 100

    [experiment]
    schedules = rr, so, independent
    seed_count = 20          ; seeds 50, 51, ...; or give seeds = 3, 7, 11
    output = runs/affine

Unknown keys are rejected so that typos do not silently fall back to defaults.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import FiniteSumVI
from ..ingest import (
    DATASETS,
    add_gaussian_noise,
    dataset_path,
    load_dataset,
    load_pgm,
    parse_libsvm,
    shapes_image,
)
from ..problems import (
    AdversarialSpec,
    AffineSaddleSpec,
    DenoisingSpec,
    PROBLEM_KINDS,
    make_adversarial,
    make_affine_saddle,
    make_denoising,
    regularize_operator,
    synthetic_regression,
)
from ..sampling import ScheduleKind
from ..solvers import SOLVERS, SolverConfig

FIRST_SEED = 50


class ConfigError(ValueError):
    pass


PROBLEM_KEYS = {
    "affine": {"dim": int, "n": int, "mu": float, "L": float, "seed": int, "offset_scale": float},
    "denoise": {"image": str, "size": int, "noise": float, "noise_seed": int, "lam": float,
                "batch": str, "h": float},
    "adversarial": {"data": str, "data_dir": str, "samples": int, "features": int, "noise": float,
                    "data_seed": int, "lam": float, "beta": float, "radius": float, "batch": int,
                    "audit_samples": int, "seed": int},
}
SOLVER_KEYS = {"method": str, "gamma": str, "epochs": int, "alpha": float, "p": float, "cadence": str,
               "max_oracle_calls": int, "residual_tol": float, "residual_gamma": float}
EXPERIMENT_KEYS = {"schedules": str, "seeds": str, "seed_count": int, "output": str, "reference_tol": float, "jobs": int}
REGULARIZE_KEYS = {"mu": float}


@dataclass
class ExperimentConfig:
    problem: dict
    method: str = "eg"
    gamma: object = "theory"
    solver: dict = field(default_factory=dict)
    regularize_mu: float = 0.0
    schedules: tuple = ("rr",)
    seeds: tuple = (FIRST_SEED,)
    output: Path = Path("runs")
    reference_tol: float = 1e-8
    jobs: int = 1
    source: str = ""
    base_dir: Path = Path(".")

    @property
    def kind(self):
        return self.problem["kind"]

    @property
    def sha256(self):
        return hashlib.sha256(self.source.encode()).hexdigest()

    @property
    def problem_key(self):
        """Hash of everything that determines the problem (not the solver)."""
        items = sorted(self.problem.items()) + [("regularize_mu", self.regularize_mu)]
        return hashlib.sha256(repr(items).encode()).hexdigest()[:16]

    def solver_config(self, gamma, seed):
        return SolverConfig(gamma=gamma, seed=seed, **self.solver)


def _typed(section, name, schema):
    out = {}
    for key, raw in section.items():
        if key not in schema:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        try:
            out[key] = schema[key](raw)
        except ValueError:
            raise ConfigError(f"[{name}] {key} = {raw!r} is not a valid {schema[key].__name__}") from None
    return out


def _parse_seeds(exp):
    if "seeds" in exp and "seed_count" in exp:
        raise ConfigError("give either seeds or seed_count, not both")
    if "seeds" in exp:
        try:
            vals = [int(t) for t in exp["seeds"].replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"seeds must be integers, got {exp['seeds']!r}") from None
    else:
        vals = list(range(FIRST_SEED, FIRST_SEED + exp.get("seed_count", 1)))
    if not vals:
        raise ConfigError("at least one seed is required")
    if len(set(vals)) != len(vals):
        raise ConfigError("seeds must be distinct")
    return tuple(vals)


def parse_config(text, base_dir=".") -> ExperimentConfig:
    """Parse config text; relative paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    extra = set(cp.sections()) - {"problem", "regularize", "solver", "experiment"}
    if extra:
        raise ConfigError(f"unknown sections {sorted(extra)}")
    if not cp.has_section("problem"):
        raise ConfigError("missing [problem] section")
    prob = dict(cp["problem"])
    kind = prob.pop("kind", None)
    if kind not in PROBLEM_KINDS:
        raise ConfigError(f"[problem] kind must be one of {', '.join(PROBLEM_KINDS)}, got {kind!r}")
    problem = {"kind": kind, **_typed(prob, "problem", PROBLEM_KEYS[kind])}
    solver = _typed(cp["solver"], "solver", SOLVER_KEYS) if cp.has_section("solver") else {}
    method = solver.pop("method", "eg")
    if method not in SOLVERS:
        raise ConfigError(f"[solver] method must be one of {', '.join(SOLVERS)}")
    gamma = solver.pop("gamma", "theory")
    if gamma != "theory":
        try:
            gamma = float(gamma)
        except ValueError:
            raise ConfigError(f"[solver] gamma must be a number or 'theory', got {gamma!r}") from None
        if not gamma > 0:
            raise ConfigError("[solver] gamma must be positive")
    reg = _typed(cp["regularize"], "regularize", REGULARIZE_KEYS) if cp.has_section("regularize") else {}
    exp = _typed(cp["experiment"], "experiment", EXPERIMENT_KEYS) if cp.has_section("experiment") else {}
    schedules = tuple(s.strip() for s in exp.get("schedules", "rr").split(",") if s.strip())
    if not schedules:
        raise ConfigError("at least one schedule is required")
    for s in schedules:
        try:
            ScheduleKind.parse(s)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    base_dir = Path(base_dir)
    cfg = ExperimentConfig(
        problem=problem,
        method=method,
        gamma=gamma,
        solver=solver,
        regularize_mu=reg.get("mu", 0.0),
        schedules=schedules,
        seeds=_parse_seeds(exp),
        output=base_dir / exp.get("output", "runs"),
        reference_tol=exp.get("reference_tol", 1e-8),
        jobs=max(1, exp.get("jobs", 1)),
        source=text,
        base_dir=base_dir,
    )
    try:
        cfg.solver_config(1.0, FIRST_SEED)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[solver] {exc}") from None
    _check_data(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config(path.read_text(), path.parent)


def _check_data(cfg):
    p = cfg.problem
    if cfg.kind == "denoise":
        img = p.get("image", "shapes")
        if img != "shapes" and not (cfg.base_dir / img).is_file():
            raise ConfigError(f"image file {img} not found")
    elif cfg.kind == "adversarial":
        data = p.get("data", "synthetic")
        if data != "synthetic" and data not in DATASETS and not (cfg.base_dir / data).is_file():
            raise ConfigError(f"dataset {data!r} is neither a known name nor an existing file")


@dataclass
class BuiltProblem:
    problem: FiniteSumVI
    clean: Optional[np.ndarray] = None
    noisy: Optional[np.ndarray] = None


def build_problem(cfg: ExperimentConfig) -> BuiltProblem:
    """Instantiate the configured problem (without a computed reference)."""
    p = dict(cfg.problem)
    kind = p.pop("kind")
    out = BuiltProblem(None)
    if kind == "affine":
        problem = make_affine_saddle(AffineSaddleSpec(**p))
    elif kind == "denoise":
        img = p.pop("image", "shapes")
        size = p.pop("size", 64)
        clean = shapes_image(size) if img == "shapes" else load_pgm(cfg.base_dir / img)
        noisy = add_gaussian_noise(clean, p.pop("noise", 0.05), p.pop("noise_seed", FIRST_SEED))
        batch = p.pop("batch", "8")
        batch = None if batch.lower() in ("none", "0", "") else int(batch)
        problem = make_denoising(DenoisingSpec(noisy, batch=batch, **p))
        out.clean, out.noisy = clean, noisy
    else:
        data = p.pop("data", "synthetic")
        data_dir = cfg.base_dir / p.pop("data_dir", "data")
        gen = {k: p.pop(k) for k in ("samples", "features", "noise", "data_seed") if k in p}
        if data == "synthetic":
            X, y = synthetic_regression(gen.get("samples", 512), gen.get("features", 50),
                                        gen.get("noise", 0.1), gen.get("data_seed", 0))
        elif data in DATASETS:
            if not dataset_path(data, data_dir).exists():
                raise ConfigError(f"dataset {data} not downloaded; run `visolve fetch-data {data}`")
            ds = load_dataset(data, data_dir)
            X, y = ds.X, ds.y
        else:
            ds = parse_libsvm(cfg.base_dir / data)
            X, y = ds.X, ds.y
        problem = make_adversarial(AdversarialSpec(X, y, **p))
    if cfg.regularize_mu > 0:
        problem = regularize_operator(problem, cfg.regularize_mu)
    out.problem = problem
    return out
