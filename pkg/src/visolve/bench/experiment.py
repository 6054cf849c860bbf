"""Run schedule-by-seed experiment grids and record them in a manifest."""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import Constants, FiniteSumVI, RunTrace, natural_residual
from ..ingest import save_pgm, sha256_file
from ..problems import image_of, psnr, sigma_star_sq
from ..sampling import Schedule
from ..solvers import default_step_eg, default_step_vr, solve
from .config import BuiltProblem, ConfigError, ExperimentConfig, build_problem
from .reference import compute_reference, load_reference, reference_step, save_reference

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
REFERENCE = "reference.npz"


@dataclass
class ExperimentResult:
    directory: Path
    manifest: dict
    traces: dict = field(default_factory=dict)

    @property
    def errors(self):
        return self.manifest["errors"]


def environment():
    import scipy

    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def trace_name(solver, schedule, seed):
    return f"{solver}_{schedule}_seed{seed}.csv"


def prepare_problem(cfg: ExperimentConfig, built: BuiltProblem | None = None, cache_dir=None) -> FiniteSumVI:
    """Build the problem and make sure it carries a reference and ``sigma2``.

    A reference cached in ``cache_dir`` is reused when it was computed for the
    same problem at a tolerance at least as tight as the configured one.
    """
    problem = (built or build_problem(cfg)).problem
    if problem.reference is None:
        path = Path(cache_dir or cfg.output) / REFERENCE
        z = None
        if path.exists():
            z, tol, key = load_reference(path)
            if key != cfg.problem_key or tol > cfg.reference_tol or z.shape != (problem.dim,):
                z = None
        if z is None:
            tol = cfg.reference_tol
            z = compute_reference(problem, tol)
            path.parent.mkdir(parents=True, exist_ok=True)
            save_reference(path, z, tol, cfg.problem_key)
        problem = problem.with_reference(z, tol)
    if problem.constants.sigma2 is None:
        problem = problem.with_constants(sigma2=sigma_star_sq(problem))
    return problem


def choose_gamma(cfg: ExperimentConfig, problem: FiniteSumVI):
    if cfg.gamma != "theory":
        return float(cfg.gamma)
    c = problem.constants
    if cfg.method == "det-eg":
        return reference_step(problem)
    if not c.mu or c.mu <= 0 or not c.L:
        raise ConfigError("gamma = theory needs mu > 0; add a [regularize] mu or give a number")
    if cfg.method == "eg":
        return default_step_eg(c.mu, c.L, problem.n)
    alpha, _ = cfg.solver_config(1.0, 0).vr_params(problem.n)
    return default_step_vr(c.mu, c.L, alpha)


def cells(cfg: ExperimentConfig):
    if cfg.method == "det-eg":
        return [("full", cfg.seeds[0])]
    return [(s, seed) for s in cfg.schedules for seed in cfg.seeds]


def run_cell(problem, cfg, gamma, schedule, seed) -> RunTrace:
    sc = cfg.solver_config(gamma, seed)
    if cfg.method == "det-eg":
        tr = solve(problem, "det-eg", sc)
        tr.seed = seed
        return tr
    return solve(problem, cfg.method, sc, Schedule(schedule, problem.n, seed))


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every (schedule, seed) cell and write traces plus ``manifest.json``.

    A failing cell is recorded under ``errors`` and the others still run.
    Files are written by the calling thread only, in cell order.
    """
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    previous = _read_manifest(out)
    built = build_problem(cfg)
    problem = prepare_problem(cfg, built, out)
    ref_path = out / REFERENCE
    if not ref_path.exists() or not np.array_equal(load_reference(ref_path)[0], problem.reference):
        save_reference(ref_path, problem.reference, problem.reference_tol or 0.0, cfg.problem_key)
    gamma = choose_gamma(cfg, problem)
    grid = cells(cfg)

    def task(cell):
        try:
            return run_cell(problem, cfg, gamma, *cell), None
        except Exception as exc:  # recorded per cell
            log.exception("cell %s failed", cell)
            return None, f"{type(exc).__name__}: {exc}"

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(task, grid))
    else:
        results = [task(c) for c in grid]

    files, errors, entries, traces = {}, {}, [], {}
    files[REFERENCE] = sha256_file(ref_path)
    if built.noisy is not None:
        for name, img in (("clean.pgm", built.clean), ("noisy.pgm", built.noisy)):
            files[name] = _write(out / name, save_pgm(img))
    for (schedule, seed), (trace, err) in zip(grid, results):
        name = trace_name(cfg.method, schedule, seed)
        if err is not None:
            errors[name] = err
            continue
        traces[schedule, seed] = trace
        files[name] = _write(out / name, trace.to_csv().encode())
        entry = {"file": name, "schedule": trace.schedule, "seed": seed, "solver": trace.solver,
                 "gamma": gamma, "steps_per_epoch": trace.steps_per_epoch, "records": len(trace),
                 "oracle_calls": trace.records[-1].oracle_calls,
                 "final_residual": natural_residual(problem, trace.final)}
        if built.noisy is not None:
            u = image_of(problem, trace.final)
            img_name = f"denoised_{schedule}_seed{seed}.pgm"
            files[img_name] = _write(out / img_name, save_pgm(u))
            entry["psnr"] = psnr(u, built.clean)
            entry["image"] = img_name
        entries.append(entry)

    c = problem.constants
    manifest = {
        "config_sha256": cfg.sha256,
        "config": cfg.source,
        "environment": environment(),
        "problem": {"kind": cfg.kind, "name": problem.name, "n": problem.n, "dim": problem.dim,
                    "problem_key": cfg.problem_key, "constants": asdict(c),
                    "reference_tol": problem.reference_tol},
        "solver": {"method": cfg.method, "gamma": gamma, **cfg.solver},
        "schedules": list(cfg.schedules),
        "seeds": list(cfg.seeds),
        "traces": entries,
        "errors": errors,
        "files": files,
    }
    if built.noisy is not None:
        manifest["problem"]["noisy_psnr"] = psnr(built.noisy, built.clean)
    if previous is not None:
        same = {k for k, v in files.items() if previous.get("files", {}).get(k) == v}
        manifest["reproduced"] = sorted(same)
        changed = sorted(set(files) - same)
        if changed and previous.get("config_sha256") == cfg.sha256:
            log.warning("rerun with the same config changed %d files: %s", len(changed), changed)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json) + "\n")
    return ExperimentResult(out, manifest, traces)


def _json(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write(path, payload: bytes):
    Path(path).write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def _read_manifest(run_dir):
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError:
        return None


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {run_dir}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt manifest: {exc}") from None


def verify_manifest(run_dir):
    """Names of listed files that are missing or whose hash changed."""
    run_dir = Path(run_dir)
    bad = []
    for name, digest in read_manifest(run_dir)["files"].items():
        path = run_dir / name
        if not path.exists() or sha256_file(path) != digest:
            bad.append(name)
    return bad


def load_traces(run_dir, manifest=None):
    run_dir = Path(run_dir)
    manifest = manifest or read_manifest(run_dir)
    traces = []
    for e in manifest["traces"]:
        text = (run_dir / e["file"]).read_text()
        traces.append(RunTrace.from_csv(text, schedule=e["schedule"], seed=e["seed"], solver=e["solver"],
                                        gamma=e["gamma"], steps_per_epoch=e["steps_per_epoch"]))
    return traces


def problem_from_manifest(run_dir, manifest=None) -> FiniteSumVI:
    """Stand-in problem with the recorded constants and reference (no operator)."""
    run_dir = Path(run_dir)
    manifest = manifest or read_manifest(run_dir)
    p = manifest["problem"]
    ref = None
    if (run_dir / REFERENCE).exists():
        ref = load_reference(run_dir / REFERENCE)[0]

    def _no_oracle(i, z):
        raise RuntimeError("problem rebuilt from a manifest has no operator")

    return FiniteSumVI(n=p["n"], dim=p["dim"], component=_no_oracle, constants=Constants(**p["constants"]),
                       reference=ref, reference_tol=p.get("reference_tol"), name=p["name"])
