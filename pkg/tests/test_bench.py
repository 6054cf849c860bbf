import json
from pathlib import Path

import numpy as np
import pytest

from visolve.bench import (
    ConfigError,
    ReferenceError,
    check_theorem_bounds,
    compute_reference,
    emit_plot_data,
    fit_rate,
    load_traces,
    parse_config,
    read_plot_data,
    read_summary,
    run_experiment,
    verify_manifest,
)
from visolve.bench import experiment as experiment_mod
from visolve.bench.plotdata import series
from visolve.core import RunTrace, TraceRecord, natural_residual
from visolve.ingest import add_gaussian_noise, shapes_image
from visolve.problems import AffineSaddleSpec, DenoisingSpec, make_affine_saddle, make_denoising
from visolve.sampling import new_schedule
from visolve.solvers import SolverConfig, default_step_vr, run_deterministic_eg, run_eg, run_vr_eg

AFFINE_CFG = """
[problem]
kind = affine
dim = 6
n = 4
mu = 1
L = 5
seed = 3

[solver]
method = eg
gamma = theory
epochs = 5

[experiment]
schedules = rr, so, independent
seed_count = 3
output = out
"""


# -- reference ----------------------------------------------------------------

def _without_reference(p):
    return p.__class__(**{**p.__dict__, "reference": None, "reference_tol": None})


def test_reference_matches_linear_solve(affine_small):
    z = compute_reference(_without_reference(affine_small), 1e-11)
    assert np.max(np.abs(z - affine_small.reference)) < 1e-8


def test_reference_denoising_small():
    p = make_denoising(DenoisingSpec(add_gaussian_noise(shapes_image(16), 0.05, 50), batch=8))
    z = compute_reference(p, 1e-8)
    assert natural_residual(p, z) < 1e-8
    q = p.with_reference(z, 1e-8)
    assert natural_residual(q, q.reference) <= q.reference_tol


def test_reference_idempotent(affine_small):
    p = _without_reference(affine_small)
    z = compute_reference(p, 1e-10)
    assert np.array_equal(compute_reference(p, 1e-10, z0=z), z)


def test_reference_cap_is_reported(affine_small):
    with pytest.raises(ReferenceError) as err:
        compute_reference(_without_reference(affine_small), 1e-14, max_iter=5)
    assert err.value.iterations == 5
    with pytest.raises(ValueError):
        compute_reference(affine_small, 0.0)


# -- rate fits ----------------------------------------------------------------

def test_fit_geometric():
    fit = fit_rate(0.99 ** np.arange(200) * 3.0)
    assert fit.rho == pytest.approx(0.99, abs=1e-6)
    assert fit.r2 == pytest.approx(1.0)
    assert (fit.start, fit.stop) == (0, 200)


def test_fit_constant():
    fit = fit_rate(np.full(50, 0.125))
    assert fit.rho == 1.0 and fit.plateau == 0.125


def test_fit_deterministic_contraction(affine_small):
    gamma = 1 / (6 * affine_small.constants.L)
    tr = run_deterministic_eg(affine_small, SolverConfig(gamma=gamma, epochs=400))
    fit = fit_rate(tr)
    mu = affine_small.constants.mu
    assert fit.rho <= 1 - 0.1 * gamma * mu
    assert fit.contracting


def test_fit_plateau_is_last_decile_median():
    vals = np.concatenate([np.logspace(0, -3, 90), np.full(10, 2e-3)])
    vals[-1] = 1.0
    assert fit_rate(vals).plateau == 2e-3


def test_fit_window_errors():
    vals = np.concatenate([0.5 ** np.arange(20), [0.0, 0.0]])
    with pytest.raises(ValueError, match="pre-plateau"):
        fit_rate(vals, window=(0, 22))
    assert fit_rate(vals).stop == 20
    with pytest.raises(ValueError):
        fit_rate(vals, window=(0, 5))
    with pytest.raises(ValueError):
        fit_rate(vals, window=(10, 40))
    tr = RunTrace(records=[TraceRecord(0, 0, 0)] * 12)
    with pytest.raises(ValueError):
        fit_rate(tr)


def test_fit_uses_iterations_of_trace(affine_small):
    tr = run_eg(affine_small, new_schedule("rr", affine_small.n, 0), SolverConfig(gamma=0.01, epochs=30, cadence="epoch"))
    fit = fit_rate(tr, window=(0, 10))
    vals = tr.column("sq_dist")[:10]
    slope = np.polyfit(np.arange(10) * affine_small.n, np.log(vals), 1)[0]
    assert fit.rho == pytest.approx(np.exp(slope))


# -- theorem bounds -----------------------------------------------------------

def _vr_traces(p, epochs, seeds=20, **kw):
    alpha = 1 - 1 / p.n
    gamma = default_step_vr(p.constants.mu, p.constants.L, alpha)
    return [run_vr_eg(p, new_schedule("rr", p.n, s), SolverConfig(gamma=gamma, epochs=epochs, seed=s,
                                                                cadence="epoch", **kw))
            for s in range(seeds)]


def test_vr_bound_passes(affine_thm):
    rep = check_theorem_bounds(_vr_traces(affine_thm, 40), affine_thm, slack=1.05)
    assert rep.passed and rep.kind == "vr-lyapunov" and rep.step_ok
    assert len(rep.mean) == 41


def test_eg_plateau_bound_passes(affine_thm):
    p = affine_thm
    gamma = min(1 / (2 * p.n), 1 / (6 * p.constants.L))
    traces = [run_eg(p, new_schedule("rr", p.n, s), SolverConfig(gamma=gamma, epochs=60)) for s in range(20)]
    rep = check_theorem_bounds(traces, p, slack=2.0)
    assert rep.passed and rep.kind == "eg-neighbourhood"
    assert len(rep.mean) == 61  # epoch boundaries only


def test_single_component_vr_is_deterministic_contraction():
    p = make_affine_saddle(AffineSaddleSpec(dim=5, n=1, mu=1, L=3, seed=4))
    gamma = 0.5 * 1 / (6 * 9)
    traces = [run_vr_eg(p, new_schedule("rr", 1, s), SolverConfig(gamma=gamma, epochs=300, p=1.0, alpha=0.5, seed=s))
              for s in range(3)]
    assert all(t.to_csv() == traces[0].to_csv() for t in traces)
    rep = check_theorem_bounds(traces, p, SolverConfig(gamma=gamma, p=1.0, alpha=0.5), slack=1.0, min_seeds=1)
    assert rep.passed and rep.step_ok


def test_bounds_monotone_in_slack(affine_thm):
    rep = check_theorem_bounds(_vr_traces(affine_thm, 10, seeds=20), affine_thm, slack=1.0)
    w = rep.worst_ratio
    verdicts = []
    for s in np.linspace(0.5 * w, 2 * w, 25):
        rep.slack = s
        verdicts.append(rep.passed)
    assert verdicts == sorted(verdicts)
    assert not verdicts[0] and verdicts[-1]


def test_bounds_preconditions(affine_thm):
    traces = _vr_traces(affine_thm, 2, seeds=3)
    with pytest.raises(ValueError, match="seeds"):
        check_theorem_bounds(traces, affine_thm)
    bare = affine_thm.__class__(**{**affine_thm.__dict__, "reference": None})
    with pytest.raises(ValueError, match="reference"):
        check_theorem_bounds(traces, bare, min_seeds=1)


def test_bound_report_csv(affine_thm):
    rep = check_theorem_bounds(_vr_traces(affine_thm, 3, seeds=2), affine_thm, min_seeds=2)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "iteration,mean,bound,ratio" and len(lines) == 5
    assert "PASS" in rep.summary() or "FAIL" in rep.summary()


# -- plot data ----------------------------------------------------------------

def _mini(schedule, seed, vals, calls=(0, 2, 4)):
    tr = RunTrace(schedule=schedule, seed=seed, solver="eg", steps_per_epoch=1)
    for k, (c, v) in enumerate(zip(calls, vals)):
        tr.append(TraceRecord(k, 0 if k == 0 else 1, c, v, None, v / 2))
    return tr


def test_plot_rows_count():
    traces = [_mini(s, seed, [1.0, 0.5, 0.25]) for s in ("rr", "so") for seed in (50, 51)]
    long_csv, _ = emit_plot_data(traces)
    rows = long_csv.splitlines()[1:]
    assert sum(",sq_dist," in r for r in rows) == 12
    assert sum(",residual," in r for r in rows) == 12
    assert long_csv.splitlines()[0] == "schedule,seed,oracle_calls,metric,value,iteration"


def test_plot_identical_traces_have_zero_iqr():
    _, summary = emit_plot_data([_mini("rr", s, [1.0, 0.3, 0.1]) for s in range(5)])
    for rows in read_summary(summary)["sq_dist"].values():
        for _, med, lo, hi in rows:
            assert lo == hi == med


def test_plot_roundtrip(affine_small):
    traces = [run_eg(affine_small, new_schedule(k, affine_small.n, s), SolverConfig(gamma=0.01, epochs=3))
              for k in ("rr", "independent") for s in (1, 2)]
    back = read_plot_data(emit_plot_data(traces)[0])
    assert back == {(t.schedule, t.seed): series(t) for t in traces}


def test_plot_inconsistent_metrics():
    a = _mini("rr", 1, [1.0, 0.5, 0.2])
    b = RunTrace(schedule="rr", seed=2)
    b.append(TraceRecord(0, 0, 0, 1.0))
    with pytest.raises(ValueError, match="inconsistent"):
        emit_plot_data([a, b])


def test_plot_aligns_unequal_call_grids():
    a = _mini("vr", 1, [1.0, 0.5, 0.25], calls=(4, 10, 16))
    b = _mini("vr", 2, [1.0, 0.3, 0.1], calls=(4, 12, 20))
    summary = read_summary(emit_plot_data([a, b])[1])["sq_dist"]["vr"]
    assert [r[0] for r in summary] == [4, 10, 16]
    assert summary[1][1] == pytest.approx(np.median([0.5, 1.0 + (0.3 - 1.0) * 6 / 8]))


# -- config and experiments ---------------------------------------------------

def test_config_defaults():
    cfg = parse_config("[problem]\nkind = affine\ndim = 3\nn = 2\n")
    assert cfg.seeds == (50,) and cfg.schedules == ("rr",) and cfg.method == "eg" and cfg.gamma == "theory"
    cfg = parse_config(AFFINE_CFG)
    assert cfg.seeds == (50, 51, 52)
    cfg = parse_config(AFFINE_CFG.replace("seed_count = 3", "seeds = 7, 9"))
    assert cfg.seeds == (7, 9)


@pytest.mark.parametrize("edit", [
    ("kind = affine", "kind = spiral"),
    ("dim = 6", "dims = 6"),
    ("method = eg", "method = adam"),
    ("gamma = theory", "gamma = fast"),
    ("gamma = theory", "gamma = -1"),
    ("schedules = rr, so, independent", "schedules = rr, random"),
    ("schedules = rr, so, independent", "schedules = ,"),
    ("seed_count = 3", "seed_count = 0"),
    ("seed_count = 3", "seeds = 1, 1"),
    ("epochs = 5", "epochs = five"),
    ("[experiment]", "[experiments]"),
    ("epochs = 5", "epochs = 5\np = 2"),
])
def test_config_errors(edit):
    with pytest.raises(ConfigError):
        parse_config(AFFINE_CFG.replace(*edit))


def test_config_missing_data(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("[problem]\nkind = denoise\nimage = nope.pgm\n", tmp_path)
    with pytest.raises(ConfigError):
        parse_config("[problem]\nkind = adversarial\ndata = nope.libsvm\n", tmp_path)
    parse_config("[problem]\nkind = adversarial\ndata = mushrooms\n", tmp_path)  # fetchable


def _run(tmp_path, text=AFFINE_CFG, name="cfg.ini"):
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / name
    path.write_text(text)
    return run_experiment(parse_config(text, tmp_path))


def test_experiment_files(tmp_path):
    res = _run(tmp_path)
    out = tmp_path / "out"
    csvs = sorted(p.name for p in out.glob("*.csv"))
    assert len(csvs) == 9 and "eg_so_seed51.csv" in csvs
    m = json.loads((out / "manifest.json").read_text())
    assert set(m["files"]) == set(csvs) | {"reference.npz"}
    assert m["config_sha256"] == res.manifest["config_sha256"]
    assert m["errors"] == {} and len(m["traces"]) == 9
    assert {"python", "numpy"} <= set(m["environment"])
    assert verify_manifest(out) == []
    back = load_traces(out)
    assert [t.to_csv() for t in back] == [t.to_csv() for t in res.traces.values()]


def test_experiment_rerun_identical(tmp_path):
    _run(tmp_path)
    first = {p.name: p.read_bytes() for p in (tmp_path / "out").glob("*.csv")}
    res = _run(tmp_path)
    assert {p.name: p.read_bytes() for p in (tmp_path / "out").glob("*.csv")} == first
    assert set(res.manifest["reproduced"]) == set(res.manifest["files"])


def test_experiment_concurrent_cells_match(tmp_path):
    a = _run(tmp_path / "a")
    b = _run(tmp_path / "b", AFFINE_CFG.replace("output = out", "output = out\njobs = 3"))
    assert a.manifest["files"] == b.manifest["files"]


def test_experiment_cell_error_recorded(tmp_path, monkeypatch):
    real = experiment_mod.run_cell

    def flaky(problem, cfg, gamma, schedule, seed):
        if (schedule, seed) == ("so", 51):
            raise FloatingPointError("boom")
        return real(problem, cfg, gamma, schedule, seed)

    monkeypatch.setattr(experiment_mod, "run_cell", flaky)
    res = _run(tmp_path)
    assert res.errors == {"eg_so_seed51.csv": "FloatingPointError: boom"}
    assert len(res.traces) == 8


def test_experiment_detects_tampering(tmp_path):
    _run(tmp_path)
    f = tmp_path / "out" / "eg_rr_seed50.csv"
    f.write_text(f.read_text() + "\n")
    assert verify_manifest(tmp_path / "out") == ["eg_rr_seed50.csv"]


def test_experiment_det_and_vr(tmp_path):
    res = _run(tmp_path, AFFINE_CFG.replace("method = eg", "method = det-eg"))
    assert list(res.traces) == [("full", 50)]
    res = _run(tmp_path / "vr", AFFINE_CFG.replace("method = eg", "method = vr-eg"))
    assert all(t.solver == "vr-eg" for t in res.traces.values())
    assert res.manifest["solver"]["gamma"] == pytest.approx(default_step_vr(1.0, 5.0, 0.75), rel=1e-6)


def test_experiment_denoise_writes_images(tmp_path):
    text = """
[problem]
kind = denoise
size = 16
batch = 8

[solver]
method = eg
gamma = 0.002
epochs = 3

[experiment]
schedules = rr
reference_tol = 1e-6
output = den
"""
    res = _run(tmp_path, text)
    names = set(res.manifest["files"])
    assert {"clean.pgm", "noisy.pgm", "denoised_rr_seed50.pgm", "reference.npz"} <= names
    assert "psnr" in res.manifest["traces"][0]


def test_experiment_theory_step_needs_mu(tmp_path):
    text = "[problem]\nkind = denoise\nsize = 16\n[experiment]\nreference_tol = 1e-4\noutput = d\n"
    with pytest.raises(ConfigError, match="mu > 0"):
        _run(tmp_path, text)
    res = _run(tmp_path, text + "[regularize]\nmu = 0.5\n[solver]\nepochs = 1\n")
    assert res.manifest["problem"]["constants"]["mu"] == 0.5


def test_reference_cache_reused(tmp_path):
    text = AFFINE_CFG + "[regularize]\nmu = 0.5\n"
    _run(tmp_path, text)
    ref = tmp_path / "out" / "reference.npz"
    stamp = ref.stat().st_mtime_ns
    _run(tmp_path, text)
    assert ref.stat().st_mtime_ns == stamp
