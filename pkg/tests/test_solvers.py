import math

import numpy as np
import pytest

from visolve.core import FiniteSumVI, evaluate_full, sq_distance
from visolve.problems import AffineSaddleSpec, affine_problem, make_affine_saddle
from visolve.prox import BallIndicator
from visolve.sampling import new_schedule
from visolve.solvers import (
    SolverConfig,
    VRState,
    default_step_eg,
    default_step_eg_tuned,
    default_step_vr,
    eg_step,
    run_deterministic_eg,
    run_eg,
    run_vr_eg,
    solve,
    vr_eg_step,
    vr_estimator,
)

from conftest import Spy, rotation


def scalar_identity():
    return FiniteSumVI(n=1, dim=1, component=lambda i, z: z)


def test_eg_step_null_operator():
    p = FiniteSumVI(n=1, dim=3, component=lambda i, z: np.zeros(3))
    z = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(eg_step(p, z, 0, 0.5), z)


def test_eg_step_scalar():
    assert eg_step(scalar_identity(), np.array([1.0]), 0, 0.1)[0] == pytest.approx(0.91, abs=1e-15)


def test_eg_contracts_on_rotation():
    p = rotation()
    z = np.array([1.0, 0.5])
    forward = z - 0.1 * p.component(0, z)
    assert np.linalg.norm(eg_step(p, z, 0, 0.1)) < np.linalg.norm(z) < np.linalg.norm(forward)


def test_eg_step_two_calls(affine_small):
    spy = Spy(affine_small.component)
    p = FiniteSumVI(n=affine_small.n, dim=affine_small.dim, component=spy)
    eg_step(p, np.ones(p.dim), 2, 0.01)
    assert spy.calls == [2, 2]


# -- step sizes ---------------------------------------------------------------

def test_step_eg():
    assert default_step_eg(1, 10, 1) == 1 / 60
    assert default_step_eg(1, 1, 100) == 1 / 200
    assert default_step_eg(3.0, 30.0, 4) == pytest.approx(default_step_eg(1, 10, 4) / 3)
    with pytest.raises(ValueError):
        default_step_eg(0, 1, 1)


def _tuned_reference(mu, L, n, T, d0, s2):
    # independent transcription
    return min(1 / (2 * mu * n), 1 / (6 * L), 2 * math.log(max(2, mu * mu * d0 * T / (512 * n * n * s2))) / (mu * T))


def test_step_eg_tuned():
    assert default_step_eg_tuned(1, 1, 1, 1000, 1, 1) == _tuned_reference(1, 1, 1, 1000, 1, 1)
    assert default_step_eg_tuned(1, 1, 1, 1000, 1, 1) == pytest.approx(2 * math.log(2) / 1000)
    # huge variance: the max resolves to 2
    assert default_step_eg_tuned(1, 1, 1, 50, 1, 1e12) == pytest.approx(2 * math.log(2) / 50)
    # long horizons: the third term wins and vanishes
    g = [default_step_eg_tuned(1, 1, 1, T, 1, 1e-3) for T in (1e4, 1e6, 1e8)]
    assert g[0] > g[1] > g[2]
    assert g[2] == _tuned_reference(1, 1, 1, 1e8, 1, 1e-3)
    with pytest.raises(ValueError):
        default_step_eg_tuned(1, 1, 1, 10, 0, 1)


def test_step_vr():
    assert default_step_vr(1, 1, 1 - 1 / 10) == pytest.approx(1 / 60, rel=1e-14)
    assert default_step_vr(2, 2, 0.5) == 1 / 24
    assert default_step_vr(1, 1, 1 - 1e-12) < 1e-12
    with pytest.raises(ValueError):
        default_step_vr(1, 1, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(gamma=0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1, p=0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1, alpha=1)
    with pytest.raises(ValueError):
        SolverConfig(gamma=1, cadence="weekly")
    assert SolverConfig(gamma=1).vr_params(10) == (0.9, 0.1)


# -- plain runs ---------------------------------------------------------------

def test_n1_schedules_match_deterministic():
    p = make_affine_saddle(AffineSaddleSpec(dim=5, n=1, mu=1, L=3, seed=0))
    cfg = SolverConfig(gamma=0.05, epochs=30)
    det = run_deterministic_eg(p, cfg)
    for kind in ("rr", "so", "cyclic", "independent"):
        tr = run_eg(p, new_schedule(kind, 1, 50), cfg)
        assert tr.records == det.records


def test_runs_are_deterministic(affine_small):
    cfg = SolverConfig(gamma=0.02, epochs=10)
    a = run_eg(affine_small, new_schedule("rr", affine_small.n, 50), cfg)
    b = run_eg(affine_small, new_schedule("rr", affine_small.n, 50), cfg)
    assert a.to_csv() == b.to_csv()
    assert np.array_equal(a.final, b.final)


def test_record_count_and_calls(affine_small):
    n = affine_small.n
    tr = run_eg(affine_small, new_schedule("so", n, 1), SolverConfig(gamma=0.02, epochs=7))
    assert len(tr) == 7 * n + 1
    assert tr.records[-1].oracle_calls == 2 * 7 * n
    calls = [r.oracle_calls for r in tr.records]
    assert calls == sorted(calls)
    ep = run_eg(affine_small, new_schedule("so", n, 1), SolverConfig(gamma=0.02, epochs=7, cadence="epoch"))
    assert len(ep) == 8


def test_schedule_fidelity(affine_small):
    spy = Spy(affine_small.component)
    p = FiniteSumVI(n=affine_small.n, dim=affine_small.dim, component=spy)
    run_eg(p, new_schedule("rr", p.n, 8), SolverConfig(gamma=0.01, epochs=5, track_residual=False))
    ref = new_schedule("rr", p.n, 8)
    stream = []
    for s in range(5):
        ref.begin_epoch(s)
        stream += [ref.next_index() for _ in range(p.n)]
    assert spy.calls == [i for i in stream for _ in range(2)]


def test_schedule_mismatch(affine_small):
    with pytest.raises(ValueError):
        run_eg(affine_small, new_schedule("rr", affine_small.n + 1, 0), SolverConfig(gamma=0.1))
    with pytest.raises(ValueError):
        solve(affine_small, "adam", SolverConfig(gamma=0.1))


@pytest.fixture(scope="module")
def interpolating():
    """Affine components that all vanish at one common point."""
    rng = np.random.default_rng(12)
    M = rng.standard_normal((4, 5, 5)) * 0.3 + 2 * np.eye(5)
    zs = rng.standard_normal(5)
    return affine_problem(M, -np.einsum("nij,j->ni", M, zs))


@pytest.mark.parametrize("method", ["eg", "vr-eg", "det-eg"])
@pytest.mark.parametrize("kind", ["rr", "so", "cyclic", "independent"])
def test_fixed_point_preserved(affine_small, interpolating, method, kind):
    # plain stochastic steps only fix z* when every F_i vanishes there
    p = interpolating if method == "eg" else affine_small
    zs = p.reference
    tr = solve(p, method, SolverConfig(gamma=0.02, epochs=3), new_schedule(kind, p.n, 0), zs)
    assert np.max(np.abs(tr.final - zs)) < 1e-12
    assert max(r.sq_dist for r in tr.records) < 1e-24


def test_plain_eg_leaves_solution_under_variance(affine_small):
    zs = affine_small.reference
    tr = run_eg(affine_small, new_schedule("rr", affine_small.n, 0), SolverConfig(gamma=0.02, epochs=1), zs)
    assert tr.records[1].sq_dist > 0


def test_deterministic_single_step_contracts(affine_small):
    rng = np.random.default_rng(4)
    gamma = 1 / (6 * affine_small.constants.L)
    for _ in range(100):
        z = affine_small.reference + rng.standard_normal(affine_small.dim) * rng.uniform(0.1, 10)
        tr = run_deterministic_eg(affine_small, SolverConfig(gamma=gamma, epochs=1), z)
        assert tr.records[1].sq_dist <= tr.records[0].sq_dist


def test_deterministic_reaches_machine_precision(affine_small):
    gamma = 1 / (6 * affine_small.constants.L)
    tr = run_deterministic_eg(affine_small, SolverConfig(gamma=gamma, epochs=3000, track_residual=False))
    sq = tr.column("sq_dist")
    assert sq.min() <= 1e-16 * sq[0]
    burn = 20
    head = sq[burn:][sq[burn:] > 1e-28 * sq[0]]
    assert np.all(np.diff(head) <= 0)
    assert tr.records[-1].oracle_calls == 2 * affine_small.n * 3000


def test_bilinear_converges():
    tr = run_deterministic_eg(rotation(), SolverConfig(gamma=0.1, epochs=3000), np.array([1.0, 1.0]))
    assert np.linalg.norm(tr.final) < 1e-6
    # spectral radius of the extragradient map for the rotation: |1 - g^2 - i g|
    rho = abs(complex(1 - 0.01, -0.1))
    assert rho < 1
    assert np.linalg.norm(tr.final) == pytest.approx(np.sqrt(2) * rho**3000, rel=1e-6)


def test_constant_field_on_disc():
    c = np.array([3.0, -4.0])
    p = FiniteSumVI(n=1, dim=2, component=lambda i, z: -c, regularizer=BallIndicator(2.0))
    tr = run_deterministic_eg(p, SolverConfig(gamma=0.1, epochs=200), np.zeros(2))
    np.testing.assert_allclose(tr.final, 2.0 * c / 5.0, atol=1e-12)


def test_eg_theorem_envelope_median(affine_thm):
    p = affine_thm
    mu, L, n = p.constants.mu, p.constants.L, p.n
    gamma = default_step_eg(mu, L, n)
    S = 200
    finals = []
    for seed in range(50, 70):
        tr = run_eg(p, new_schedule("rr", n, seed), SolverConfig(gamma=gamma, epochs=S, cadence="epoch",
                                                                 track_residual=False))
        finals.append(tr.records[-1].sq_dist)
    d0 = sq_distance(p.initial_point(), p.reference)
    bound = (1 - gamma * mu / 2) ** (S * n) * d0 + 256 * gamma * n**2 * p.constants.sigma2 / mu
    assert np.median(finals) <= bound


# -- variance reduction ---------------------------------------------------------

def test_vr_fixed_point(affine_small):
    zs = affine_small.reference
    st = VRState.start(affine_small, zs)
    rng = np.random.default_rng(0)
    for i in range(affine_small.n):
        st = vr_eg_step(affine_small, st, i, 0.05, 0.7, 0.5, rng)
        assert np.max(np.abs(st.z - zs)) < 1e-13


def test_vr_reduces_to_eg_when_snapshot_is_iterate(affine_small):
    # with omega = z the anchor point is z itself; with alpha -> 1 and a frozen snapshot
    # the two extrapolation points agree, and the estimator at z_half differs from
    # F_i(z_half) only by F(z) - F_i(z)
    z = np.linspace(-1, 1, affine_small.dim)
    st = VRState.start(affine_small, z)
    i, gamma = 1, 0.03
    new = vr_eg_step(affine_small, st, i, gamma, 1 - 1e-15, 1e-300, np.random.default_rng(0))
    F = affine_small.component
    z_half = z - gamma * evaluate_full(affine_small, z)
    expected = z - gamma * (F(i, z_half) - F(i, z) + evaluate_full(affine_small, z))
    np.testing.assert_allclose(new.z, expected, atol=1e-14)
    if affine_small.n == 1:
        np.testing.assert_allclose(new.z, eg_step(affine_small, z, i, gamma))


def test_vr_single_component_estimator():
    p = make_affine_saddle(AffineSaddleSpec(dim=4, n=1, mu=1, L=2, seed=2))
    rng = np.random.default_rng(3)
    zh, om = rng.standard_normal((2, 4))
    np.testing.assert_allclose(vr_estimator(p, 0, zh, om, evaluate_full(p, om)), evaluate_full(p, zh), atol=1e-14)


def test_vr_estimator_mean(affine_small):
    rng = np.random.default_rng(5)
    zh, om = rng.standard_normal((2, affine_small.dim))
    f_om = evaluate_full(affine_small, om)
    mean = np.mean([vr_estimator(affine_small, i, zh, om, f_om) for i in range(affine_small.n)], axis=0)
    np.testing.assert_allclose(mean, evaluate_full(affine_small, zh), atol=1e-13)


def test_vr_snapshot_is_pre_step_iterate(affine_small):
    z = np.ones(affine_small.dim)
    st = VRState.start(affine_small, z, omega0=np.zeros(affine_small.dim))
    new = vr_eg_step(affine_small, st, 0, 0.05, 0.5, 1.0, np.random.default_rng(0))
    np.testing.assert_array_equal(new.omega, z)
    np.testing.assert_array_equal(new.f_omega, evaluate_full(affine_small, z))
    assert new.oracle_calls == st.oracle_calls + 2 + affine_small.n


def test_vr_stale_cache(affine_small):
    st = VRState.start(affine_small, np.zeros(affine_small.dim))
    st.valid = False
    with pytest.raises(RuntimeError):
        vr_eg_step(affine_small, st, 0, 0.1, 0.5, 0.5, np.random.default_rng(0))


def test_vr_oracle_count_instrumented(affine_small):
    spy = Spy(affine_small.component)
    p = FiniteSumVI(n=affine_small.n, dim=affine_small.dim, component=spy, reference=affine_small.reference)
    tr = run_vr_eg(p, new_schedule("rr", p.n, 3), SolverConfig(gamma=0.01, epochs=25, seed=3, track_residual=False))
    assert tr.records[-1].oracle_calls == len(spy.calls)


def test_vr_lyapunov_recorded(affine_small):
    tr = run_vr_eg(affine_small, new_schedule("so", affine_small.n, 1), SolverConfig(gamma=0.01, epochs=2))
    r = tr.records[0]
    assert r.lyapunov == pytest.approx(2 * r.sq_dist)
    assert r.oracle_calls == affine_small.n
    assert all(x.lyapunov is not None for x in tr.records)


def test_vr_n1_p1_converges():
    p = make_affine_saddle(AffineSaddleSpec(dim=6, n=1, mu=1, L=4, seed=5))
    cfg = SolverConfig(gamma=1 / 24, epochs=2000, p=1.0, alpha=0.5)
    tr = run_vr_eg(p, new_schedule("rr", 1, 0), cfg)
    sq = tr.column("sq_dist")
    assert sq[-1] < 1e-28 * sq[0]
    fit = np.polyfit(np.arange(200), np.log(sq[:200]), 1)[0]
    assert fit < 0


def test_vr_deterministic(affine_small):
    cfg = SolverConfig(gamma=0.02, epochs=5, seed=9)
    a = run_vr_eg(affine_small, new_schedule("rr", affine_small.n, 9), cfg)
    b = run_vr_eg(affine_small, new_schedule("rr", affine_small.n, 9), cfg)
    assert a.to_csv() == b.to_csv()


def test_vr_calls_expectation(affine_thm):
    p, n, S = affine_thm, affine_thm.n, 30
    per = []
    for seed in range(20):
        tr = run_vr_eg(p, new_schedule("rr", n, seed), SolverConfig(gamma=0.001, epochs=S, seed=seed,
                                                                   cadence="epoch", track_residual=False))
        per.append((tr.records[-1].oracle_calls - n) / (S * n))
    assert np.mean(per) == pytest.approx(3.0, rel=0.1)


def test_residual_stopping(affine_small):
    cfg = SolverConfig(gamma=1 / (6 * affine_small.constants.L), epochs=100_000, residual_tol=1e-9)
    tr = run_deterministic_eg(affine_small, cfg)
    assert tr.records[-1].residual < 1e-9
    assert len(tr) < 100_000
    cap = run_deterministic_eg(affine_small, SolverConfig(gamma=0.01, epochs=50, max_oracle_calls=40))
    assert cap.records[-1].oracle_calls == 40
