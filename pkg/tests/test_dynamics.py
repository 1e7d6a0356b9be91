import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cosched import _kernels
from cosched.dynamics import (
    DivergenceError,
    InfeasibleInitError,
    SolverConfig,
    consensus_gap,
    euler_stable_dt,
    init_state,
    run,
    step,
)
from cosched.objectives import CpuCostSpec, MlObjectiveSpec, ObjectiveBundle, ml_loss
from cosched.quantize import QuantizerConfig
from cosched.topology import NetworkSchedule, WeightedGraph, build_erdos_renyi

from conftest import er_schedule, regression_bundle

LINEAR = QuantizerConfig(enabled=False)


def test_hand_stepped_update_rules():
    # n=2, m=1, w12=1, dt=0.1, g_i = y^2/2 so grad g_i(y) = y
    W = np.array([[0.0, 1.0], [1.0, 0.0]])
    x = np.array([1.0, 1.0])
    Y = np.array([[1.0], [0.0]])
    Z = np.zeros((2, 1))
    zinc = np.empty_like(Z)
    cpu = (False, np.ones(2), np.zeros(2), 0.0, 2.0, 0.0, 1.0, _kernels.PEN_NONE)
    Y_old = Y.copy()
    _kernels.advance(x, Y, Z, W, cpu, 0.1, 0.5, 1.0, False, zinc)
    assert np.allclose(Y[:, 0], [0.9, 0.1])
    Z_new = Z + zinc + (Y - Y_old)
    assert np.allclose(Z_new[:, 0], [-0.1, 0.1])


def test_init_equal_split_and_local_gradient():
    bundle = regression_bundle(n=3)
    s = init_state(bundle, bundle.cpu.total, SolverConfig())
    assert math.fsum(s.x) == s.b
    for i, spec in enumerate(bundle.ml):
        assert np.allclose(s.z[i], ml_loss(s.y[i], spec)[1])
    assert np.all(np.abs(s.y) <= 1)


def test_init_three_nodes_equal():
    cpu = CpuCostSpec(np.full(3, 10.0), np.zeros(3), total=6.0)
    s = init_state(ObjectiveBundle(3, cpu=cpu), 6.0, SolverConfig())
    assert np.array_equal(s.x, [2.0, 2.0, 2.0])
    assert s.y.shape == (3, 0)


@given(seed=st.integers(0, 10_000), b=st.floats(0, 50))
def test_random_init_is_feasible(seed, b):
    cpu = CpuCostSpec(np.full(5, 10.0), np.zeros(5), total=b)
    s = init_state(ObjectiveBundle(5, cpu=cpu), b, SolverConfig(x_init="random", seed=seed))
    assert math.fsum(s.x) == pytest.approx(b, abs=1e-12 * max(1, b))
    assert np.all(s.x >= -1e-12)


def test_init_rejects_excess_demand():
    cpu = CpuCostSpec(np.full(2, 1.0), np.zeros(2), total=3.0)
    with pytest.raises(InfeasibleInitError):
        init_state(ObjectiveBundle(2, cpu=cpu), 3.0, SolverConfig())


def test_zero_z_init():
    s = init_state(regression_bundle(n=3), 1.0, SolverConfig(z_init="zero"))
    assert np.all(s.z == 0)


@pytest.mark.parametrize(
    "kwargs", [dict(alpha=0), dict(dt=-1), dict(steps=-1), dict(record_every=0), dict(z_init="x"), dict(x_init="y")]
)
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


@pytest.mark.parametrize("quantized", [False, True])
@given(seed=st.integers(0, 1000))
def test_single_step_conserves_resources(quantized, seed):
    bundle = regression_bundle(n=5, seed=seed, penalty=True)
    g = build_erdos_renyi(5, 0.7, seed=seed)
    cfg = SolverConfig(alpha=0.01, dt=0.01, quantizer=QuantizerConfig(0.25, quantized), x_init="random", seed=seed)
    s0 = init_state(bundle, bundle.cpu.total, cfg)
    s1 = step(s0, bundle, g, cfg)
    assert math.fsum(s1.x) == pytest.approx(math.fsum(s0.x), rel=1e-12, abs=1e-12)
    assert s1.step == 1 and s0.step == 0


def test_consensus_fixed_point_is_stationary():
    # identical shards: every node shares the gradient, y at the optimum, equal marginals
    X = np.linspace(-1, 1, 9)[:, None]
    spec = MlObjectiveSpec("regression", X, 0.7 * X[:, 0] + 0.2)
    kappa = np.array([1.0, 2.0, 4.0])
    cpu = CpuCostSpec(kappa, np.zeros(3), total=7.0)
    bundle = ObjectiveBundle(3, cpu=cpu, ml=[spec] * 3)
    cfg = SolverConfig(alpha=0.1, dt=0.01, quantizer=QuantizerConfig(0.125))
    s = init_state(bundle, 7.0, cfg)
    s.x[:] = kappa  # marginal x_i/kappa_i = 1 everywhere
    s.y[:] = [0.7, -0.2]
    s.grad = bundle.ml_grads(s.y)
    s.z[:] = 0.0
    g = build_erdos_renyi(3, 1.0, seed=0)
    s1 = step(s, bundle, g, cfg)
    assert np.allclose(s1.x, s.x, atol=0, rtol=0)
    assert np.allclose(s1.y, s.y, atol=1e-12)
    assert np.allclose(s1.z, 0, atol=1e-9)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_step_and_trace():
    bundle = regression_bundle(n=4, cpu=False)
    sched = NetworkSchedule((build_erdos_renyi(4, 1.0, seed=1),))
    cfg = SolverConfig(alpha=50.0, dt=1.0, steps=500, quantizer=LINEAR, record_every=1)
    with pytest.raises(DivergenceError) as info:
        run(bundle, sched, cfg, 0.0)
    err = info.value
    assert err.step > 0 and 0 <= err.node < 4
    assert err.trace is not None and len(err.trace.records) >= 1


def test_zero_steps_gives_initial_record_only(small_bundle, small_schedule):
    tr = run(small_bundle, small_schedule, SolverConfig(steps=0), small_bundle.cpu.total)
    assert len(tr.records) == 1 and tr.records[0].step == 0


def test_recording_interval_and_final_row(small_bundle, small_schedule):
    cfg = SolverConfig(steps=95, record_every=10, early_stop=False)
    tr = run(small_bundle, small_schedule, cfg, small_bundle.cpu.total)
    steps = [r.step for r in tr.records]
    assert steps == list(range(0, 100, 10)) + [95]


def test_linear_mode_equals_disabled_quantizer_bitwise(small_bundle, small_schedule):
    a = run(small_bundle, small_schedule, SolverConfig(steps=200, quantizer=QuantizerConfig(0.5, False)),
            small_bundle.cpu.total)
    b = run(small_bundle, small_schedule, SolverConfig(steps=200, quantizer=QuantizerConfig(0.125, False)),
            small_bundle.cpu.total)
    assert np.array_equal(a.state.x, b.state.x)
    assert np.array_equal(a.state.y, b.state.y)
    assert np.array_equal(a.state.z, b.state.z)


def test_step_function_matches_run_loop(small_bundle, small_schedule):
    cfg = SolverConfig(alpha=0.02, dt=1e-3, steps=250, quantizer=QuantizerConfig(0.125), early_stop=False)
    tr = run(small_bundle, small_schedule, cfg, small_bundle.cpu.total)
    s = init_state(small_bundle, small_bundle.cpu.total, cfg)
    for k in range(cfg.steps):
        s = step(s, small_bundle, small_schedule.graphs[small_schedule.index_at(k)], cfg)
    assert np.array_equal(s.x, tr.state.x)
    assert np.array_equal(s.y, tr.state.y)
    assert np.array_equal(s.z, tr.state.z)


@pytest.mark.parametrize("quantized", [False, True])
def test_tracking_identity_and_conservation_over_run(quantized):
    bundle = regression_bundle(n=6, seed=4, penalty=True)
    sched = er_schedule(n=6, pool=3, seed=4, period=50)
    cfg = SolverConfig(alpha=0.01, dt=1e-3, steps=2000, quantizer=QuantizerConfig(0.125, quantized),
                       x_init="random")
    s0 = init_state(bundle, bundle.cpu.total, cfg)
    z0, g0 = s0.z.sum(axis=0), s0.grad.sum(axis=0)
    worst = [0.0, 0.0]

    def hook(s):
        lhs = s.z.sum(axis=0) - z0
        rhs = bundle.ml_grads(s.y).sum(axis=0) - g0
        worst[0] = max(worst[0], float(np.max(np.abs(lhs - rhs))))
        worst[1] = max(worst[1], abs(math.fsum(s.x) - s.b))

    run(bundle, sched, cfg, bundle.cpu.total, hooks=[hook])
    assert worst[0] < 1e-9
    assert worst[1] <= 1e-9 * max(1.0, bundle.cpu.total)


def test_early_stop_on_consensus():
    X = np.linspace(-1, 1, 9)[:, None]
    specs = [MlObjectiveSpec("regression", X, 0.5 * X[:, 0] + 0.1 * i) for i in range(4)]
    bundle = ObjectiveBundle(4, ml=specs)
    sched = NetworkSchedule((build_erdos_renyi(4, 1.0, seed=2),))
    cfg = SolverConfig(alpha=0.05, dt=0.01, steps=200_000, quantizer=LINEAR, record_every=50,
                       consensus_tol=1e-8, gradient_tol=1e-8)
    tr = run(bundle, sched, cfg, 0.0)
    assert tr.stopped_early
    assert tr.records[-1].step < cfg.steps
    assert tr.records[-1].consensus_gap < 1e-8


def test_consensus_gap_example():
    assert consensus_gap(np.array([[1.0, 0.0], [-1.0, 0.0]])) == 1.0
    assert consensus_gap(np.zeros((3, 0))) == 0.0


def test_euler_heuristic_bound():
    g = WeightedGraph([[0, 1, 1], [1, 0, 0], [1, 0, 0]])
    dt = euler_stable_dt(NetworkSchedule((g,)))
    assert dt * 2 * 2 < 1
