import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cosched.objectives import BoxPenaltySpec, CpuCostSpec, MlObjectiveSpec, ObjectiveBundle
from cosched.topology import NetworkSchedule, build_erdos_renyi

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def regression_bundle(n=6, points=30, seed=0, cpu=True, penalty=False):
    rng = np.random.default_rng(seed)
    ml = []
    for i in range(n):
        X = rng.normal(size=(points, 1))
        y = 1.5 * X[:, 0] - 0.3 + 0.2 * rng.normal(size=points)
        ml.append(MlObjectiveSpec("regression", X, y))
    spec = None
    if cpu:
        kappa = rng.uniform(1.0, 10.0, n)
        demand = rng.uniform(0.0, 100.0, n)
        spec = CpuCostSpec(kappa, demand, total=0.5 * kappa.sum())
    pen = BoxPenaltySpec(0.0, 700.0, 1.0, 2.0) if (penalty and cpu) else None
    return ObjectiveBundle(n, cpu=spec, penalty=pen, ml=ml)


def er_schedule(n=6, pool=2, seed=0, period=100, p=0.5):
    graphs = tuple(build_erdos_renyi(n, p, seed=(seed, k)) for k in range(pool))
    return NetworkSchedule(graphs, switch_period=period)


@pytest.fixture
def small_bundle():
    return regression_bundle()


@pytest.fixture
def small_schedule():
    return er_schedule()


# --------------------------------------------------------------------------
# acceptance reporting: one pass/fail line per criterion in the terminal summary

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args

    def report(ok, detail):
        ACCEPTANCE[number] = (title, bool(ok), detail)
        print(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        return ok

    yield report
    if number not in ACCEPTANCE:
        ACCEPTANCE[number] = (title, False, "raised before reporting")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
