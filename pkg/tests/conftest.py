import numpy as np
import pytest

from yoco import ObservationSet


def rel_diff(a, b):
    """Max absolute difference scaled by the largest magnitude in ``b``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.max(np.abs(b)) if b.size else 0.0
    return float(np.max(np.abs(a - b)) / (scale or 1.0)) if b.size else 0.0


def discrete_instance(rng, n=None, p=None, o=None, clusters=None, weights=None):
    """Random design with small discrete alphabets so rows repeat (G < n).

    Features are drawn from per-column alphabets of 2 to 4 levels; the outcome
    has heteroskedastic noise so EHW and OLS covariances differ.
    """
    n = n or int(rng.integers(40, 501))
    p = p or int(rng.integers(1, 8))            # plus the intercept -> p <= 8
    o = o or int(rng.integers(1, 3))
    levels = rng.integers(2, 5, size=p)
    X = np.column_stack([rng.integers(0, k, size=n) for k in levels]).astype(float)
    X += rng.normal(size=p).round(2)            # non-integer but still discrete
    beta = rng.normal(size=(p, o))
    scale = 0.5 + np.abs(X[:, :1])
    Y = X @ beta + rng.normal(size=(n, o)) * scale
    kw = {}
    if clusters:
        kw["clusters"] = [f"c{c}" for c in rng.integers(0, clusters, size=n)]
    if weights == "frequency":
        kw.update(weights=rng.integers(1, 5, size=n).astype(float), weight_kind="frequency")
    elif weights == "analytic":
        kw.update(weights=rng.uniform(0.2, 3.0, size=n), weight_kind="analytic")
    names = tuple(f"x{j}" for j in range(p))
    onames = tuple(f"y{k}" for k in range(o))
    obs = ObservationSet.from_arrays(X, Y, names, onames, **kw).with_intercept()
    if np.linalg.matrix_rank(obs.features) < obs.p:
        return discrete_instance(rng, n, p, o, clusters, weights)
    return obs


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class _Recorder:
    """Collects one pass/fail line per acceptance criterion."""

    def __init__(self, number):
        self.number = number
        self.details = []
        self.ok = False

    def note(self, text):
        self.details.append(text)

    def check(self, condition, text):
        self.note(text)
        assert condition, text


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    rec = _Recorder(marker.args[0])
    yield rec
    passed = not getattr(request.node, "_failed", False)
    prev = _ACCEPTANCE.get(rec.number)
    ok = passed and (prev is None or prev[0])
    detail = "; ".join(d for d in ((prev[1] if prev else ""), *rec.details) if d)
    _ACCEPTANCE[rec.number] = (ok, detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and report.failed:
        item._failed = True


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
