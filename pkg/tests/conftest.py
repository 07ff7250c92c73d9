import numpy as np
import pytest

from typogen import fixtures as fx
from typogen.dataset import write_dataset
from typogen.patterns import enumerate_patterns
from typogen.pipeline import dump_config


@pytest.fixture(scope="session")
def head_matrix():
    spec = fx.head_fixture_spec()
    return spec, fx.synthesize_fixture(spec, seed=0)


@pytest.fixture(scope="session")
def head_dataset(head_matrix):
    spec, X = head_matrix
    return fx.binary_dataset(X, spec.questions)


@pytest.fixture(scope="session")
def head_patterns(head_dataset):
    return enumerate_patterns(head_dataset, fx.INCLUDED_QUESTIONS)


@pytest.fixture(scope="session")
def survey_dataset():
    return fx.synthesize_survey_dataset(seed=0)


@pytest.fixture(scope="session")
def survey_fixture_dir(tmp_path_factory, survey_dataset):
    d = tmp_path_factory.mktemp("survey")
    write_dataset(survey_dataset, d / "survey.csv")
    (d / "config.yaml").write_text(dump_config(fx.survey_config("survey.csv", 0)), encoding="utf-8")
    return d


@pytest.fixture(scope="session")
def survey_run(survey_fixture_dir, tmp_path_factory):
    from typogen.pipeline import run_pipeline

    out = tmp_path_factory.mktemp("run")
    status, pipe = run_pipeline(survey_fixture_dir / "config.yaml", out)
    assert status == 0
    return pipe


def head_counts():
    return [row[1] for row in fx.HEAD_PATTERN_ROWS]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def table_from(X, labels, names=None, outcome="y"):
    """PredictorTable with one term per column and a single outcome."""
    import pandas as pd

    from typogen.psychometrics import PredictorTable

    X = np.asarray(X, float).reshape(len(labels), -1)
    names = list(names or [f"x{j + 1}" for j in range(X.shape[1])])
    frame = pd.DataFrame(X, columns=names, index=pd.Index([f"r{i}" for i in range(len(X))], name="respondent_id"))
    return PredictorTable(frame, {c: (c,) for c in names}).with_outcome(outcome, np.asarray(labels, object))


def mlogit_sample(seed, n=500, informative=5, noise=5, classes=3, scale=(0.5, 1.0)):
    """Multinomial-logit data: the first ``informative`` columns carry
    coefficients of random sign and magnitude in ``scale``; the rest are noise."""
    r = np.random.default_rng(seed)
    p = informative + noise
    X = r.standard_normal((n, p))
    B = np.zeros((classes - 1, p))
    B[:, :informative] = r.choice([-1, 1], (classes - 1, informative)) * r.uniform(*scale, (classes - 1, informative))
    eta = np.column_stack([np.zeros(n), X @ B.T])
    P = np.exp(eta - eta.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    y = (P.cumsum(axis=1) > r.random((n, 1))).argmax(axis=1)
    labels = np.array([f"K{k + 1}" for k in range(classes)], object)[y]
    names = [f"s{j + 1}" for j in range(informative)] + [f"n{j + 1}" for j in range(noise)]
    return table_from(X, labels, names), names


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per numbered criterion

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    # a failure in setup, call or teardown fails the criterion
    ok = _ACCEPTANCE.get(number, (title, True))[1] and rep.passed
    _ACCEPTANCE[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}")
