"""The ten numbered acceptance criteria, at their stated tolerances.

Each test carries an ``acceptance`` marker; the summary at the end of the
run prints one PASS/FAIL line per criterion.
"""

import time
from fractions import Fraction

import numpy as np
import pytest
from conftest import mlogit_sample, head_counts, table_from
from test_psychometrics import align, two_factor_sample
from test_trees import oracle_filter, oracle_trees, random_case

from typogen import fixtures as fx
from typogen.comparison import alignment_report, load_table
from typogen.modeling import ModelSpec, backward_stepwise, fit_mlogit, gradient, log_likelihood
from typogen.patterns import (
    curve_value,
    enumerate_patterns,
    fit_rank_frequency_curve,
    rank_count_points,
    select_head_classes,
)
from typogen.pipeline import run_pipeline
from typogen.psychometrics import cronbach_alpha, efa, rotate
from typogen.trees import TreeConstraints, enumerate_trees, filter_trees, select_tree

PUBLISHED_CURVE = (10.635, 150.740, 0.604, 3.271)


@pytest.mark.acceptance(1, "pattern counts of the 435-respondent head")
def test_head(head_dataset):
    t0 = time.perf_counter()
    pats = enumerate_patterns(head_dataset, fx.INCLUDED_QUESTIONS)
    elapsed = time.perf_counter() - t0
    want = [(frozenset(yes), count) for yes, count in fx.HEAD_PATTERN_ROWS]
    got = [(frozenset(p.yes_questions()), p.count) for p in pats]
    # rows of equal count may be listed in either order
    assert set(got) == set(want) and len(got) == 15
    assert [c for _, c in got] == [c for _, c in want]
    assert elapsed < 1


@pytest.mark.acceptance(2, "rank-frequency curve recovery")
def test_curve(head_patterns):
    t0 = time.perf_counter()
    x = np.arange(1, 16)
    clean = fit_rank_frequency_curve(list(zip(x, curve_value(x, *PUBLISHED_CURVE))))
    real = fit_rank_frequency_curve(rank_count_points(head_patterns, 15))
    elapsed = time.perf_counter() - t0
    np.testing.assert_allclose(clean.params, PUBLISHED_CURVE, rtol=1e-6)
    assert [c for _, c in rank_count_points(head_patterns, 15)] == head_counts()
    np.testing.assert_allclose(real.params, PUBLISHED_CURVE, rtol=0.15)
    assert elapsed < 1


@pytest.mark.acceptance(3, "head selection at 0.79 over the 15-pattern pool")
def test_head_selection(head_patterns):
    typ = select_head_classes(head_patterns, 0.79, "top_n_pool", 15)
    assert typ.k == 6
    assert typ.covered == 346
    assert typ.mean_class_size == pytest.approx(57.7, abs=0.05)
    assert round(typ.mean_class_size) == 58


@pytest.mark.acceptance(4, "tree enumeration equals the brute-force oracle")
def test_tree_oracle():
    t0 = time.perf_counter()
    cases = 0
    for seed in range(120):
        X, qs, min_leaf, r = random_case(seed)
        ds = fx.binary_dataset(X, qs)
        rows = [dict(zip(qs, map(bool, row))) for row in X]
        ref = oracle_trees(rows, qs, min_leaf)
        got = enumerate_trees(ds, qs, min_leaf)
        assert got.canonical_set() == {s for s, _, _ in ref}
        lo = r.randint(min_leaf, min_leaf + len(X) // 4)
        hi = r.randint(max(lo, len(X) // 3), max(lo, len(X)))
        excl = frozenset(q for q in qs if r.random() < 0.25)
        want = oracle_filter(ref, lo, hi, excl)
        if want:
            assert filter_trees(got, TreeConstraints(min_leaf, lo, hi, excl)).canonical_set() == want
        cases += 1
    assert cases >= 100
    assert time.perf_counter() - t0 < 30

    one = fx.binary_dataset(np.array([[1]] * 60 + [[0]] * 40), ("q1",))
    assert len(enumerate_trees(one, ["q1"], 40)) == 2
    assert len(enumerate_trees(one, ["q1"], 70)) == 1
    rows = [[a, b] for a in (0, 1) for b in (0, 1) for _ in range(50)]
    two = enumerate_trees(fx.binary_dataset(np.array(rows), ("q1", "q2")), ["q1", "q2"], 40)
    assert len(two) == 9
    assert len(filter_trees(two, TreeConstraints(40, 40, 120))) == 8


@pytest.mark.acceptance(5, "taxonomic tree reconstruction")
def test_reference_tree(survey_dataset):
    cands = filter_trees(enumerate_trees(survey_dataset, fx.INCLUDED_QUESTIONS, 40),
                         TreeConstraints(40, 51, 172, frozenset({"FBmorethan1"})))
    by_key = {t.canonical: t for t in cands.trees}
    assert fx.REFERENCE_TREE.canonical in by_key
    assert sorted(by_key[fx.REFERENCE_TREE.canonical].leaf_counts) == sorted([150, 117, 55, 118, 74])
    counts = [150, 117, 55, 118, 74]
    oracle = Fraction(sum(c * c for c in counts), 5) - Fraction(sum(counts), 5) ** 2
    # the oracle gives 1154.96 for this multiset, below the stated 1248.24; hold both bounds
    best = select_tree(cands).leaf_variance()
    assert best <= oracle
    assert best <= Fraction(124824, 100)


@pytest.mark.acceptance(6, "multinomial logit oracle")
def test_mlogit_oracle():
    x = np.r_[np.ones(40), np.zeros(40)]
    lab = ["B"] * 30 + ["A"] * 10 + ["B"] * 10 + ["A"] * 30
    fit = fit_mlogit(table_from(x, lab, ["x"]), ModelSpec("y", ("x",), "A"))
    np.testing.assert_allclose(fit.coefficients[0], [np.log(10 / 30), np.log(9)], atol=1e-6)

    h = 1e-6
    for seed in range(3):
        r = np.random.default_rng(seed)
        Xi = np.column_stack([np.ones(60), r.standard_normal((60, 3))])
        y = r.integers(0, 3, 60)
        beta = r.normal(0, 0.5, (2, 4))
        num = np.zeros_like(beta)
        for idx in np.ndindex(beta.shape):
            e = np.zeros_like(beta)
            e[idx] = h
            num[idx] = (log_likelihood(beta + e, Xi, y) - log_likelihood(beta - e, Xi, y)) / (2 * h)
        assert np.max(np.abs(gradient(beta, Xi, y) - num) / np.maximum(np.abs(num), 1e-3)) < 1e-5

    table, names = mlogit_sample(11, n=200, informative=2, noise=1)
    spec = ModelSpec("y", tuple(names))
    base = fit_mlogit(table, spec).log_likelihood
    for a, b in [(3.0, -7.0), (-0.2, 40.0), (25.0, 0.5)]:
        X = table.frame.to_numpy().copy()
        X[:, 0] = a * X[:, 0] + b
        moved = fit_mlogit(table_from(X, table.outcomes["y"], names), spec).log_likelihood
        assert moved == pytest.approx(base, abs=1e-6)


@pytest.mark.acceptance(7, "stepwise elimination recovers the informative predictors")
def test_stepwise_recovery():
    clean = 0
    for seed in range(20):
        table, names = mlogit_sample(seed)
        res = backward_stepwise(table, ModelSpec("y", tuple(names)))
        assert res.fit.aic <= res.initial.aic
        for p in res.spec.predictors:
            assert fit_mlogit(table, res.spec.without(p)).aic > res.fit.aic
        clean += not any(p.startswith("n") for p in res.spec.predictors)
    print(f"noise fully eliminated in {clean} of 20 seeds")
    assert clean >= 18


@pytest.mark.acceptance(8, "factor recovery and reliability")
def test_efa():
    gen, X = two_factor_sample(1000, 0)
    m = efa(np.corrcoef(X, rowvar=False), 2)
    rm = rotate(m)
    assert np.max(np.abs(align(rm.loadings, gen) - gen)) < 0.1
    np.testing.assert_allclose((rm.loadings ** 2).sum(axis=1), (m.loadings ** 2).sum(axis=1), atol=1e-8)

    X3 = np.array([[1, 2, 2], [2, 2, 3], [3, 4, 3], [4, 4, 5], [5, 6, 4]])
    # by hand: item variances 5/2, 14/5, 13/10; total-score variance 17
    hand = Fraction(3, 2) * (1 - (Fraction(5, 2) + Fraction(14, 5) + Fraction(13, 10)) / 17)
    assert hand == Fraction(78, 85)
    assert cronbach_alpha(X3) == pytest.approx(float(hand), abs=1e-15)
    x = np.array([1, 3, 2, 5, 4])
    assert cronbach_alpha(np.column_stack([x, x])) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.acceptance(9, "typology mapping and model alignment")
def test_mapping_alignment(survey_run):
    inv = survey_run.mapping.inverse()
    assert inv == {"T1": ["C1"], "T2": ["C2"], "T3": ["C4"], "T4": ["C3", "C5"], "T5": ["C6"]}
    rep = alignment_report(load_table("or_curve"), load_table("or_tree"))
    assert set(rep.aligned) == {"Relapse", "Age"}
    assert set(rep.divergent) == {"Daily Routine", "Affective Gratification"}
    assert set(rep.with_status("A_only")) == {"Pride", "FBI-Friend", "Escape"}
    assert set(rep.with_status("B_only")) == {"SoPA", "SalTolMood", "WithdrConfl", "Connectedness"}


@pytest.mark.acceptance(10, "deterministic pipeline under a minute")
def test_determinism(survey_fixture_dir, tmp_path):
    outputs, times = [], []
    for name in ("a", "b"):
        t0 = time.perf_counter()
        status, pipe = run_pipeline(survey_fixture_dir / "config.yaml", tmp_path / name)
        times.append(time.perf_counter() - t0)
        assert status == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(pipe.out_dir.iterdir())
                        if p.name != "timings.json"})
    assert outputs[0] == outputs[1]
    assert len(outputs[0]) > 10
    assert max(times) < 60
