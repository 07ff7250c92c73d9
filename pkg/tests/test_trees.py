"""Tests for taxonomic-tree enumeration, filtering, selection and routing.

The reference enumerator below works on explicit lists of row indices and
builds serialisations directly, sharing nothing with the bitmask enumerator
under test.
"""

import random
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from typogen import fixtures as fx
from typogen.errors import ConfigError, EmptyCandidateSetError, EnumerationLimitError
from typogen.trees import (
    Leaf,
    Split,
    TaxonomicTree,
    TreeCandidateSet,
    TreeConstraints,
    assign_tree_class,
    assign_tree_classes,
    count_trees,
    enumerate_trees,
    filter_trees,
    recount,
    select_tree,
)

# ---------------------------------------------------------------------------
# brute-force reference


def oracle_trees(rows, questions, min_leaf):
    """All trees as (serialisation, leaf counts, split questions)."""

    def grow(idx, avail):
        out = [(f"[{len(idx)}]", (len(idx),), frozenset())]
        for q in avail:
            no = [i for i in idx if not rows[i][q]]
            yes = [i for i in idx if rows[i][q]]
            if len(no) < min_leaf or len(yes) < min_leaf:
                continue
            rest = [x for x in avail if x != q]
            for s0, c0, q0 in grow(no, rest):
                for s1, c1, q1 in grow(yes, rest):
                    out.append((f"({q}:{s0}|{s1})", c0 + c1, q0 | q1 | {q}))
        return out

    return grow(list(range(len(rows))), list(questions))


def oracle_filter(trees, lo, hi, excluded):
    return {s for s, counts, qs in trees if min(counts) >= lo and max(counts) <= hi and not qs & excluded}


def random_case(seed):
    r = random.Random(seed)
    t = r.randint(1, 4)
    n = r.randint(1, 64)
    qs = tuple(f"q{j}" for j in range(t))
    base = [r.random() < 0.5 for _ in range(n)]
    X = np.array([[b if r.random() < r.uniform(0.3, 0.9) else r.random() < 0.5 for b in base]
                  for _ in qs], dtype=int).T.reshape(n, t)
    min_leaf = r.randint(max(1, n // 16), max(1, n // 5))
    return X, qs, min_leaf, r


def _dataset(X, qs):
    return fx.binary_dataset(np.asarray(X, int), qs)


def _cells(counts, qs=("q1", "q2")):
    """Dataset whose answer vectors over ``qs`` occur with the given multiplicities."""
    rows = []
    for bits, c in counts.items():
        rows += [list(bits)] * c
    return _dataset(rows, qs)


# ---------------------------------------------------------------------------


class TestOracleEquivalence:
    CASES = 120

    def test_generated_suite(self):
        t0 = time.perf_counter()
        for seed in range(self.CASES):
            X, qs, min_leaf, r = random_case(seed)
            ds = _dataset(X, qs)
            rows = [dict(zip(qs, map(bool, row))) for row in X]
            ref = oracle_trees(rows, qs, min_leaf)
            got = enumerate_trees(ds, qs, min_leaf)
            assert got.canonical_set() == {s for s, _, _ in ref}, seed
            assert len(got) == len(ref) == count_trees(ds, qs, min_leaf)

            lo = r.randint(min_leaf, min_leaf + len(X) // 4)
            hi = r.randint(max(lo, len(X) // 3), max(lo, len(X)))
            excl = frozenset(q for q in qs if r.random() < 0.25)
            want = oracle_filter(ref, lo, hi, excl)
            c = TreeConstraints(min_leaf, lo, hi, excl)
            if want:
                assert filter_trees(got, c).canonical_set() == want, seed
            else:
                with pytest.raises(EmptyCandidateSetError):
                    filter_trees(got, c)
        assert time.perf_counter() - t0 < 30

    def test_one_question(self):
        ds = _dataset([[1]] * 60 + [[0]] * 40, ("q1",))
        assert len(enumerate_trees(ds, ["q1"], 40)) == 2
        assert len(enumerate_trees(ds, ["q1"], 70)) == 1

    def test_two_questions(self):
        ds = _cells({(0, 0): 50, (0, 1): 50, (1, 0): 50, (1, 1): 50})
        cands = enumerate_trees(ds, ["q1", "q2"], 40)
        assert len(cands) == 9
        kept = filter_trees(cands, TreeConstraints(40, 40, 120))
        assert len(kept) == 8
        assert "[200]" not in kept.canonical_set()
        only = filter_trees(kept, TreeConstraints(40, 40, 120, frozenset({"q2"})))
        assert only.canonical_set() == {"(q1:[100]|[100])"}


class TestEnumerationProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_partition_and_paths(self, seed):
        X, qs, min_leaf, _ = random_case(seed)
        ds = _dataset(X, qs)
        for tree in enumerate_trees(ds, qs, min_leaf).trees:
            assert tree.n == len(X)
            assert min(tree.leaf_counts) >= min(min_leaf, len(X))
            assert tree.has_valid_paths()
            labels = assign_tree_classes(ds, tree)
            assert [labels.count(lab) for lab in tree.labels] == list(tree.leaf_counts)

    def test_single_leaf_always_present(self):
        ds = _dataset([[1, 0]] * 3, ("a", "b"))
        assert enumerate_trees(ds, ["a", "b"], 1).canonical_set() == {"[3]"}

    def test_threads_do_not_change_output(self, survey_dataset):
        qs = [q for q in fx.INCLUDED_QUESTIONS if q != "FBmorethan1"]
        one = enumerate_trees(survey_dataset, qs, 40)
        four = enumerate_trees(survey_dataset, qs, 40, threads=4)
        assert [t.canonical for t in one.trees] == [t.canonical for t in four.trees]

    def test_cap(self, survey_dataset):
        with pytest.raises(EnumerationLimitError) as info:
            enumerate_trees(survey_dataset, fx.INCLUDED_QUESTIONS, 5, max_candidates=1000)
        assert info.value.count > 1000 and info.value.cap == 1000

    @pytest.mark.parametrize("qs,m", [([], 1), (["q1"], 0)])
    def test_bad_arguments(self, qs, m):
        with pytest.raises(ConfigError):
            enumerate_trees(_dataset([[1]], ("q1",)), qs, m)


class TestFilter:
    def test_vacuous(self):
        ds = _cells({(0, 0): 50, (0, 1): 50, (1, 0): 50, (1, 1): 50})
        cands = enumerate_trees(ds, ["q1", "q2"], 40)
        out = filter_trees(cands, TreeConstraints(40, 40, 200))
        assert out.canonical_set() == cands.canonical_set()

    def test_stage_counts_non_increasing(self, survey_dataset):
        cands = enumerate_trees(survey_dataset, fx.INCLUDED_QUESTIONS, 40)
        out = filter_trees(cands, TreeConstraints(40, 51, 172, frozenset({"FBmorethan1"})))
        c = out.stage_counts
        seq = [c["enumerated"], c["min_leaf_filter"], c["max_leaf_filter"], c["excluded_questions"]]
        assert seq == sorted(seq, reverse=True)
        assert seq[-1] == len(out)

    def test_empty_carries_counts(self):
        ds = _cells({(0, 0): 50, (0, 1): 50, (1, 0): 50, (1, 1): 50})
        with pytest.raises(EmptyCandidateSetError) as info:
            filter_trees(enumerate_trees(ds, ["q1", "q2"], 40), TreeConstraints(40, 40, 49))
        assert info.value.stage_counts["max_leaf_filter"] == 0

    def test_default_max_is_a_third(self):
        assert TreeConstraints().resolved_max(514) == 172

    @pytest.mark.parametrize("kw", [{"min_leaf_grow": 0}, {"min_leaf_grow": 10, "min_leaf_filter": 5}])
    def test_constraint_validation(self, kw):
        with pytest.raises(ConfigError):
            TreeConstraints(**kw)

    def test_max_above_n(self):
        with pytest.raises(ConfigError):
            TreeConstraints(1, 1, 600).resolved_max(514)


class TestSelect:
    def test_zero_variance_wins(self):
        a = TaxonomicTree(Split("q", Leaf(100), Leaf(100)))
        b = TaxonomicTree(Split("r", Leaf(150), Leaf(50)))
        assert select_tree([b, a]) is a
        assert b.leaf_variance() == 2500

    def test_single(self):
        t = TaxonomicTree(Leaf(5))
        assert select_tree(TreeCandidateSet((t,), {}, 5)) is t

    def test_ties(self):
        flat = TaxonomicTree(Split("b", Leaf(10), Leaf(10)))
        deep = TaxonomicTree(Split("a", Split("c", Leaf(10), Leaf(10)), Leaf(10)))
        other = TaxonomicTree(Split("a", Leaf(10), Leaf(10)))
        assert select_tree([deep, flat, other]) is other

    def test_empty(self):
        with pytest.raises(EmptyCandidateSetError):
            select_tree([])

    def test_reference_variance(self):
        assert fx.REFERENCE_TREE.leaf_variance() == Fraction(sum(c * c for c in fx.REFERENCE_TREE.leaf_counts), 5) - \
            Fraction(514, 5) ** 2
        assert float(fx.REFERENCE_TREE.leaf_variance()) == pytest.approx(np.var([150, 117, 55, 118, 74]), abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_order_invariant(self, survey_trees, rnd):
        trees = list(survey_trees.trees)
        rnd.shuffle(trees)
        assert select_tree(trees).canonical == select_tree(survey_trees).canonical


@pytest.fixture(scope="module")
def survey_trees(survey_dataset):
    cands = enumerate_trees(survey_dataset, fx.INCLUDED_QUESTIONS, 40)
    return filter_trees(cands, TreeConstraints(40, 51, 172, frozenset({"FBmorethan1"})))


class TestReferenceTree:
    def test_candidate_and_selection(self, survey_trees):
        by_key = {t.canonical: t for t in survey_trees.trees}
        assert fx.REFERENCE_TREE.canonical in by_key
        assert dict(zip(fx.REFERENCE_TREE.labels, fx.REFERENCE_TREE.leaf_counts)) == fx.REFERENCE_LEAF_COUNTS
        best = select_tree(survey_trees)
        assert best.leaf_variance() <= Fraction(124824, 100)
        assert best.leaf_variance() <= fx.REFERENCE_TREE.leaf_variance()

    def test_recount(self, survey_dataset):
        blank = TaxonomicTree.from_dict({"question": "deleted", "yes": {}, "no": {
            "question": "deactivated", "yes": {}, "no": {
                "question": "deletedApp", "yes": {}, "no": {"question": "takenBreak", "no": {}, "yes": {}}}}})
        assert blank.leaf_counts == (0, 0, 0, 0, 0)
        assert recount(blank, survey_dataset).leaf_counts == (150, 117, 55, 118, 74)

    @pytest.mark.parametrize("yes,label", [
        ({"deleted", "FB", "takenBreak"}, "T5"),
        ({"deleted"}, "T5"),
        ({"deactivated"}, "T4"),
        ({"deactivated", "takenBreak", "deletedApp"}, "T4"),
        ({"deletedApp"}, "T3"),
        ({"takenBreak"}, "T2"),
        (set(), "T1"),
    ])
    def test_routing(self, yes, label):
        rec = {q: q in yes for q in fx.INCLUDED_QUESTIONS}
        assert assign_tree_class(rec, fx.REFERENCE_TREE) == label

    def test_dict_round_trip(self):
        assert TaxonomicTree.from_dict(fx.REFERENCE_TREE.to_dict()) == fx.REFERENCE_TREE
        assert fx.REFERENCE_TREE.to_dict()["question"] == "deleted"
