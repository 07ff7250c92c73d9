"""Tests for typology mapping, rule typologies and model alignment."""

import itertools

import numpy as np
import pytest
from conftest import mlogit_sample, table_from
from hypothesis import given, settings
from hypothesis import strategies as st

from typogen import fixtures as fx
from typogen.comparison import (
    OddsRatioTable,
    Rule,
    RuleTypology,
    alignment_report,
    assign_rule_class,
    assign_rule_classes,
    direction,
    load_table,
    map_typologies,
    swap,
)
from typogen.errors import ConfigError
from typogen.modeling import ModelSpec, fit_mlogit
from typogen.patterns import EXCLUDED, select_head_classes
from typogen.pipeline import PATTERN_TYPOLOGY, TREE_TYPOLOGY
from typogen.trees import Leaf, Split, TaxonomicTree

EXPECTED_MAPPING = {"C1": "T1", "C2": "T2", "C3": "T4", "C4": "T3", "C5": "T4", "C6": "T5"}


@pytest.fixture(scope="module")
def head_typology(head_patterns):
    return select_head_classes(head_patterns, 0.79, "top_n_pool", 15)


class TestMapping:
    def test_head_fixture_through_reference_tree(self, head_typology):
        m = map_typologies(head_typology, fx.REFERENCE_TREE)
        assert dict(m.pairs) == EXPECTED_MAPPING
        assert m.unmapped == ()
        assert m.inverse()["T4"] == ["C3", "C5"]

    def test_pipeline_mapping(self, survey_run):
        assert dict(survey_run.mapping.pairs) == EXPECTED_MAPPING

    def test_classes_are_subsets_of_leaves(self, survey_run):
        pat = survey_run.assignments[PATTERN_TYPOLOGY]
        tree = survey_run.assignments[TREE_TYPOLOGY]
        for c, leaf in survey_run.mapping.pairs:
            assert {t for p, t in zip(pat, tree) if p == c} == {leaf}
        assert EXCLUDED not in tree

    def test_single_leaf(self, head_typology):
        m = map_typologies(head_typology, TaxonomicTree(Leaf(435)))
        assert set(dict(m.pairs).values()) == {"T1"}
        assert len(m.pairs) == head_typology.k

    def test_foreign_question(self, head_typology):
        with pytest.raises(ConfigError, match="outside the pattern set"):
            map_typologies(head_typology, TaxonomicTree(Split("elsewhere", Leaf(1), Leaf(1))))

    def test_routing_is_a_function(self, head_typology):
        a = map_typologies(head_typology, fx.REFERENCE_TREE)
        b = map_typologies(head_typology, fx.REFERENCE_TREE)
        assert a == b
        assert [c for c, _ in a.pairs] == head_typology.labels

    def test_unmapped_leaves(self, head_typology):
        top = head_typology.classes[:1]
        t = head_typology.__class__(top, 0, 1, "all_respondents", 0.1)
        m = map_typologies(t, fx.REFERENCE_TREE)
        assert m["C1"] == "T1"
        assert m.unmapped == ("T2", "T3", "T4", "T5")


BAUMER = RuleTypology("b", (Rule("B2", (("deactivated", True),)), Rule("B3", (("takenBreak", True),)), Rule("B1")))


class TestRules:
    @pytest.mark.parametrize("deact,brk,label", [(1, 1, "B2"), (0, 0, "B1"), (0, 1, "B3"), (1, 0, "B2")])
    def test_examples(self, deact, brk, label):
        assert assign_rule_class({"deactivated": deact, "takenBreak": brk}, BAUMER) == label

    def test_from_dict(self):
        rt = RuleTypology.from_dict({"name": "b", "rules": [
            {"label": "B2", "when": {"deactivated": "Y"}}, {"label": "B3", "when": {"takenBreak": "yes"}},
            {"label": "B1"}]})
        assert rt == BAUMER
        assert rt.rules[0].describe() == "deactivated=Y"
        assert rt.rules[-1].describe() == "otherwise"

    @pytest.mark.parametrize("rules", [
        (Rule("a", (("q", True),)),),
        (Rule("a"), Rule("b")),
        (Rule("a", (("q", True),)), Rule("a")),
        (),
    ])
    def test_validation(self, rules):
        with pytest.raises(ConfigError):
            RuleTypology("bad", rules)

    def test_bad_literal(self):
        with pytest.raises(ConfigError, match="Y/N"):
            RuleTypology.from_dict({"name": "b", "rules": [{"label": "x", "when": {"q": "maybe"}}, {"label": "y"}]})

    def test_unknown_question(self, head_dataset):
        rt = RuleTypology("b", (Rule("x", (("nope", True),)), Rule("y")))
        with pytest.raises(ConfigError, match="nope"):
            assign_rule_classes(head_dataset, rt)

    def test_dataset_counts(self, head_dataset):
        labels = assign_rule_classes(head_dataset, BAUMER)
        X = head_dataset.binary_matrix(["deactivated", "takenBreak"])
        assert labels.count("B2") == int(X[:, 0].sum())
        assert labels.count("B3") == int(((X[:, 0] == 0) & (X[:, 1] == 1)).sum())

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.sampled_from([None, True, False]), min_size=3, max_size=3), min_size=2, max_size=4),
           st.randoms(use_true_random=False))
    def test_order_matters_only_on_overlap(self, specs, rnd):
        qs = ("a", "b", "c")
        rules = [Rule(f"L{i}", tuple((q, v) for q, v in zip(qs, s) if v is not None))
                 for i, s in enumerate(specs) if any(v is not None for v in s)]
        if not rules:
            return
        perm = rules[:]
        rnd.shuffle(perm)
        one = RuleTypology("x", tuple(rules) + (Rule("rest"),))
        two = RuleTypology("x", tuple(perm) + (Rule("rest"),))
        for bits in itertools.product([False, True], repeat=3):
            rec = dict(zip(qs, bits))
            if sum(r.matches(rec) for r in rules) < 2:
                assert assign_rule_class(rec, one) == assign_rule_class(rec, two)


class TestDirection:
    @pytest.mark.parametrize("ors,want", [
        ([1.2, 1.5], ("above", 0)),
        ([0.9, 0.5], ("below", 0)),
        ([0.9, 1.1], ("mixed", 0)),
        ([1.0, 1.3], ("above", 1)),
        ([1.0 + 1e-12, 1.0], ("neutral", 2)),
        ([1.0 - 1e-6, 1.0], ("below", 1)),
    ])
    def test_cases(self, ors, want):
        assert direction(ors) == want


@pytest.fixture(scope="module")
def published():
    return alignment_report(load_table("or_curve"), load_table("or_tree"), names=("curve", "tree"))


class TestAlignment:
    def test_published_tables(self, published):
        assert published.with_status("both_retained") == ["Relapse", "Daily Routine", "Affective Gratification", "Age"]
        assert published.aligned == ["Relapse", "Age"]
        assert published.divergent == ["Daily Routine", "Affective Gratification"]
        assert published.with_status("A_only") == ["Pride", "FBI-Friend", "Escape"]
        assert published.with_status("B_only") == ["SoPA", "SalTolMood", "WithdrConfl", "Connectedness"]
        assert published["Relapse"].direction_a == "above"
        assert published["Age"].direction_b == "below"

    def test_each_predictor_once(self, published):
        names = [e.predictor for e in published.entries]
        a, b = load_table("or_curve"), load_table("or_tree")
        assert sorted(names) == sorted(set(a.predictors) | set(b.predictors))

    def test_ranges(self, published):
        assert published["Relapse"].range_a == (1.23, 1.81)

    def test_swap_symmetry(self, published):
        s = swap(published)
        direct = alignment_report(load_table("or_tree"), load_table("or_curve"))
        assert set(s.with_status("A_only")) == set(published.with_status("B_only"))
        assert set(s.with_status("B_only")) == set(published.with_status("A_only"))
        for e in published.entries:
            assert s[e.predictor].agree == e.agree == direct[e.predictor].agree

    def test_reflexive(self):
        table, names = mlogit_sample(3, n=300, informative=2, noise=1)
        fit = fit_mlogit(table, ModelSpec("y", tuple(names)))
        rep = alignment_report(fit, fit)
        assert rep.with_status("both_retained") == names
        for e in rep.entries:
            assert e.direction_a == e.direction_b and e.range_a == e.range_b

    def test_disjoint(self):
        A = OddsRatioTable(("b",), {"x": (1.5,)})
        B = OddsRatioTable(("b",), {"z": (0.5,)})
        rep = alignment_report(A, B)
        assert rep.with_status("both_retained") == []
        assert rep["x"].agree is None

    def test_neutral_not_agreement(self):
        A = OddsRatioTable(("b", "c"), {"x": (1.0, 1.0)})
        rep = alignment_report(A, A)
        assert rep["x"].direction_a == "neutral" and rep["x"].neutral_a == 2
        assert rep.divergent == ["x"]

    def test_rules_table_agrees_with_curve_on_relapse(self):
        rep = alignment_report(load_table("or_curve"), load_table("or_rules"))
        assert "Relapse" in rep.aligned
        assert rep["Daily Routine"].opposite

    def test_unconverged_fit(self):
        import dataclasses

        table, names = mlogit_sample(4, n=200, informative=1, noise=0)
        fit = dataclasses.replace(fit_mlogit(table, ModelSpec("y", tuple(names))), converged=False)
        with pytest.raises(ConfigError, match="converged"):
            alignment_report(fit, fit)

    def test_categorical_term_pools_dummies(self):
        X = np.random.default_rng(1).integers(0, 2, (200, 2)).astype(float)
        lab = np.where(np.random.default_rng(2).random(200) < 0.5, "a", "b")
        fit = fit_mlogit(table_from(X, lab, ["d1", "d2"]), ModelSpec("y", ("d1", "d2")))
        fit_terms = OddsRatioTable.from_fit(fit)
        assert set(fit_terms.rows) == {"d1", "d2"}
        assert all(len(v) == 1 for v in fit_terms.rows.values())

    def test_markdown(self, published):
        md = published.to_markdown()
        assert "## Alignment" in md and "## Divergence" in md
        assert "- Relapse: retained in both models with every odds ratio greater than one" in md
        assert "Retained only in curve: Pride, FBI-Friend, Escape." in md
        assert "Retained only in tree: SoPA, SalTolMood, WithdrConfl, Connectedness." in md

    def test_to_dict(self, published):
        d = published.to_dict()
        assert d["summary"]["aligned"] == ["Relapse", "Age"]
        assert d["predictors"][0]["direction_agreement"] is True
        assert "direction_agreement" not in d["predictors"][-1]
