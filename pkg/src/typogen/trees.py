"""Taxonomic-tree typology.

A taxonomic tree splits respondents on one Yes/No question at a time; its
leaves are the types. All admissible trees are enumerated (a split is
admissible when both halves keep at least ``min_leaf_grow`` members),
filtered on leaf sizes and excluded questions, and ranked by the variance
of their leaf sizes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .dataset import SurveyDataset
from .errors import ConfigError, EmptyCandidateSetError, EnumerationLimitError

logger = logging.getLogger(__name__)

DEFAULT_MIN_LEAF_GROW = 40
DEFAULT_MIN_LEAF_FILTER = 51
DEFAULT_MAX_CANDIDATES = 10**6


@dataclass(frozen=True)
class Leaf:
    count: int

    def serialize(self) -> str:
        return f"[{self.count}]"


@dataclass(frozen=True)
class Split:
    question: str
    no: "Node"
    yes: "Node"

    def serialize(self) -> str:
        return f"({self.question}:{self.no.serialize()}|{self.yes.serialize()})"


Node = Union[Leaf, Split]


def _leaves(node: Node) -> list[Leaf]:
    if isinstance(node, Leaf):
        return [node]
    return _leaves(node.no) + _leaves(node.yes)


def _preorder(node: Node) -> list[str]:
    if isinstance(node, Leaf):
        return []
    return [node.question, *_preorder(node.no), *_preorder(node.yes)]


def _paths_ok(node: Node, used: frozenset = frozenset()) -> bool:
    if isinstance(node, Leaf):
        return True
    if node.question in used:
        return False
    used = used | {node.question}
    return _paths_ok(node.no, used) and _paths_ok(node.yes, used)


@dataclass(frozen=True)
class TaxonomicTree:
    """Binary tree over Yes/No questions. Leaves are labelled T1..Tm in
    depth-first order, visiting the No branch before the Yes branch."""

    root: Node

    @cached_property
    def leaves(self) -> tuple[Leaf, ...]:
        return tuple(_leaves(self.root))

    @property
    def leaf_counts(self) -> tuple[int, ...]:
        return tuple(l.count for l in self.leaves)

    @property
    def labels(self) -> list[str]:
        return [f"T{i}" for i in range(1, len(self.leaves) + 1)]

    @property
    def n(self) -> int:
        return sum(self.leaf_counts)

    @cached_property
    def preorder_questions(self) -> tuple[str, ...]:
        return tuple(_preorder(self.root))

    @property
    def split_questions(self) -> set[str]:
        return set(self.preorder_questions)

    @cached_property
    def canonical(self) -> str:
        return self.root.serialize()

    def canonical_structure(self) -> str:
        """Serialization ignoring leaf counts."""

        def walk(node):
            if isinstance(node, Leaf):
                return "[]"
            return f"({node.question}:{walk(node.no)}|{walk(node.yes)})"

        return walk(self.root)

    def leaf_variance(self) -> Fraction:
        """Population variance of leaf sizes, exact."""
        c = self.leaf_counts
        m = len(c)
        return Fraction(sum(x * x for x in c), m) - Fraction(sum(c), m) ** 2

    def has_valid_paths(self) -> bool:
        return _paths_ok(self.root)

    def route(self, record: Mapping) -> str:
        """Leaf label for a respondent's answers."""
        node, idx = self.root, 0
        while isinstance(node, Split):
            if record[node.question]:
                idx += len(_leaves(node.no))
                node = node.yes
            else:
                node = node.no
        return f"T{idx + 1}"

    def to_dict(self) -> dict:
        labels = iter(self.labels)

        def walk(node):
            if isinstance(node, Leaf):
                return {"label": next(labels), "count": node.count}
            return {"question": node.question, "no": walk(node.no), "yes": walk(node.yes)}

        return walk(self.root)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaxonomicTree":
        def walk(x):
            if "question" in x:
                return Split(str(x["question"]), walk(x["no"]), walk(x["yes"]))
            return Leaf(int(x.get("count", 0)))

        return cls(walk(d))

    def summary(self) -> dict:
        return {
            "canonical": self.canonical,
            "leaf_counts": list(self.leaf_counts),
            "leaf_variance": float(self.leaf_variance()),
            "n_leaves": len(self.leaves),
            "tree": self.to_dict(),
        }


@dataclass(frozen=True)
class TreeConstraints:
    min_leaf_grow: int = DEFAULT_MIN_LEAF_GROW
    min_leaf_filter: int = DEFAULT_MIN_LEAF_FILTER
    max_leaf_filter: int | None = None  # None: ceil(n / 3)
    excluded_questions: frozenset = frozenset()

    def __post_init__(self):
        if self.min_leaf_grow < 1:
            raise ConfigError("min_leaf_grow must be >= 1")
        if self.min_leaf_filter < self.min_leaf_grow:
            raise ConfigError("min_leaf_filter must be >= min_leaf_grow")
        object.__setattr__(self, "excluded_questions", frozenset(self.excluded_questions))

    def resolved_max(self, n: int) -> int:
        mx = math.ceil(n / 3) if self.max_leaf_filter is None else self.max_leaf_filter
        if mx > n:
            raise ConfigError(f"max_leaf_filter {mx} exceeds n={n}")
        return mx


@dataclass(frozen=True)
class TreeCandidateSet:
    trees: tuple[TaxonomicTree, ...]
    stage_counts: dict = field(default_factory=dict)
    n: int = 0

    def __len__(self) -> int:
        return len(self.trees)

    def canonical_set(self) -> set[str]:
        return {t.canonical for t in self.trees}


# ---------------------------------------------------------------------------
# enumeration


class _Enumerator:
    """Memoised recursive enumeration over respondent bitmasks.

    ``count`` runs first so that a run exceeding the cap fails before any
    tree is materialised.
    """

    def __init__(self, masks: Mapping[str, int], order: Sequence[str], min_leaf: int):
        self.masks = masks
        self.order = list(order)
        self.min_leaf = min_leaf
        self._count_memo: dict = {}
        self._build_memo: dict = {}

    def options(self, group: int, avail: tuple[str, ...]):
        for q in avail:
            yes = group & self.masks[q]
            no = group & ~self.masks[q]
            if yes.bit_count() >= self.min_leaf and no.bit_count() >= self.min_leaf:
                rest = tuple(x for x in avail if x != q)
                yield q, no, yes, rest

    def count(self, group: int, avail: tuple[str, ...]) -> int:
        key = (group, avail)
        if key not in self._count_memo:
            total = 1
            for _, no, yes, rest in self.options(group, avail):
                total += self.count(no, rest) * self.count(yes, rest)
            self._count_memo[key] = total
        return self._count_memo[key]

    def build(self, group: int, avail: tuple[str, ...]) -> list[Node]:
        key = (group, avail)
        if key not in self._build_memo:
            out: list[Node] = [Leaf(group.bit_count())]
            for q, no, yes, rest in self.options(group, avail):
                out.extend(self.split_on(q, no, yes, rest))
            self._build_memo[key] = out
        return self._build_memo[key]

    def split_on(self, q, no, yes, rest) -> list[Node]:
        no_subs = self.build(no, rest)
        yes_subs = self.build(yes, rest)
        return [Split(q, a, b) for a in no_subs for b in yes_subs]


def _bitmasks(ds: SurveyDataset, questions: Sequence[str]) -> dict[str, int]:
    X = ds.binary_matrix(list(questions))
    masks = {}
    for j, q in enumerate(questions):
        m = 0
        for i in np.flatnonzero(X[:, j]):
            m |= 1 << int(i)
        masks[q] = m
    return masks


def count_trees(ds: SurveyDataset, questions: Sequence[str], min_leaf_grow: int) -> int:
    en = _Enumerator(_bitmasks(ds, questions), questions, min_leaf_grow)
    return en.count((1 << ds.n) - 1, tuple(questions))


def enumerate_trees(ds: SurveyDataset, questions: Sequence[str],
                    min_leaf_grow: int = DEFAULT_MIN_LEAF_GROW, *,
                    max_candidates: int = DEFAULT_MAX_CANDIDATES, threads: int = 1) -> TreeCandidateSet:
    """Every distinct tree reachable by stopping or splitting on an unused question.

    Non-maximal trees (admissible splits left undone) and the single-leaf
    tree are included. Output order is canonical and does not depend on
    ``threads``.
    """
    if not questions:
        raise ConfigError("at least one question is required")
    if min_leaf_grow < 1:
        raise ConfigError("min_leaf_grow must be >= 1")
    questions = tuple(questions)
    en = _Enumerator(_bitmasks(ds, questions), questions, min_leaf_grow)
    full = (1 << ds.n) - 1
    total = en.count(full, questions)
    if total > max_candidates:
        raise EnumerationLimitError(
            f"{total} candidate trees exceed the cap of {max_candidates}; "
            "raise min_leaf_grow or restrict the question set",
            count=total, cap=max_candidates)

    roots: list[Node] = [Leaf(ds.n)]
    opts = list(en.options(full, questions))
    if threads > 1 and len(opts) > 1:
        # each worker gets its own memo; results are merged in canonical order below
        def work(opt):
            sub = _Enumerator(en.masks, questions, min_leaf_grow)
            return sub.split_on(*opt)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(work, opts):
                roots.extend(part)
    else:
        for opt in opts:
            roots.extend(en.split_on(*opt))

    trees = sorted((TaxonomicTree(r) for r in roots), key=lambda t: t.canonical)
    logger.info("enumerated %d candidate trees over %d questions", len(trees), len(questions))
    return TreeCandidateSet(tuple(trees), {"enumerated": len(trees)}, ds.n)


def filter_trees(cands: TreeCandidateSet, c: TreeConstraints) -> TreeCandidateSet:
    """Apply the minimum-leaf, maximum-leaf and excluded-question filters, in that order."""
    max_leaf = c.resolved_max(cands.n) if cands.n else (c.max_leaf_filter or 0)
    counts = dict(cands.stage_counts)
    counts.setdefault("enumerated", len(cands.trees))
    trees = [t for t in cands.trees if min(t.leaf_counts) >= c.min_leaf_filter]
    counts["min_leaf_filter"] = len(trees)
    trees = [t for t in trees if max(t.leaf_counts) <= max_leaf]
    counts["max_leaf_filter"] = len(trees)
    trees = [t for t in trees if not (t.split_questions & c.excluded_questions)]
    counts["excluded_questions"] = len(trees)
    if not trees:
        raise EmptyCandidateSetError(f"no candidate tree survives the filters: {counts}", counts)
    return TreeCandidateSet(tuple(trees), counts, cands.n)


def selection_key(t: TaxonomicTree):
    return (t.leaf_variance(), len(t.leaves), t.preorder_questions)


def select_tree(cands: TreeCandidateSet | Iterable[TaxonomicTree]) -> TaxonomicTree:
    """Minimum leaf-size variance; ties go to fewer leaves, then the
    lexicographically smallest preorder sequence of split questions."""
    trees = cands.trees if isinstance(cands, TreeCandidateSet) else tuple(cands)
    if not trees:
        raise EmptyCandidateSetError("no candidate trees")
    return min(trees, key=selection_key)


def assign_tree_class(record: Mapping, tree: TaxonomicTree) -> str:
    return tree.route(record)


def assign_tree_classes(ds: SurveyDataset, tree: TaxonomicTree) -> list[str]:
    qs = sorted(tree.split_questions)
    cols = {q: ds.column(q) for q in qs}
    return [tree.route({q: bool(cols[q][i]) for q in qs}) for i in range(ds.n)]


def recount(tree: TaxonomicTree, ds: SurveyDataset) -> TaxonomicTree:
    """Same structure with leaf counts taken from ``ds``."""

    def walk(node, mask):
        if isinstance(node, Leaf):
            return Leaf(int(mask.sum()))
        col = ds.column(node.question).astype(bool)
        return Split(node.question, walk(node.no, mask & ~col), walk(node.yes, mask & col))

    return TaxonomicTree(walk(tree.root, np.ones(ds.n, bool)))
