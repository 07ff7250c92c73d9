"""Synthetic survey data matching published aggregates.

The raw survey behind the published tables is not available, so tests and
demos run on synthetic respondents built to reproduce the aggregates
exactly where they are counts (the fifteen most common answer patterns and
the sizes of the five tree leaves) and approximately where they are
statistics (the correlations between the typology questions). Likert
scale items are generated from a factor model shaped like the published
loading tables, with a few latent traits shifted by how many non-use
behaviours a respondent reports so that the typologies are predictable.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .dataset import QuestionDef, SurveyDataset
from .errors import DataError
from .trees import Leaf, Split, TaxonomicTree, TreeConstraints

# ---------------------------------------------------------------------------
# published aggregates

TYPOLOGY_QUESTIONS = (
    ("FB", "I currently have an active Facebook account."),
    ("FBmorethan1", "I have more than one Facebook account."),
    ("deactivated", "At some time, I have deactivated my Facebook account."),
    ("deleted", "At some time, I have permanently deleted my Facebook account."),
    ("takenBreak", "At some time, I have voluntarily taken a break from Facebook for a week or more."),
    ("usedSoftwareToLimit", "At some time, I have used software to limit my Facebook usage."),
    ("deletedApp", "At some time, I have deleted the Facebook app from my phone."),
    ("neverHad", "I have never had a Facebook account."),
    ("ownChoice", "It is my own choice whether or not I use Facebook."),
)
INCLUDED_QUESTIONS = tuple(q for q, _ in TYPOLOGY_QUESTIONS[:7])

# (behaviours answered Yes, respondents); row 12's doubled "+" read as a single join
HEAD_PATTERN_ROWS = (
    (("FB",), 127),
    (("FB", "takenBreak"), 99),
    (("FB", "takenBreak", "deactivated", "deletedApp"), 44),
    (("FB", "takenBreak", "deletedApp"), 34),
    (("FB", "takenBreak", "deactivated"), 21),
    (("FB", "takenBreak", "deactivated", "deletedApp", "deleted"), 21),
    (("FB", "takenBreak", "deactivated", "deletedApp", "FBmorethan1"), 14),
    (("FB", "FBmorethan1"), 14),
    (("takenBreak", "deactivated", "deletedApp", "deleted"), 10),
    (("FB", "deactivated"), 10),
    (("FB", "takenBreak", "FBmorethan1"), 9),
    (("FB", "takenBreak", "deactivated", "deletedApp", "usedSoftwareToLimit"), 9),
    (("FB", "takenBreak", "deactivated", "deletedApp", "deleted", "usedSoftwareToLimit"), 9),
    (("deactivated", "takenBreak", "deletedApp"), 7),
    (("FB", "deletedApp"), 7),
)

REFERENCE_TREE = TaxonomicTree(
    Split("deleted",
          Split("deactivated",
                Split("deletedApp",
                      Split("takenBreak", Leaf(150), Leaf(117)),
                      Leaf(55)),
                Leaf(118)),
          Leaf(74)))
REFERENCE_LEAF_COUNTS = {"T1": 150, "T2": 117, "T3": 55, "T4": 118, "T5": 74}

# phi coefficients between the seven included questions, in INCLUDED_QUESTIONS order
TYPOLOGY_CORRELATIONS = np.array([
    [1.00, 0.09, -0.19, -0.33, -0.04, 0.00, -0.17],
    [0.09, 1.00, 0.12, 0.06, 0.04, 0.02, 0.07],
    [-0.19, 0.12, 1.00, 0.45, 0.37, 0.16, 0.55],
    [-0.33, 0.06, 0.45, 1.00, 0.22, 0.24, 0.36],
    [-0.04, 0.04, 0.37, 0.22, 1.00, 0.20, 0.42],
    [0.00, 0.02, 0.16, 0.24, 0.20, 1.00, 0.23],
    [-0.17, 0.07, 0.55, 0.36, 0.42, 0.23, 1.00],
])

SURVEY_N = 514
SURVEY_DISTINCT_PATTERNS = 50
OWN_CHOICE_NO = 10  # 10/514 = 1.9%


# ---------------------------------------------------------------------------
# binary answer synthesis


@dataclass
class TailSpec:
    """Long-tail respondents added to a head of fixed pattern counts.

    ``route`` assigns each answer vector to a leaf; the tail supplies
    ``leaf_targets[label]`` minus whatever the head already routes there.
    """

    route: TaxonomicTree
    leaf_targets: Mapping[str, int]
    n_patterns: int | None = None
    max_count: int = 5
    target_corr: np.ndarray | None = None
    corr_weights: Mapping[tuple[str, str], float] = field(default_factory=dict)
    iterations: int = 40000
    # when set, the tail is also steered so that the route tree wins selection under these constraints
    selection_constraints: TreeConstraints | None = None
    max_rounds: int = 6


@dataclass
class FixtureSpec:
    questions: tuple[str, ...]
    head: tuple[tuple[tuple[str, ...], int], ...]
    tail: TailSpec | None = None


def _vector(yes: Sequence[str], questions: Sequence[str]) -> tuple[int, ...]:
    unknown = set(yes) - set(questions)
    if unknown:
        raise DataError(f"pattern names unknown questions: {sorted(unknown)}")
    return tuple(int(q in yes) for q in questions)


def _corr_from_moments(s1, s2, n):
    mean = s1 / n
    cov = s2 / n - np.outer(mean, mean)
    sd = np.sqrt(np.clip(np.diag(cov), 1e-300, None))
    return cov / np.outer(sd, sd)


def synthesize_fixture(spec: FixtureSpec, seed: int = 0) -> np.ndarray:
    """Binary answer matrix (respondents x questions), rows shuffled with ``seed``.

    Head patterns appear exactly with their stated counts. Tail respondents
    use patterns absent from the head, at most ``max_count`` respondents per
    pattern, routed to meet the leaf targets exactly; their patterns are
    chosen by seeded annealing toward the target correlations.
    """
    qs = tuple(spec.questions)
    rng = np.random.default_rng(seed)
    head = {}
    for yes, count in spec.head:
        v = _vector(yes, qs)
        if v in head:
            raise DataError(f"duplicate head pattern {yes}")
        if count < 0:
            raise DataError("pattern counts must be nonnegative")
        head[v] = count
    rows = [v for v, c in head.items() for _ in range(c)]
    if spec.tail is not None:
        rows.extend(_synthesize_tail(spec.tail, qs, head, rng))
    X = np.array(rows, dtype=bool).reshape(len(rows), len(qs))
    return X[rng.permutation(len(X))]


def _synthesize_tail(tail: TailSpec, qs, head, rng) -> list[tuple[int, ...]]:
    route = tail.route
    label_of = lambda v: route.route(dict(zip(qs, map(bool, v))))  # noqa: E731
    routed = Counter()
    for v, c in head.items():
        routed[label_of(v)] += c
    need = {}
    for label, target in tail.leaf_targets.items():
        extra = target - routed.get(label, 0)
        if extra < 0:
            raise DataError(f"inconsistent aggregates: head patterns already route "
                            f"{routed[label]} respondents to {label}, above its target {target}")
        need[label] = extra
    stray = set(routed) - set(tail.leaf_targets)
    if stray:
        raise DataError(f"head patterns route to leaves without targets: {sorted(stray)}")

    allowed = {lab: [] for lab in need}
    for v in product((0, 1), repeat=len(qs)):
        if v not in head:
            lab = label_of(v)
            if lab in allowed:
                allowed[lab].append(v)
    for lab, k in need.items():
        if k and len(allowed[lab]) * tail.max_count < k:
            raise DataError(f"inconsistent aggregates: leaf {lab} cannot absorb {k} tail respondents")

    slots = [lab for lab in sorted(need) for _ in range(need[lab])]
    if not slots:
        return []
    state = [allowed[lab][rng.integers(len(allowed[lab]))] for lab in slots]
    search = _TailSearch(tail, qs, head, allowed, slots)
    rivals: list[TaxonomicTree] = []
    state = search.anneal(state, rivals, rng, t0=0.01)
    if tail.selection_constraints is not None:
        # re-anneal against every filtered tree that still beats the route tree
        for _ in range(tail.max_rounds):
            beaten = search.rivals_beating_route(state)
            if not beaten:
                break
            rivals.extend(t for t in beaten if t.canonical not in {r.canonical for r in rivals})
            state = search.anneal(state, rivals, rng, t0=0.002)
        else:
            if search.rivals_beating_route(state):
                raise DataError("could not synthesize a tail under which the route tree is selected")

    final = Counter(state)
    if max(final.values()) > tail.max_count:
        raise DataError("could not keep tail pattern counts within max_count")
    if tail.n_patterns is not None and len(final) != tail.n_patterns:
        raise DataError(f"tail search ended with {len(final)} distinct patterns, wanted {tail.n_patterns}")
    return state


class _TailSearch:
    """Seeded annealing over tail patterns; moves never change a respondent's leaf."""

    def __init__(self, tail: TailSpec, qs, head, allowed, slots):
        self.tail, self.qs, self.head, self.allowed, self.slots = tail, qs, head, allowed, slots
        self.H = np.array([v for v, c in head.items() for _ in range(c)], dtype=float).reshape(-1, len(qs))
        self.n = len(self.H) + len(slots)
        self.iu = np.triu_indices(len(qs), 1)
        self.W = np.ones((len(qs), len(qs)))
        for (a, b), w in tail.corr_weights.items():
            i, j = qs.index(a), qs.index(b)
            self.W[i, j] = self.W[j, i] = w
        self.route_variance = float(np.var(list(tail.leaf_targets.values())))

    def _leaf_index(self, tree: TaxonomicTree):
        cache = {}

        def f(v):
            if v not in cache:
                cache[v] = int(tree.route(dict(zip(self.qs, map(bool, v))))[1:]) - 1
            return cache[v]

        return f

    def rivals_beating_route(self, state) -> list[TaxonomicTree]:
        from .trees import enumerate_trees, filter_trees, selection_key
        from .errors import EmptyCandidateSetError

        X = np.vstack([self.H, np.array(state, dtype=float)]).astype(bool)
        ds = binary_dataset(X, self.qs)
        c = self.tail.selection_constraints
        try:
            cands = filter_trees(enumerate_trees(ds, self.qs, c.min_leaf_grow), c)
        except EmptyCandidateSetError:
            return []
        route_key = self.tail.route.canonical_structure()
        mine = [t for t in cands.trees if t.canonical_structure() == route_key]
        if not mine:
            return []
        best = selection_key(mine[0])
        return [t for t in cands.trees if selection_key(t) < best]

    def anneal(self, state, rivals, rng, t0):
        tail, W, iu, n = self.tail, self.W, self.iu, self.n
        state = list(state)
        T = np.array(state, dtype=float)
        s1 = self.H.sum(0) + T.sum(0)
        s2 = self.H.T @ self.H + T.T @ T
        target = tail.target_corr
        counts = Counter(state)
        rival_idx = [self._leaf_index(r) for r in rivals]
        rival_counts = []
        for r, idx in zip(rivals, rival_idx):
            rc = np.zeros(len(r.leaves))
            for v, c in self.head.items():
                rc[idx(v)] += c
            for v in state:
                rc[idx(v)] += 1
            rival_counts.append(rc)
        margin = 25.0

        def objective(s1, s2, counts, rcs):
            val = 0.0
            if target is not None:
                with np.errstate(invalid="ignore", divide="ignore"):
                    C = _corr_from_moments(s1, s2, n)
                val += float((W[iu] * (C - target)[iu] ** 2).sum())
            over = sum(max(0, c - tail.max_count) for c in counts.values())
            val += 0.05 * over
            if tail.n_patterns is not None:
                val += 0.01 * abs(len(counts) - tail.n_patterns)
            for rc in rcs:
                val += 1e-3 * max(0.0, self.route_variance + margin - float(np.var(rc)))
            return val

        cur = objective(s1, s2, counts, rival_counts)
        for it in range(tail.iterations):
            i = int(rng.integers(len(state)))
            old = state[i]
            cand = self.allowed[self.slots[i]]
            new = cand[rng.integers(len(cand))]
            if new == old:
                continue
            vo, vn = np.array(old, float), np.array(new, float)
            s1n = s1 - vo + vn
            s2n = s2 - np.outer(vo, vo) + np.outer(vn, vn)
            counts[old] -= 1
            if counts[old] == 0:
                del counts[old]
            counts[new] += 1
            rcs = []
            for rc, idx in zip(rival_counts, rival_idx):
                rc = rc.copy()
                rc[idx(old)] -= 1
                rc[idx(new)] += 1
                rcs.append(rc)
            val = objective(s1n, s2n, counts, rcs)
            temp = t0 * (1 - it / tail.iterations) + 1e-9
            if val <= cur or rng.random() < math.exp((cur - val) / temp):
                state[i], s1, s2, cur, rival_counts = new, s1n, s2n, val, rcs
            else:
                counts[new] -= 1
                if counts[new] == 0:
                    del counts[new]
                counts[old] += 1
        return state


def head_fixture_spec() -> FixtureSpec:
    """Head only: 435 respondents over the seven included questions."""
    return FixtureSpec(INCLUDED_QUESTIONS, HEAD_PATTERN_ROWS)


def survey_fixture_spec() -> FixtureSpec:
    """The 435-respondent head plus a 79-respondent tail reaching the reference tree's leaf sizes."""
    return FixtureSpec(
        INCLUDED_QUESTIONS,
        HEAD_PATTERN_ROWS,
        TailSpec(
            route=REFERENCE_TREE,
            leaf_targets=REFERENCE_LEAF_COUNTS,
            n_patterns=SURVEY_DISTINCT_PATTERNS - len(HEAD_PATTERN_ROWS),
            max_count=5,
            target_corr=TYPOLOGY_CORRELATIONS,
            corr_weights={("deactivated", "deletedApp"): 10.0},
            selection_constraints=TreeConstraints(40, 51, None, frozenset({"FBmorethan1"})),
        ),
    )


# ---------------------------------------------------------------------------
# psychometric items

# Each scale: (item ids with text, generator loadings items x factors, factor names, likert range)
BFAS_ITEMS = (
    ("bfas1", "Spent a lot of time thinking about Facebook use"),
    ("bfas2", "Felt an urge to use Facebook more and more"),
    ("bfas3", "Used Facebook to forget about personal problems"),
    ("bfas4", "Became restless if Facebook use was prohibited"),
    ("bfas5", "Facebook use had a negative impact on job or studies"),
    ("bfas6", "Tried to cut down Facebook use without success"),
)
BFAS_LOADINGS = np.array([
    [0.70, 0.30, 0.00],
    [0.75, 0.00, 0.30],
    [0.30, 0.65, 0.00],
    [0.00, 0.72, 0.30],
    [0.30, 0.00, 0.68],
    [0.00, 0.30, 0.70],
])
BFAS_FACTORS = ("SalTolMood", "WithdrConfl", "Relapse")

FBI_ITEMS = (
    ("fbi1", "I feel out of touch when I haven't logged onto Facebook for a while"),
    ("fbi2", "I feel I am part of the Facebook community"),
    ("fbi3", "I would be sorry if Facebook shut down"),
    ("fbi4", "Facebook is part of my everyday activity"),
    ("fbi5", "Facebook has become part of my daily routine"),
    ("fbi6", "I am proud to tell people I am or was on Facebook"),
)
FBI_LOADINGS = np.array([
    [0.70, 0.30, 0.00],
    [0.30, 0.00, 0.66],
    [0.74, 0.00, 0.30],
    [0.00, 0.74, 0.30],
    [0.30, 0.70, 0.00],
    [0.00, 0.30, 0.70],
])
FBI_FACTORS = ("Connectedness", "Daily Routine", "Pride")

SOA_ITEMS = (
    ("soa1", "I am just an instrument in the hands of something else"),
    ("soa2", "My actions just happen without my intention"),
    ("soa3", "Consequences of my actions don't logically follow my actions"),
    ("soa4", "My movements are automatic, my body simply makes them"),
    ("soa5", "The outcomes of my actions generally surprise me"),
    ("soa6", "Nothing I do is actually voluntary"),
    ("soa7", "I feel like I am a remote-controlled robot"),
    ("soa8", "I am in full control of what I do"),
    ("soa9", "I am the author of my actions"),
    ("soa10", "Things I do are subject only to my free will"),
    ("soa11", "The decision whether and when to act is within my hands"),
    ("soa12", "My behavior is planned by me from the beginning to the end"),
    ("soa13", "I am responsible for everything that results from my actions"),
)
SOA_LOADINGS = np.array([
    [0.57, -0.21], [0.70, 0.0], [0.71, 0.0], [0.64, 0.0], [0.75, 0.0], [0.50, 0.0], [0.68, 0.0],
    [0.0, 0.60], [-0.23, 0.74], [0.0, 0.55], [0.0, 0.63], [0.0, 0.55], [0.0, 0.67],
])
SOA_FACTORS = ("SoNA", "SoPA")

LEINER_ITEMS = (
    ("leiner1", "I use Facebook because it makes me ease off"),
    ("leiner2", "I use Facebook to inform myself about certain topics"),
    ("leiner3", "I use Facebook to receive advice and recommendations"),
    ("leiner4", "I use Facebook to express who I am"),
    ("leiner5", "I use Facebook to share my views and opinions"),
    ("leiner6", "I use Facebook to keep in touch with friends"),
    ("leiner7", "I use Facebook to exchange with my friends and family"),
    ("leiner8", "I use Facebook because I am bored"),
    ("leiner9", "I use Facebook to occupy myself"),
    ("leiner10", "I use Facebook because it is fun"),
    ("leiner11", "I use Facebook because it is entertaining"),
)
LEINER_LOADINGS = np.array([
    [0.50, 0.00, 0.31, 0.00],
    [0.57, 0.31, 0.00, 0.31],
    [0.61, 0.00, 0.00, 0.00],
    [0.72, 0.00, 0.00, 0.00],
    [0.73, 0.00, 0.00, 0.00],
    [0.00, 0.89, 0.00, 0.00],
    [0.31, 0.70, 0.00, 0.00],
    [0.00, 0.00, 0.68, 0.00],
    [0.00, 0.00, 0.81, 0.00],
    [0.39, 0.35, 0.00, 0.61],
    [0.34, 0.33, 0.00, 0.84],
])
LEINER_FACTORS = ("Personal integration", "Social integration", "Escape", "Affective Gratification")

# ten-item personality inventory: (item, dimension, reverse-keyed)
TIPI_KEY = (
    ("tipi1", "Extraversion", False), ("tipi6", "Extraversion", True),
    ("tipi2", "Agreeableness", True), ("tipi7", "Agreeableness", False),
    ("tipi3", "Conscientiousness", False), ("tipi8", "Conscientiousness", True),
    ("tipi4", "Neuroticism", False), ("tipi9", "Neuroticism", True),
    ("tipi5", "Openness", False), ("tipi10", "Openness", True),
)

# marker item per factor: the item whose loading identifies the factor after rotation
FACTOR_MARKERS = {
    "SalTolMood": "bfas2", "WithdrConfl": "bfas4", "Relapse": "bfas6",
    "Connectedness": "fbi3", "Daily Routine": "fbi4", "Pride": "fbi6",
    "SoNA": "soa5", "SoPA": "soa9",
    "Personal integration": "leiner5", "Social integration": "leiner6",
    "Escape": "leiner9", "Affective Gratification": "leiner11",
}

# latent shift per SD of non-use intensity
INTENSITY_EFFECTS = {
    "Relapse": 0.45, "SalTolMood": 0.10, "Daily Routine": -0.35, "Affective Gratification": -0.20,
    "Pride": 0.15, "Escape": -0.10, "SoPA": 0.10,
}

LATENT_CORRELATION = 0.3

SURVEY_SCALES = (
    ("BFAS", BFAS_ITEMS, BFAS_LOADINGS, BFAS_FACTORS, (1, 5)),
    ("FBI", FBI_ITEMS, FBI_LOADINGS, FBI_FACTORS, (1, 5)),
    ("SoA", SOA_ITEMS, SOA_LOADINGS, SOA_FACTORS, (1, 7)),
    ("Leiner", LEINER_ITEMS, LEINER_LOADINGS, LEINER_FACTORS, (1, 5)),
)


def _likert(z, lo, hi):
    mid = (lo + hi) / 2
    scale = (hi - lo) / 4
    return np.clip(np.rint(mid + z * scale), lo, hi).astype(np.int64)


def survey_schema() -> tuple[QuestionDef, ...]:
    qs = [QuestionDef(q, "binary", "typology", text) for q, text in TYPOLOGY_QUESTIONS]
    for _, items, _, _, (lo, hi) in SURVEY_SCALES:
        qs += [QuestionDef(i, "likert", "scale-item", text, lo, hi) for i, text in items]
    qs.append(QuestionDef("fbi_friends", "likert", "scale-item", "Approximate number of Facebook friends (binned)", 1, 9))
    qs.append(QuestionDef("fbi_time", "likert", "scale-item", "Time spent on Facebook per day (binned)", 1, 6))
    qs += [QuestionDef(i, "likert", "scale-item", f"TIPI item {i[4:]}", 1, 7) for i, _, _ in
           sorted(TIPI_KEY, key=lambda t: int(t[0][4:]))]
    qs += [
        QuestionDef("age", "numeric", "demographic", "Age in years"),
        QuestionDef("gender", "categorical", "demographic", "Gender", levels=("female", "male", "other")),
        QuestionDef("income", "likert", "demographic", "Household income bracket", 1, 9),
        QuestionDef("marital", "categorical", "demographic", "Marital status",
                    levels=("married", "single", "divorced")),
        QuestionDef("politics", "likert", "demographic", "Political views, very liberal to very conservative", 1, 7),
    ]
    return tuple(qs)


def synthesize_survey_dataset(seed: int = 0, spec: FixtureSpec | None = None) -> SurveyDataset:
    """Full synthetic survey: typology answers, scale items and demographics."""
    rng = np.random.default_rng(seed)
    spec = spec or survey_fixture_spec()
    B = synthesize_fixture(spec, seed=int(rng.integers(2**31)))
    n = len(B)
    cols: dict[str, np.ndarray] = {q: B[:, j] for j, q in enumerate(spec.questions)}
    cols["neverHad"] = np.zeros(n, bool)
    own = np.ones(n, bool)
    own[rng.choice(n, size=min(OWN_CHOICE_NO, n), replace=False)] = False
    cols["ownChoice"] = own

    behaviours = [q for q in ("deactivated", "deleted", "takenBreak", "deletedApp", "usedSoftwareToLimit")
                  if q in cols]
    intensity = np.sum([cols[q] for q in behaviours], axis=0).astype(float)
    intensity = (intensity - intensity.mean()) / (intensity.std() or 1.0)

    latents: dict[str, np.ndarray] = {}
    for _, items, L, factors, (lo, hi) in SURVEY_SCALES:
        k = len(factors)
        # correlated factors within a scale; with orthogonal ones a factor
        # measured by two items is not identified
        C = np.full((k, k), LATENT_CORRELATION) + (1 - LATENT_CORRELATION) * np.eye(k)
        F = rng.standard_normal((n, k)) @ np.linalg.cholesky(C).T
        for j, name in enumerate(factors):
            F[:, j] += INTENSITY_EFFECTS.get(name, 0.0) * intensity
            latents[name] = F[:, j]
        psi = np.clip(1 - (L ** 2).sum(axis=1), 0.05, None)
        Z = F @ L.T + rng.standard_normal((n, len(items))) * np.sqrt(psi)
        for k, (item, _) in enumerate(items):
            cols[item] = _likert(Z[:, k], lo, hi)

    cols["fbi_friends"] = np.clip(np.rint(5 + 1.2 * latents["Connectedness"] + rng.normal(0, 1.5, n)), 1, 9).astype(np.int64)
    cols["fbi_time"] = np.clip(np.rint(3.5 + 0.9 * latents["Daily Routine"] + rng.normal(0, 1.0, n)), 1, 6).astype(np.int64)

    traits = {d: rng.standard_normal(n) for d in ("Extraversion", "Agreeableness", "Conscientiousness",
                                                  "Neuroticism", "Openness")}
    for item, dim, rev in TIPI_KEY:
        z = 0.75 * traits[dim] * (-1 if rev else 1) + rng.normal(0, 0.66, n)
        cols[item] = _likert(z, 1, 7)

    cols["age"] = np.clip(np.rint(47 - 5 * intensity + rng.normal(0, 13, n)), 18, 85).astype(float)
    cols["gender"] = np.array(rng.choice(["female", "male"], size=n), dtype=object)
    cols["income"] = rng.integers(1, 10, n).astype(np.int64)
    cols["marital"] = np.array(rng.choice(["married", "single", "divorced"], size=n, p=[0.5, 0.35, 0.15]),
                               dtype=object)
    cols["politics"] = _likert(rng.standard_normal(n) * 1.2, 1, 7)

    schema = survey_schema()
    ids = tuple(f"R{i:04d}" for i in range(1, n + 1))
    return SurveyDataset(schema, ids, {q.id: cols[q.id] for q in schema})


def binary_dataset(X: np.ndarray, questions: Sequence[str], id_prefix: str = "R") -> SurveyDataset:
    """Dataset holding only binary typology questions."""
    X = np.asarray(X, bool)
    schema = tuple(QuestionDef(q, "binary", "typology") for q in questions)
    ids = tuple(f"{id_prefix}{i:04d}" for i in range(1, len(X) + 1))
    return SurveyDataset(schema, ids, {q: X[:, j].copy() for j, q in enumerate(questions)})


def survey_config(dataset_path: str = "survey.csv", seed: int = 0) -> dict:
    """Configuration reproducing the published pipeline on the synthetic survey."""
    scales = []
    for name, items, _, factors, _ in SURVEY_SCALES:
        scales.append({
            "name": name,
            "items": [i for i, _ in items],
            "n_factors": len(factors),
            "factors": [{"name": f, "marker": FACTOR_MARKERS[f]} for f in factors],
        })
    return {
        "dataset": {
            "path": dataset_path,
            "delimiter": ",",
            "id_column": "respondent_id",
            "questions": [q.to_dict() for q in survey_schema()],
        },
        "degenerate_threshold": 0.02,
        "patterns": {"pool_size": 15, "threshold": 0.79, "denominator": "top_n_pool"},
        "trees": {
            "min_leaf_grow": 40,
            "min_leaf_filter": 51,
            "max_leaf_filter": None,
            "exclude_questions": ["FBmorethan1"],
            "max_candidates": 1000000,
        },
        "loading_threshold": 0.3,
        "scales": scales,
        "fixed_scales": [{
            "name": "Big5",
            "min": 1,
            "max": 7,
            "key": [{"item": i, "dimension": d, "reverse": r} for i, d, r in TIPI_KEY],
        }],
        "direct_items": [{"id": "fbi_friends", "name": "FBI-Friend"}, {"id": "fbi_time", "name": "FBI-Time"}],
        "demographics": [
            {"id": "age", "name": "Age", "encoding": "numeric"},
            {"id": "gender", "name": "Gender", "encoding": "categorical", "reference": "female"},
            {"id": "income", "name": "Income", "encoding": "numeric"},
            {"id": "marital", "name": "Marital", "encoding": "categorical", "reference": "married"},
            {"id": "politics", "name": "Politics", "encoding": "numeric"},
        ],
        "rule_typologies": [{
            "name": "baumer",
            "rules": [
                {"label": "B2", "when": {"deactivated": "Y"}},
                {"label": "B3", "when": {"takenBreak": "Y"}},
                {"label": "B1"},
            ],
        }],
        "models": [
            {"name": "curve", "typology": "pattern", "stepwise": True},
            {"name": "tree", "typology": "tree", "stepwise": True},
            {"name": "baumer", "typology": "baumer", "stepwise": True},
        ],
        "comparisons": [{"a": "curve", "b": "tree"}, {"a": "tree", "b": "baumer"}],
        "seed": seed,
        "threads": 1,
    }
