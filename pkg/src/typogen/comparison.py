"""Comparing typologies and the models fitted on them.

Pattern classes are routed through a taxonomic tree to map one typology
onto the other; rule typologies assign externally defined types from
answer conjunctions; reduced models are compared predictor by predictor on
which predictors survive and on which side of one their odds ratios fall.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .dataset import SurveyDataset
from .errors import ConfigError
from .modeling import MlogitFit, natural_key, odds_ratios
from .patterns import PatternTypology
from .trees import TaxonomicTree

NEUTRAL_TOL = 1e-9
STATUSES = ("both_retained", "A_only", "B_only")


# ---------------------------------------------------------------------------
# pattern classes -> tree leaves


@dataclass(frozen=True)
class TypologyMapping:
    pairs: tuple[tuple[str, str], ...]  # (pattern class, leaf)
    leaves: tuple[str, ...]

    def __getitem__(self, label: str) -> str:
        return dict(self.pairs)[label]

    @property
    def unmapped(self) -> tuple[str, ...]:
        """Leaves that no pattern class routes to."""
        hit = {leaf for _, leaf in self.pairs}
        return tuple(leaf for leaf in self.leaves if leaf not in hit)

    def inverse(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {leaf: [] for leaf in self.leaves}
        for c, leaf in self.pairs:
            out[leaf].append(c)
        return out

    def to_dict(self) -> dict:
        return {"pairs": dict(self.pairs), "by_leaf": self.inverse(), "unmapped": list(self.unmapped)}


def map_typologies(pt: PatternTypology, tree: TaxonomicTree) -> TypologyMapping:
    """Route each class's answer vector through ``tree``."""
    missing = tree.split_questions - set(pt.questions)
    if missing:
        raise ConfigError(f"tree splits on questions outside the pattern set: {sorted(missing)}")
    pairs = tuple((label, tree.route(p.as_record())) for label, p in pt.classes)
    return TypologyMapping(pairs, tuple(tree.labels))


# ---------------------------------------------------------------------------
# rule typologies


@dataclass(frozen=True)
class Rule:
    label: str
    literals: tuple[tuple[str, bool], ...] = ()

    @property
    def catch_all(self) -> bool:
        return not self.literals

    def matches(self, record: Mapping) -> bool:
        return all(bool(record[q]) == v for q, v in self.literals)

    def describe(self) -> str:
        if self.catch_all:
            return "otherwise"
        return " and ".join(f"{q}={'Y' if v else 'N'}" for q, v in self.literals)


def _truth(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("y", "yes", "true", "1"):
        return True
    if s in ("n", "no", "false", "0"):
        return False
    raise ConfigError(f"cannot read {v!r} as Y/N")


@dataclass(frozen=True)
class RuleTypology:
    name: str
    rules: tuple[Rule, ...]

    def __post_init__(self):
        if not self.rules or not self.rules[-1].catch_all:
            raise ConfigError(f"rule typology {self.name!r} must end with a catch-all rule")
        if any(r.catch_all for r in self.rules[:-1]):
            raise ConfigError(f"rule typology {self.name!r}: only the last rule may be a catch-all")
        labels = [r.label for r in self.rules]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"rule typology {self.name!r}: duplicate labels")

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.rules]

    @property
    def questions(self) -> set[str]:
        return {q for r in self.rules for q, _ in r.literals}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RuleTypology":
        rules = tuple(Rule(str(r["label"]), tuple((q, _truth(v)) for q, v in (r.get("when") or {}).items()))
                      for r in d["rules"])
        return cls(str(d["name"]), rules)


def assign_rule_class(record: Mapping, rt: RuleTypology) -> str:
    for r in rt.rules:
        if r.matches(record):
            return r.label
    raise AssertionError("unreachable: catch-all rule")


def assign_rule_classes(ds: SurveyDataset, rt: RuleTypology) -> list[str]:
    missing = rt.questions - set(ds.question_ids)
    if missing:
        raise ConfigError(f"rule typology {rt.name!r} references unknown questions {sorted(missing)}")
    return [assign_rule_class(rec, rt) for rec in ds.records()]


# ---------------------------------------------------------------------------
# alignment of reduced models


@dataclass(frozen=True)
class OddsRatioTable:
    """Odds ratios per predictor across non-reference classes."""

    classes: tuple[str, ...]
    rows: dict[str, tuple[float, ...]]
    stars: dict[str, str] | None = None

    @property
    def predictors(self) -> list[str]:
        return list(self.rows)

    @classmethod
    def from_fit(cls, fit: MlogitFit, stars: Mapping[str, str] | None = None) -> "OddsRatioTable":
        OR = odds_ratios(fit) if fit.columns else None
        rows = {}
        for term, cols in fit.terms.items():
            # a categorical predictor contributes every dummy's odds ratios
            rows[term] = tuple(float(v) for c in cols for v in OR.loc[c])
        return cls(tuple(fit.classes[1:]), rows, dict(stars) if stars else None)

    @classmethod
    def from_csv(cls, text: str) -> "OddsRatioTable":
        reader = csv.DictReader(io.StringIO(text))
        meta = {"scale", "predictor", "stars"}
        classes = tuple(c for c in reader.fieldnames if c not in meta)
        rows, st = {}, {}
        for r in reader:
            rows[r["predictor"]] = tuple(float(r[c]) for c in classes)
            st[r["predictor"]] = r.get("stars") or ""
        return cls(classes, rows, st)


def load_table(name: str) -> OddsRatioTable:
    """Bundled odds-ratio fixture: ``or_curve``, ``or_tree`` or ``or_rules``."""
    text = resources.files("typogen").joinpath("data").joinpath(f"{name}.csv").read_text()
    return OddsRatioTable.from_csv(text)


def direction(ors: Sequence[float], tol: float = NEUTRAL_TOL) -> tuple[str, int]:
    """Side of one shared by all non-neutral odds ratios, and the neutral count.

    Returns ``"above"``, ``"below"``, ``"mixed"`` or ``"neutral"`` (every
    ratio within ``tol`` of one).
    """
    a = np.asarray(ors, float)
    up = a > 1 + tol
    down = a < 1 - tol
    neutral = int((~up & ~down).sum())
    if up.any() and down.any():
        return "mixed", neutral
    if up.any():
        return "above", neutral
    if down.any():
        return "below", neutral
    return "neutral", neutral


@dataclass(frozen=True)
class PredictorAlignment:
    predictor: str
    status: str
    direction_a: str | None = None
    direction_b: str | None = None
    neutral_a: int = 0
    neutral_b: int = 0
    range_a: tuple[float, float] | None = None
    range_b: tuple[float, float] | None = None

    @property
    def agree(self) -> bool | None:
        if self.status != "both_retained":
            return None
        return self.direction_a == self.direction_b and self.direction_a in ("above", "below")

    @property
    def opposite(self) -> bool:
        return {self.direction_a, self.direction_b} == {"above", "below"}

    def to_dict(self) -> dict:
        d = {"predictor": self.predictor, "status": self.status}
        if self.direction_a is not None:
            d.update(direction_a=self.direction_a, neutral_a=self.neutral_a,
                     min_or_a=self.range_a[0], max_or_a=self.range_a[1])
        if self.direction_b is not None:
            d.update(direction_b=self.direction_b, neutral_b=self.neutral_b,
                     min_or_b=self.range_b[0], max_or_b=self.range_b[1])
        if self.status == "both_retained":
            d["direction_agreement"] = self.agree
        return d


@dataclass(frozen=True)
class AlignmentReport:
    entries: tuple[PredictorAlignment, ...]
    names: tuple[str, str] = ("A", "B")
    mapping: TypologyMapping | None = None
    classes_a: tuple[str, ...] = ()
    classes_b: tuple[str, ...] = ()

    def __getitem__(self, predictor: str) -> PredictorAlignment:
        for e in self.entries:
            if e.predictor == predictor:
                return e
        raise KeyError(predictor)

    def with_status(self, status: str) -> list[str]:
        return [e.predictor for e in self.entries if e.status == status]

    @property
    def aligned(self) -> list[str]:
        return [e.predictor for e in self.entries if e.agree]

    @property
    def divergent(self) -> list[str]:
        return [e.predictor for e in self.entries if e.status == "both_retained" and not e.agree]

    def to_dict(self) -> dict:
        return {
            "models": {"A": self.names[0], "B": self.names[1]},
            "classes": {"A": list(self.classes_a), "B": list(self.classes_b)},
            "mapping": self.mapping.to_dict() if self.mapping else None,
            "predictors": [e.to_dict() for e in self.entries],
            "summary": {s: self.with_status(s) for s in STATUSES}
                       | {"aligned": self.aligned, "divergent": self.divergent},
        }

    def to_markdown(self) -> str:
        a, b = self.names
        out = [f"# {a} vs {b}", ""]
        if self.mapping is not None:
            out += ["## Class mapping", "", "| class | leaf |", "|---|---|"]
            out += [f"| {c} | {leaf} |" for c, leaf in self.mapping.pairs]
            if self.mapping.unmapped:
                out += ["", f"Leaves without a class: {', '.join(self.mapping.unmapped)}"]
            out.append("")
        out += ["## Alignment", ""]
        if self.aligned:
            for p in self.aligned:
                e = self[p]
                side = "greater than" if e.direction_a == "above" else "less than"
                out.append(f"- {p}: retained in both models with every odds ratio {side} one "
                           f"({a}: {_fmt_range(e.range_a)}; {b}: {_fmt_range(e.range_b)}).")
        else:
            out.append("- No predictor is retained in both models with the same direction.")
        out += ["", "## Divergence", ""]
        opp = [p for p in self.divergent if self[p].opposite]
        other = [p for p in self.divergent if not self[p].opposite]
        for p in opp:
            e = self[p]
            out.append(f"- {p}: retained in both models but in opposite directions "
                       f"({a} {_side(e.direction_a)}, {b} {_side(e.direction_b)}).")
        for p in other:
            e = self[p]
            out.append(f"- {p}: retained in both models without a consistent direction "
                       f"({a} {e.direction_a}, {b} {e.direction_b}).")
        only_a, only_b = self.with_status("A_only"), self.with_status("B_only")
        out.append(f"- Retained only in {a}: {', '.join(only_a) if only_a else 'none'}.")
        out.append(f"- Retained only in {b}: {', '.join(only_b) if only_b else 'none'}.")
        return "\n".join(out) + "\n"


def _fmt_range(r):
    return f"{r[0]:.2f}" if r[0] == r[1] else f"{r[0]:.2f} to {r[1]:.2f}"


def _side(d):
    return {"above": "increases the odds", "below": "decreases the odds"}.get(d, d)


def _as_table(x) -> OddsRatioTable:
    if isinstance(x, OddsRatioTable):
        return x
    if isinstance(x, MlogitFit):
        if not x.converged:
            raise ConfigError("alignment needs converged fits")
        return OddsRatioTable.from_fit(x)
    raise TypeError(f"cannot compare {type(x).__name__}")


def alignment_report(fit_a, fit_b, mapping: TypologyMapping | None = None,
                     names: tuple[str, str] = ("A", "B")) -> AlignmentReport:
    """Classify every predictor of two reduced models.

    ``fit_a`` and ``fit_b`` are fits or odds-ratio tables. Predictors appear
    in A's order followed by B-only predictors in B's order.
    """
    A, B = _as_table(fit_a), _as_table(fit_b)
    order = A.predictors + [p for p in B.predictors if p not in A.rows]
    entries = []
    for p in order:
        in_a, in_b = p in A.rows, p in B.rows
        status = "both_retained" if in_a and in_b else ("A_only" if in_a else "B_only")
        kw = {}
        if in_a:
            d, n = direction(A.rows[p])
            kw.update(direction_a=d, neutral_a=n, range_a=(min(A.rows[p]), max(A.rows[p])))
        if in_b:
            d, n = direction(B.rows[p])
            kw.update(direction_b=d, neutral_b=n, range_b=(min(B.rows[p]), max(B.rows[p])))
        entries.append(PredictorAlignment(p, status, **kw))
    return AlignmentReport(tuple(entries), names, mapping, A.classes, B.classes)


def swap(report: AlignmentReport) -> AlignmentReport:
    """The same report with the roles of A and B exchanged."""
    flip = {"A_only": "B_only", "B_only": "A_only", "both_retained": "both_retained"}
    entries = tuple(PredictorAlignment(e.predictor, flip[e.status], e.direction_b, e.direction_a,
                                       e.neutral_b, e.neutral_a, e.range_b, e.range_a)
                    for e in report.entries)
    return AlignmentReport(entries, report.names[::-1], None, report.classes_b, report.classes_a)


def sorted_labels(labels) -> list[str]:
    return sorted(set(labels), key=natural_key)
