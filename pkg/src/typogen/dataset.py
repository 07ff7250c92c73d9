"""Survey data: question schema, loading, validation and question-level statistics."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, ParseError

logger = logging.getLogger(__name__)

KINDS = ("binary", "likert", "numeric", "categorical")
ROLES = ("typology", "scale-item", "demographic")

YES_TOKENS = {"y", "yes", "1"}
NO_TOKENS = {"n", "no", "0"}

DEFAULT_ID_COLUMN = "respondent_id"
DEFAULT_DEGENERATE_THRESHOLD = 0.02


@dataclass(frozen=True)
class QuestionDef:
    id: str
    kind: str
    role: str = "typology"
    text: str = ""
    min: int | None = None
    max: int | None = None
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"question {self.id!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise ConfigError(f"question {self.id!r}: unknown role {self.role!r}")
        if self.kind == "likert":
            if self.min is None or self.max is None:
                raise ConfigError(f"likert question {self.id!r} needs min and max")
            if not self.min < self.max:
                raise ConfigError(f"likert question {self.id!r}: min must be < max")

    @classmethod
    def from_dict(cls, d: Mapping) -> "QuestionDef":
        d = dict(d)
        kind = str(d.get("kind", "binary"))
        # allow the compact form "likert(1..7)"
        if kind.startswith("likert(") and kind.endswith(")"):
            lo, hi = kind[len("likert("):-1].split("..")
            d.setdefault("min", int(lo))
            d.setdefault("max", int(hi))
            kind = "likert"
        levels = d.get("levels")
        try:
            return cls(
                id=str(d["id"]),
                kind=kind,
                role=str(d.get("role", "typology")),
                text=str(d.get("text", "")),
                min=None if d.get("min") is None else int(d["min"]),
                max=None if d.get("max") is None else int(d["max"]),
                levels=None if levels is None else tuple(str(x) for x in levels),
            )
        except KeyError as exc:
            raise ConfigError(f"question definition missing field {exc}") from exc

    def to_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind, "role": self.role}
        if self.text:
            d["text"] = self.text
        if self.min is not None:
            d["min"] = self.min
            d["max"] = self.max
        if self.levels is not None:
            d["levels"] = list(self.levels)
        return d


@dataclass(frozen=True)
class QuestionStats:
    question: str
    yes_count: int
    n: int

    @property
    def yes_share(self) -> float:
        return self.yes_count / self.n

    @property
    def no_share(self) -> float:
        return (self.n - self.yes_count) / self.n

    @property
    def minority_share(self) -> float:
        return min(self.yes_count, self.n - self.yes_count) / self.n

    def exact_shares(self) -> tuple[Fraction, Fraction]:
        return Fraction(self.yes_count, self.n), Fraction(self.n - self.yes_count, self.n)


@dataclass(frozen=True, eq=False)
class SurveyDataset:
    """Immutable respondent-by-question table.

    Columns are numpy arrays: ``bool`` for binary questions, ``int64`` for
    likert items, ``float64`` for numeric and ``object`` (str) for
    categorical questions.
    """

    questions: tuple[QuestionDef, ...]
    respondent_ids: tuple[str, ...]
    columns: Mapping[str, np.ndarray] = field(repr=False)
    id_column: str = DEFAULT_ID_COLUMN

    def __post_init__(self):
        ids = [q.id for q in self.questions]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ConfigError(f"duplicate question ids: {dup}")
        if len(set(self.respondent_ids)) != len(self.respondent_ids):
            seen, dup = set(), None
            for r in self.respondent_ids:
                if r in seen:
                    dup = r
                    break
                seen.add(r)
            raise DataError(f"duplicate respondent id {dup!r}")
        for q in self.questions:
            col = self.columns.get(q.id)
            if col is None:
                raise DataError(f"missing column {q.id!r}")
            if len(col) != len(self.respondent_ids):
                raise DataError(f"column {q.id!r} has {len(col)} values, expected {len(self.respondent_ids)}")
            col.flags.writeable = False

    @property
    def n(self) -> int:
        return len(self.respondent_ids)

    @property
    def question_ids(self) -> tuple[str, ...]:
        return tuple(q.id for q in self.questions)

    def question(self, qid: str) -> QuestionDef:
        for q in self.questions:
            if q.id == qid:
                return q
        raise KeyError(qid)

    def column(self, qid: str) -> np.ndarray:
        return self.columns[qid]

    def typology_questions(self) -> list[str]:
        return [q.id for q in self.questions if q.kind == "binary" and q.role == "typology"]

    def record(self, i: int) -> dict:
        out = {self.id_column: self.respondent_ids[i]}
        for q in self.questions:
            v = self.columns[q.id][i]
            out[q.id] = v.item() if hasattr(v, "item") else v
        return out

    def records(self) -> Iterable[dict]:
        for i in range(self.n):
            yield self.record(i)

    def binary_matrix(self, qids: Sequence[str]) -> np.ndarray:
        for q in qids:
            if self.question(q).kind != "binary":
                raise DataError(f"question {q!r} is not binary")
        return np.column_stack([self.columns[q] for q in qids]).astype(bool) if qids else np.zeros((self.n, 0), bool)

    def frame(self, qids: Sequence[str] | None = None) -> pd.DataFrame:
        qids = list(self.question_ids if qids is None else qids)
        return pd.DataFrame({q: self.columns[q] for q in qids}, index=pd.Index(self.respondent_ids, name=self.id_column))

    def subset(self, mask: np.ndarray) -> "SurveyDataset":
        mask = np.asarray(mask, bool)
        ids = tuple(r for r, keep in zip(self.respondent_ids, mask) if keep)
        cols = {k: np.array(v[mask]) for k, v in self.columns.items()}
        return SurveyDataset(self.questions, ids, cols, self.id_column)


def load_schema(entries: Sequence[Mapping]) -> tuple[QuestionDef, ...]:
    qs = tuple(QuestionDef.from_dict(e) for e in entries)
    ids = [q.id for q in qs]
    if len(set(ids)) != len(ids):
        raise ConfigError("question ids must be unique within a schema")
    return qs


def _parse_cell(token: str, q: QuestionDef, row: int):
    t = token.strip()
    if t == "":
        raise ParseError(f"row {row}, column {q.id!r}: missing answer", row, q.id)
    if q.kind == "binary":
        low = t.lower()
        if low in YES_TOKENS:
            return True
        if low in NO_TOKENS:
            return False
        raise ParseError(f"row {row}, column {q.id!r}: cannot parse {t!r} as Yes/No", row, q.id)
    if q.kind == "likert":
        try:
            v = int(t)
        except ValueError:
            raise ParseError(f"row {row}, column {q.id!r}: cannot parse {t!r} as an integer", row, q.id) from None
        if not q.min <= v <= q.max:
            raise ParseError(f"row {row}, column {q.id!r}: {v} outside {q.min}..{q.max}", row, q.id)
        return v
    if q.kind == "numeric":
        try:
            v = float(t)
        except ValueError:
            raise ParseError(f"row {row}, column {q.id!r}: cannot parse {t!r} as a number", row, q.id) from None
        if not np.isfinite(v):
            raise ParseError(f"row {row}, column {q.id!r}: non-finite value", row, q.id)
        return v
    if q.levels is not None and t not in q.levels:
        raise ParseError(f"row {row}, column {q.id!r}: {t!r} not in levels {list(q.levels)}", row, q.id)
    return t


_DTYPES = {"binary": bool, "likert": np.int64, "numeric": np.float64, "categorical": object}


def parse_dataset(text: str, schema: Sequence[QuestionDef], delimiter: str = ",",
                  id_column: str = DEFAULT_ID_COLUMN) -> SurveyDataset:
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty file: no header row") from None
    if id_column not in header:
        raise DataError(f"missing column {id_column!r}")
    missing = [q.id for q in schema if q.id not in header]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")
    extra = [h for h in header if h != id_column and h not in {q.id for q in schema}]
    if extra:
        logger.warning("ignoring columns not in schema: %s", extra)
    pos = {h: i for i, h in enumerate(header)}

    ids: list[str] = []
    values: dict[str, list] = {q.id: [] for q in schema}
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {row_no}: expected {len(header)} fields, got {len(row)}", row_no)
        rid = row[pos[id_column]].strip()
        if not rid:
            raise ParseError(f"row {row_no}: missing respondent id", row_no, id_column)
        ids.append(rid)
        for q in schema:
            values[q.id].append(_parse_cell(row[pos[q.id]], q, row_no))
    if not ids:
        raise DataError("no respondents")
    cols = {q.id: np.array(values[q.id], dtype=_DTYPES[q.kind]) for q in schema}
    return SurveyDataset(tuple(schema), tuple(ids), cols, id_column)


def load_dataset(path, schema: Sequence[QuestionDef], delimiter: str = ",",
                 id_column: str = DEFAULT_ID_COLUMN) -> SurveyDataset:
    """Read a delimited UTF-8 file whose first row names the question ids."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    return parse_dataset(path.read_text(encoding="utf-8"), schema, delimiter, id_column)


def _format_cell(v, kind: str) -> str:
    if kind == "binary":
        return "Y" if v else "N"
    if kind == "likert":
        return str(int(v))
    if kind == "numeric":
        v = float(v)
        return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    return str(v)


def dumps_dataset(ds: SurveyDataset, delimiter: str = ",") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow([ds.id_column, *ds.question_ids])
    for i, rid in enumerate(ds.respondent_ids):
        w.writerow([rid, *(_format_cell(ds.columns[q.id][i], q.kind) for q in ds.questions)])
    return buf.getvalue()


def write_dataset(ds: SurveyDataset, path, delimiter: str = ",") -> None:
    Path(path).write_text(dumps_dataset(ds, delimiter), encoding="utf-8")


def question_stats(ds: SurveyDataset, q: str) -> QuestionStats:
    if ds.question(q).kind != "binary":
        raise DataError(f"question {q!r} is not binary")
    return QuestionStats(q, int(np.count_nonzero(ds.column(q))), ds.n)


def drop_degenerate_questions(ds: SurveyDataset,
                              min_minority_share: float = DEFAULT_DEGENERATE_THRESHOLD) -> list[str]:
    """Typology questions whose minority answer share reaches the threshold, in schema order."""
    if not 0 <= min_minority_share < 0.5:
        raise ConfigError("min_minority_share must lie in [0, 0.5)")
    keep = []
    for q in ds.typology_questions():
        st = question_stats(ds, q)
        if st.minority_share >= min_minority_share:
            keep.append(q)
        else:
            logger.info("dropping near-constant question %s (minority share %.4f)", q, st.minority_share)
    return keep


def binary_correlation_matrix(ds: SurveyDataset, qs: Sequence[str]) -> pd.DataFrame:
    """Phi coefficients (Pearson correlation of Yes=1/No=0 codes)."""
    X = ds.binary_matrix(qs).astype(np.float64)
    for j, q in enumerate(qs):
        if X[:, j].min() == X[:, j].max():
            raise DataError(f"question {q!r} is constant; correlation undefined")
    Xc = X - X.mean(axis=0)
    sd = np.sqrt((Xc ** 2).sum(axis=0))
    R = (Xc.T @ Xc) / np.outer(sd, sd)
    R = (R + R.T) / 2
    np.fill_diagonal(R, 1.0)
    return pd.DataFrame(R, index=list(qs), columns=list(qs))


def correlation_csv(R: pd.DataFrame) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["question", *R.columns])
    for q, row in R.iterrows():
        w.writerow([q, *(f"{v:.6f}" for v in row.to_numpy())])
    return buf.getvalue()
