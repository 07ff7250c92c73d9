"""Predictors from Likert scales.

Exploratory factor analysis by principal-axis factoring with varimax
rotation, Cronbach's alpha, loading-weighted factor scores and fixed-key
scale scoring, assembled with direct items and demographics into one
predictor table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import optimize

from .dataset import SurveyDataset
from .errors import ConfigError, ConvergenceError, DataError

logger = logging.getLogger(__name__)

DEFAULT_LOADING_THRESHOLD = 0.3
HEYWOOD_CLAMP = 1 - 1e-6


@dataclass(frozen=True)
class FactorModel:
    items: tuple[str, ...]
    loadings: np.ndarray
    communalities: np.ndarray
    iterations: int = 0
    heywood: bool = False
    rotation: str = "none"
    factor_names: tuple[str, ...] = ()
    alphas: tuple[float | None, ...] = ()
    threshold: float = DEFAULT_LOADING_THRESHOLD
    residual_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def n_factors(self) -> int:
        return self.loadings.shape[1]

    @property
    def uniquenesses(self) -> np.ndarray:
        return 1.0 - self.communalities

    @property
    def variance_explained(self) -> np.ndarray:
        return (self.loadings ** 2).sum(axis=0) / len(self.items)

    @property
    def cumulative_variance(self) -> np.ndarray:
        return np.cumsum(self.variance_explained)

    @property
    def names(self) -> tuple[str, ...]:
        return self.factor_names or tuple(f"F{j + 1}" for j in range(self.n_factors))

    def assignment(self) -> dict[str, str | None]:
        """Item -> factor with the largest absolute loading, or None below the threshold."""
        out = {}
        for i, item in enumerate(self.items):
            j = int(np.argmax(np.abs(self.loadings[i])))
            out[item] = self.names[j] if abs(self.loadings[i, j]) >= self.threshold else None
        return out

    def loading_items(self, factor: int, threshold: float | None = None) -> list[int]:
        t = self.threshold if threshold is None else threshold
        return [i for i in range(len(self.items)) if abs(self.loadings[i, factor]) >= t]

    def to_report(self) -> dict:
        masked = np.where(np.abs(self.loadings) >= self.threshold, self.loadings, np.nan)
        return {
            "items": list(self.items),
            "factors": list(self.names),
            "rotation": self.rotation,
            "display_threshold": self.threshold,
            "loadings": _rows(self.items, self.names, self.loadings),
            "loadings_masked": _rows(self.items, self.names, masked),
            "communalities": dict(zip(self.items, map(float, self.communalities))),
            "uniquenesses": dict(zip(self.items, map(float, self.uniquenesses))),
            "variance_explained": dict(zip(self.names, map(float, self.variance_explained))),
            "cumulative_variance": dict(zip(self.names, map(float, self.cumulative_variance))),
            "alphas": dict(zip(self.names, self.alphas)) if self.alphas else {},
            "assignment": self.assignment(),
            "heywood": self.heywood,
            "iterations": self.iterations,
        }


def _rows(items, names, M):
    return {item: {f: (None if np.isnan(v) else float(v)) for f, v in zip(names, row)} for item, row in zip(items, M)}


def _top_eig(M: np.ndarray, k: int):
    vals, vecs = np.linalg.eigh(M)
    order = np.argsort(vals)[::-1][:k]
    return vals[order], vecs[:, order]


def squared_multiple_correlations(R: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(R)
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(R)
    return np.clip(1.0 - 1.0 / np.diag(inv), 0.0, 1.0)


def _paf_step(R: np.ndarray, h2: np.ndarray, k: int):
    reduced = R.copy()
    np.fill_diagonal(reduced, h2)
    vals, vecs = _top_eig(reduced, k)
    L = vecs * np.sqrt(np.clip(vals, 0.0, None))
    new = (L ** 2).sum(axis=1)
    heywood = bool((new > 1).any())
    return L, np.minimum(new, HEYWOOD_CLAMP), heywood


def _offdiag_ss(R: np.ndarray, L: np.ndarray) -> float:
    E = R - L @ L.T
    np.fill_diagonal(E, 0.0)
    return float((E * E).sum())


def efa(corr, n_factors: int, *, items: Sequence[str] | None = None, tol: float = 1e-6,
        max_iter: int = 200, accelerate: bool = True) -> FactorModel:
    """Principal-axis factoring of a correlation matrix (unrotated).

    Communalities start at the squared multiple correlations and are
    re-estimated from the top ``n_factors`` eigenpairs of the reduced
    correlation matrix until the largest change falls below ``tol``.
    Communalities above one (Heywood cases) are clamped and flagged.

    The plain iteration converges linearly and can crawl when a communality
    is weakly determined. With ``accelerate`` every two steps are followed
    by a squared extrapolation (SQUAREM), kept only if it does not worsen the
    off-diagonal least-squares fit, backtracking towards the plain double
    step otherwise. The fixed point and the stopping rule are unchanged.
    """
    if isinstance(corr, pd.DataFrame):
        items = items or tuple(corr.columns)
        corr = corr.to_numpy()
    R = np.asarray(corr, dtype=float)
    p = R.shape[0]
    if R.ndim != 2 or R.shape != (p, p):
        raise DataError("correlation matrix must be square")
    if not np.allclose(R, R.T, atol=1e-10):
        raise DataError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(R), 1.0, atol=1e-10):
        raise DataError("correlation matrix must have a unit diagonal")
    if np.linalg.eigvalsh(R).min() < -1e-8:
        raise DataError("correlation matrix is not positive semidefinite")
    if not 1 <= n_factors < p:
        raise ConfigError(f"n_factors must lie in 1..{p - 1}")
    items = tuple(items) if items is not None else tuple(f"item{i + 1}" for i in range(p))

    h0 = squared_multiple_correlations(R)
    heywood = False
    trace: list[float] = []

    def step(h):
        nonlocal heywood
        L, new, hw = _paf_step(R, h, n_factors)
        heywood |= hw
        return L, new

    def model(L, h, it):
        return FactorModel(items, L, h, it, heywood, residual_trace=tuple(trace))

    L1, h1 = step(h0)
    for it in range(1, max_iter + 1):
        # off-diagonal residual sum of squares: non-increasing while no communality is clamped
        trace.append(_offdiag_ss(R, L1))
        if np.abs(h1 - h0).max() < tol:
            if heywood:
                logger.warning("Heywood case: communality clamped to %.6f", HEYWOOD_CLAMP)
            return model(L1, h1, it)
        L2, h2 = step(h1)
        if not accelerate:
            h0, L1, h1 = h1, L2, h2
            continue
        r = h1 - h0
        v = h2 - 2 * h1 + h0
        nv = np.linalg.norm(v)
        nxt = (h1, L2, h2)
        if nv > 0:
            alpha = min(-np.linalg.norm(r) / nv, -1.0)
            target = _offdiag_ss(R, L2)
            # backtrack towards alpha = -1, which is the plain double step
            while alpha < -1.0:
                hx = np.clip(h0 - 2 * alpha * r + alpha * alpha * v, 0.0, HEYWOOD_CLAMP)
                L3, h3 = step(hx)
                if _offdiag_ss(R, L3) <= target:
                    nxt = (hx, L3, h3)
                    break
                alpha = (alpha - 1.0) / 2.0
        h0, L1, h1 = nxt
    raise ConvergenceError(f"principal-axis factoring did not converge in {max_iter} iterations",
                           best=model(L1, h1, max_iter))


def varimax_criterion(L: np.ndarray) -> float:
    p = L.shape[0]
    L2 = L ** 2
    return float(((L2 ** 2).sum(axis=0) / p - (L2.sum(axis=0) / p) ** 2).sum())


def normalize_columns(L: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry positive; order columns by
    descending sum of squared loadings."""
    L = np.array(L, dtype=float)
    for j in range(L.shape[1]):
        i = int(np.argmax(np.abs(L[:, j])))
        if L[i, j] < 0:
            L[:, j] = -L[:, j]
    ss = (L ** 2).sum(axis=0)
    order = sorted(range(L.shape[1]), key=lambda j: (-ss[j], j))
    return L[:, order]


def varimax(loadings, *, tol: float = 1e-8, max_sweeps: int = 1000) -> np.ndarray:
    """Orthogonal varimax rotation by sweeps of pairwise planar rotations.

    For each column pair the optimal angle has a closed form (Kaiser);
    sweeps repeat until the criterion improves by less than ``tol``.
    """
    L = np.array(loadings, dtype=float)
    p, k = L.shape
    if k < 2:
        return normalize_columns(L)
    crit = varimax_criterion(L)
    for _ in range(max_sweeps):
        for a in range(k - 1):
            for b in range(a + 1, k):
                x, y = L[:, a], L[:, b]
                u = x * x - y * y
                v = 2 * x * y
                A, B = u.sum(), v.sum()
                C = (u * u - v * v).sum()
                D = 2 * (u * v).sum()
                num = D - 2 * A * B / p
                den = C - (A * A - B * B) / p
                phi = np.arctan2(num, den) / 4
                if abs(phi) < 1e-15:
                    continue
                c, s = np.cos(phi), np.sin(phi)
                L[:, a], L[:, b] = c * x + s * y, -s * x + c * y
        new = varimax_criterion(L)
        if new - crit < tol:
            break
        crit = new
    return normalize_columns(L)


def rotate(model: FactorModel) -> FactorModel:
    if model.n_factors < 2:
        L = normalize_columns(model.loadings)
    else:
        L = varimax(model.loadings)
    return FactorModel(model.items, L, model.communalities, model.iterations, model.heywood, "varimax",
                       threshold=model.threshold, residual_trace=model.residual_trace)


def _item_matrix(ds: SurveyDataset, items: Sequence[str]) -> np.ndarray:
    for it in items:
        q = ds.question(it)
        if q.kind not in ("likert", "numeric"):
            raise DataError(f"item {it!r} is not a likert or numeric question")
    return np.column_stack([ds.column(i).astype(float) for i in items])


def item_correlation(ds: SurveyDataset, items: Sequence[str]) -> pd.DataFrame:
    X = _item_matrix(ds, items)
    sd = X.std(axis=0)
    if (sd == 0).any():
        bad = [i for i, s in zip(items, sd) if s == 0]
        raise DataError(f"constant item(s): {bad}")
    R = np.corrcoef(X, rowvar=False)
    R = (R + R.T) / 2
    np.fill_diagonal(R, 1.0)
    return pd.DataFrame(R, index=list(items), columns=list(items))


def cronbach_alpha(ds_or_matrix, items: Sequence[str] | None = None) -> float:
    """k/(k-1) * (1 - sum of item variances / variance of the item sum), ddof=1."""
    if isinstance(ds_or_matrix, SurveyDataset):
        X = _item_matrix(ds_or_matrix, items)
    else:
        X = np.asarray(ds_or_matrix, dtype=float)
    k = X.shape[1]
    if k < 2:
        raise DataError("alpha needs at least two items")
    total_var = X.sum(axis=1).var(ddof=1)
    if total_var == 0:
        raise DataError("zero total variance")
    return k / (k - 1) * (1 - X.var(axis=0, ddof=1).sum() / total_var)


def _reversed(values: np.ndarray, lo, hi) -> np.ndarray:
    return (lo + hi) - values


def _item_range(ds: SurveyDataset, item: str, X: np.ndarray):
    q = ds.question(item)
    if q.min is not None:
        return q.min, q.max
    return float(X.min()), float(X.max())


def score_factor(ds: SurveyDataset, model: FactorModel, factor: int,
                 assignment_threshold: float | None = None) -> np.ndarray:
    """Loading-weighted mean of the items loading on ``factor``.

    Items with a negative loading are reverse-scored and weighted by the
    loading's magnitude.
    """
    idx = model.loading_items(factor, assignment_threshold)
    if not idx:
        raise DataError(f"no item loads on factor {model.names[factor]!r} above the threshold")
    num = np.zeros(ds.n)
    den = 0.0
    for i in idx:
        item = model.items[i]
        x = ds.column(item).astype(float)
        w = model.loadings[i, factor]
        if w < 0:
            x = _reversed(x, *_item_range(ds, item, x))
        num += abs(w) * x
        den += abs(w)
    return num / den


def factor_alpha(ds: SurveyDataset, model: FactorModel, factor: int) -> float | None:
    idx = model.loading_items(factor)
    if len(idx) < 2:
        return None
    cols = []
    for i in idx:
        item = model.items[i]
        x = ds.column(item).astype(float)
        if model.loadings[i, factor] < 0:
            x = _reversed(x, *_item_range(ds, item, x))
        cols.append(x)
    return float(cronbach_alpha(np.column_stack(cols)))


# ---------------------------------------------------------------------------
# scale specifications


@dataclass(frozen=True)
class FactorName:
    name: str
    marker: str | None = None


@dataclass(frozen=True)
class ScaleSpec:
    name: str
    items: tuple[str, ...]
    n_factors: int
    factors: tuple[FactorName, ...] = ()

    def __post_init__(self):
        if not 1 <= self.n_factors < len(self.items):
            raise ConfigError(f"scale {self.name!r}: n_factors must lie in 1..{len(self.items) - 1}")
        if self.factors and len(self.factors) != self.n_factors:
            raise ConfigError(f"scale {self.name!r}: {len(self.factors)} factor names for {self.n_factors} factors")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScaleSpec":
        factors = tuple(FactorName(str(f["name"]), f.get("marker")) if isinstance(f, Mapping)
                        else FactorName(str(f)) for f in d.get("factors", ()))
        return cls(str(d["name"]), tuple(d["items"]), int(d["n_factors"]), factors)


@dataclass(frozen=True)
class FixedKeyItem:
    item: str
    dimension: str
    reverse: bool = False


@dataclass(frozen=True)
class FixedScaleKey:
    name: str
    items: tuple[FixedKeyItem, ...]
    min: int
    max: int

    @property
    def dimensions(self) -> list[str]:
        seen = []
        for k in self.items:
            if k.dimension not in seen:
                seen.append(k.dimension)
        return seen

    @classmethod
    def from_dict(cls, d: Mapping) -> "FixedScaleKey":
        items = tuple(FixedKeyItem(str(k["item"]), str(k["dimension"]), bool(k.get("reverse", False)))
                      for k in d["key"])
        return cls(str(d["name"]), items, int(d["min"]), int(d["max"]))


def _name_factors(model: FactorModel, spec: ScaleSpec) -> tuple[str, ...]:
    """Match named factors to rotated columns.

    Factors with a marker item are matched to columns so that the summed
    absolute marker loadings are maximal; unmarked names fill the remaining
    columns in order.
    """
    if not spec.factors:
        return tuple(f"{spec.name}_F{j + 1}" for j in range(model.n_factors))
    marked = [f for f in spec.factors if f.marker is not None]
    for f in marked:
        if f.marker not in model.items:
            raise ConfigError(f"scale {spec.name!r}: marker {f.marker!r} is not one of its items")
    names: list[str | None] = [None] * model.n_factors
    if marked:
        W = np.abs(np.array([model.loadings[model.items.index(f.marker)] for f in marked]))
        rows, cols = optimize.linear_sum_assignment(W, maximize=True)
        for r, c in zip(rows, cols):
            names[c] = marked[r].name
    free = iter(f.name for f in spec.factors if f.marker is None)
    return tuple(n if n is not None else next(free) for n in names)


def fit_scale(ds: SurveyDataset, spec: ScaleSpec, threshold: float = DEFAULT_LOADING_THRESHOLD) -> FactorModel:
    """Correlation -> principal-axis factoring -> varimax -> names and alphas."""
    R = item_correlation(ds, spec.items)
    m = efa(R, spec.n_factors, items=spec.items)
    m = rotate(m)
    m = FactorModel(m.items, m.loadings, m.communalities, m.iterations, m.heywood, m.rotation,
                    threshold=threshold, residual_trace=m.residual_trace)
    names = _name_factors(m, spec)
    m = FactorModel(m.items, m.loadings, m.communalities, m.iterations, m.heywood, m.rotation, names,
                    threshold=threshold, residual_trace=m.residual_trace)
    alphas = tuple(factor_alpha(ds, m, j) for j in range(m.n_factors))
    return FactorModel(m.items, m.loadings, m.communalities, m.iterations, m.heywood, m.rotation, names,
                       alphas, threshold, m.residual_trace)


def score_fixed_scale(ds: SurveyDataset, key: FixedScaleKey) -> dict[str, np.ndarray]:
    """Mean of each dimension's keyed items after reversing ``reverse`` items."""
    by_dim: dict[str, list[np.ndarray]] = {}
    for k in key.items:
        x = ds.column(k.item).astype(float)
        bad = (x < key.min) | (x > key.max)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"item {k.item!r}: response {x[i]:g} of respondent {ds.respondent_ids[i]} "
                            f"outside {key.min}..{key.max}")
        if k.reverse:
            x = _reversed(x, key.min, key.max)
        by_dim.setdefault(k.dimension, []).append(x)
    return {d: np.mean(np.column_stack(v), axis=1) for d, v in by_dim.items()}


# ---------------------------------------------------------------------------
# predictor table


@dataclass(frozen=True)
class Demographic:
    id: str
    name: str
    encoding: str = "numeric"
    reference: str | None = None

    @classmethod
    def from_dict(cls, d: Mapping) -> "Demographic":
        enc = str(d.get("encoding", "numeric"))
        if enc not in ("numeric", "categorical"):
            raise ConfigError(f"demographic {d.get('id')!r}: unknown encoding {enc!r}")
        return cls(str(d["id"]), str(d.get("name", d["id"])), enc, d.get("reference"))


@dataclass(frozen=True)
class DirectItem:
    id: str
    name: str


@dataclass
class PredictorTable:
    """Predictor columns per respondent; ``terms`` groups dummy columns of one
    categorical variable under a single predictor name."""

    frame: pd.DataFrame
    terms: dict[str, tuple[str, ...]]
    factor_models: dict[str, FactorModel] = field(default_factory=dict)
    outcomes: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def predictors(self) -> list[str]:
        return list(self.terms)

    def with_outcome(self, name: str, labels) -> "PredictorTable":
        labels = np.asarray(labels, dtype=object)
        if len(labels) != len(self.frame):
            raise DataError(f"outcome {name!r} has {len(labels)} labels for {len(self.frame)} respondents")
        return PredictorTable(self.frame, self.terms, self.factor_models, {**self.outcomes, name: labels})

    def to_csv(self) -> str:
        return self.frame.to_csv(float_format="%.10g", lineterminator="\n")


def build_predictor_table(ds: SurveyDataset, scales: Sequence[ScaleSpec] = (),
                          fixed: Sequence[FixedScaleKey] = (), direct: Sequence[DirectItem] = (),
                          demographics: Sequence[Demographic] = (), *,
                          threshold: float = DEFAULT_LOADING_THRESHOLD) -> PredictorTable:
    cols: dict[str, np.ndarray] = {}
    terms: dict[str, tuple[str, ...]] = {}
    models: dict[str, FactorModel] = {}

    def add(name, values):
        if name in cols:
            raise ConfigError(f"duplicate predictor name {name!r}")
        cols[name] = np.asarray(values, dtype=float)
        terms[name] = (name,)

    for spec in scales:
        for it in spec.items:
            if it not in ds.question_ids:
                raise DataError(f"scale {spec.name!r}: missing item {it!r}")
        m = fit_scale(ds, spec, threshold)
        models[spec.name] = m
        for j, name in enumerate(m.names):
            add(name, score_factor(ds, m, j))
    for key in fixed:
        for k in key.items:
            if k.item not in ds.question_ids:
                raise DataError(f"scale {key.name!r}: missing item {k.item!r}")
        for dim, v in score_fixed_scale(ds, key).items():
            add(dim, v)
    for d in direct:
        if d.id not in ds.question_ids:
            raise DataError(f"missing direct item {d.id!r}")
        add(d.name, ds.column(d.id).astype(float))
    for d in demographics:
        if d.id not in ds.question_ids:
            raise DataError(f"missing demographic {d.id!r}")
        col = ds.column(d.id)
        if d.encoding == "numeric":
            add(d.name, col.astype(float))
            continue
        q = ds.question(d.id)
        observed = sorted(set(map(str, col)))
        levels = [lv for lv in (q.levels or observed) if lv in observed]
        ref = d.reference if d.reference is not None else levels[0]
        if ref not in levels:
            raise DataError(f"demographic {d.id!r}: reference level {ref!r} not observed")
        dummies = []
        for lv in levels:
            if lv == ref:
                continue
            name = f"{d.name}[{lv}]"
            if name in cols:
                raise ConfigError(f"duplicate predictor name {name!r}")
            cols[name] = (col.astype(str) == lv).astype(float)
            dummies.append(name)
        if dummies:
            terms[d.name] = tuple(dummies)
    frame = pd.DataFrame(cols, index=pd.Index(ds.respondent_ids, name=ds.id_column))
    return PredictorTable(frame, terms, models)
