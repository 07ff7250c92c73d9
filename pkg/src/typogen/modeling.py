"""Multinomial logistic regression on typology assignments.

Maximum likelihood with reference-class coding, AIC, predictor-level
likelihood-ratio tests, odds ratios and backward stepwise elimination by
AIC.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import optimize, special, stats

from .errors import ConfigError, ConvergenceError, DataError, RankDeficientError, SeparationError, TypologyError
from .patterns import EXCLUDED
from .psychometrics import PredictorTable

logger = logging.getLogger(__name__)

INTERCEPT = "(Intercept)"
SEPARATION_BOUND = 30.0
GTOL = 1e-6


def natural_key(label: str):
    """Sort key putting C2 before C10."""
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", str(label))]


@dataclass(frozen=True)
class ModelSpec:
    outcome: str
    predictors: tuple[str, ...] = ()
    reference_class: str | None = None
    name: str = ""

    def __post_init__(self):
        if len(set(self.predictors)) != len(self.predictors):
            raise ConfigError(f"model {self.name or self.outcome!r}: duplicate predictors")

    def without(self, predictor: str) -> "ModelSpec":
        return ModelSpec(self.outcome, tuple(p for p in self.predictors if p != predictor),
                         self.reference_class, self.name)

    def to_dict(self) -> dict:
        return {"name": self.name, "outcome": self.outcome, "reference_class": self.reference_class,
                "predictors": list(self.predictors)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        return cls(str(d["outcome"]), tuple(d.get("predictors", ())), d.get("reference_class"),
                   str(d.get("name", "")))


@dataclass(frozen=True)
class Design:
    """Outcome codes and the predictor matrix for one model, Excluded rows dropped."""

    X: np.ndarray  # n x p, no intercept column
    y: np.ndarray  # class index per row, 0 = reference
    classes: tuple[str, ...]  # reference first
    columns: tuple[str, ...]
    terms: dict[str, tuple[str, ...]]
    row_ids: tuple = ()

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def n_params(self) -> int:
        return (len(self.classes) - 1) * (len(self.columns) + 1)


def build_design(table: PredictorTable, spec: ModelSpec, outcome=None) -> Design:
    """Assemble the design for ``spec``.

    The outcome labels come from ``outcome`` when given, else from
    ``table.outcomes[spec.outcome]``. Rows labelled Excluded are dropped.
    """
    if outcome is None:
        if spec.outcome not in table.outcomes:
            raise ConfigError(f"unknown outcome {spec.outcome!r}")
        outcome = table.outcomes[spec.outcome]
    labels = np.asarray(outcome, dtype=object)
    if len(labels) != len(table.frame):
        raise DataError("outcome length does not match the predictor table")
    columns = []
    for p in spec.predictors:
        if p not in table.terms:
            raise ConfigError(f"model {spec.name or spec.outcome!r}: unknown predictor {p!r}")
        columns.extend(table.terms[p])
    keep = labels != EXCLUDED
    y_lab = labels[keep]
    present = sorted(set(y_lab), key=natural_key)
    if len(present) < 2:
        raise DataError(f"outcome {spec.outcome!r} has fewer than two classes after dropping {EXCLUDED}")
    if spec.reference_class is None:
        counts = {c: int((y_lab == c).sum()) for c in present}
        ref = max(present, key=lambda c: (counts[c], -present.index(c)))
    else:
        ref = spec.reference_class
        if ref not in present:
            raise ConfigError(f"reference class {ref!r} does not occur in outcome {spec.outcome!r}")
    classes = (ref,) + tuple(c for c in present if c != ref)
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[c] for c in y_lab], dtype=np.int64)
    X = table.frame.loc[keep, columns].to_numpy(dtype=float) if columns else np.zeros((len(y), 0))
    if not np.isfinite(X).all():
        raise DataError("predictor table has missing or infinite cells")
    terms = {p: table.terms[p] for p in spec.predictors}
    ids = tuple(table.frame.index[keep])
    return Design(X, y, classes, tuple(columns), terms, ids)


# ---------------------------------------------------------------------------
# likelihood


def _with_intercept(X):
    return np.column_stack([np.ones(len(X)), X])


def log_likelihood(beta: np.ndarray, Xi: np.ndarray, y: np.ndarray) -> float:
    """Multinomial log-likelihood; ``beta`` is (K-1) x p, ``Xi`` includes the intercept column."""
    eta = np.column_stack([np.zeros(len(Xi)), Xi @ beta.T])
    return float(eta[np.arange(len(y)), y].sum() - special.logsumexp(eta, axis=1).sum())


def probabilities(beta: np.ndarray, Xi: np.ndarray) -> np.ndarray:
    eta = np.column_stack([np.zeros(len(Xi)), Xi @ beta.T])
    return special.softmax(eta, axis=1)


def gradient(beta: np.ndarray, Xi: np.ndarray, y: np.ndarray) -> np.ndarray:
    P = probabilities(beta, Xi)
    Y = np.zeros_like(P)
    Y[np.arange(len(y)), y] = 1.0
    return (Y - P)[:, 1:].T @ Xi


def hessian(beta: np.ndarray, Xi: np.ndarray) -> np.ndarray:
    """Hessian of the negative log-likelihood over the flattened (K-1) x p parameters."""
    P = probabilities(beta, Xi)[:, 1:]
    k1, p = beta.shape
    H = np.empty((k1 * p, k1 * p))
    for a in range(k1):
        for b in range(k1):
            w = P[:, a] * ((a == b) - P[:, b])
            H[a * p:(a + 1) * p, b * p:(b + 1) * p] = (Xi * w[:, None]).T @ Xi
    return H


def _check_rank(Z: np.ndarray, columns: Sequence[str]):
    Zi = _with_intercept(Z)
    _, s, vt = np.linalg.svd(Zi, full_matrices=False)
    if s[-1] <= 1e-10 * s[0] * max(Zi.shape):
        v = vt[-1]
        names = [c for c, w in zip((INTERCEPT,) + tuple(columns), v) if abs(w) > 1e-6]
        raise RankDeficientError(f"design is rank deficient; collinear columns: {names}", columns=names)


def _separating_direction(Zi: np.ndarray, y: np.ndarray, K: int) -> np.ndarray | None:
    """A direction along which the likelihood never decreases, if one exists.

    Solves the linear programme max sum of margins subject to every margin
    x_i . (D_{y_i} - D_k) >= 0 and a unit box on D (D_0 = 0 for the
    reference class). A positive optimum means complete or quasi-complete
    separation: the maximum-likelihood estimate does not exist.
    """
    n, p = Zi.shape
    nv = (K - 1) * p
    rows, obj = [], np.zeros(nv)
    for k in range(K):
        # margin of the observed class over class k, for rows whose class is not k
        for c in range(K):
            if c == k:
                continue
            sel = Zi[y == c]
            if not len(sel):
                continue
            A = np.zeros((len(sel), nv))
            if c > 0:
                A[:, (c - 1) * p:c * p] += sel
            if k > 0:
                A[:, (k - 1) * p:k * p] -= sel
            rows.append(A)
            obj += A.sum(axis=0)
    A = np.vstack(rows)
    res = optimize.linprog(-obj, A_ub=-A, b_ub=np.zeros(len(A)), bounds=[(-1, 1)] * nv, method="highs")
    if res.status != 0 or -res.fun <= 1e-7 * len(A):
        return None
    return res.x.reshape(K - 1, p)


def _bfgs(theta, f_grad, H0inv, *, gtol, max_iter, bound, shape, columns, classes):
    f, g = f_grad(theta)
    Hinv = H0inv
    history = [-f]
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < gtol:
            return theta, -f, it - 1, True, history
        d = -Hinv @ g
        slope = g @ d
        if slope >= 0:
            # not a descent direction: restart from steepest descent
            Hinv = np.eye(len(theta))
            d = -g
            slope = g @ d
        step = 1.0
        while True:
            trial = theta + step * d
            ft, gt = f_grad(trial)
            if np.isfinite(ft) and ft <= f + 1e-4 * step * slope:
                break
            # near the optimum the decrease drops below the resolution of f;
            # accept a step that stays level and shrinks the gradient
            if np.isfinite(ft) and ft - f <= 1e-13 * abs(f) and np.max(np.abs(gt)) < np.max(np.abs(g)):
                break
            step *= 0.5
            if step < 1e-16:
                return theta, -f, it, bool(np.max(np.abs(g)) < gtol), history
        s = trial - theta
        yv = gt - g
        theta, f, g = trial, ft, gt
        history.append(-f)
        B = theta.reshape(shape)[:, 1:]
        if B.size and np.max(np.abs(B)) > bound:
            k, j = np.unravel_index(int(np.argmax(np.abs(B))), B.shape)
            raise SeparationError(
                f"separation: coefficient of {columns[j]!r} for class {classes[k + 1]!r} diverges",
                predictor=columns[j], klass=classes[k + 1])
        sy = s @ yv
        if sy > 1e-12:
            rho = 1.0 / sy
            Hy = Hinv @ yv
            Hinv = Hinv + ((sy + yv @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
    return theta, -f, max_iter, bool(np.max(np.abs(g)) < gtol), history


@dataclass(frozen=True)
class MlogitFit:
    spec: ModelSpec
    classes: tuple[str, ...]
    columns: tuple[str, ...]  # without the intercept
    coefficients: np.ndarray  # (K-1) x (1 + p), original scale
    log_likelihood: float
    n_used: int
    converged: bool
    iterations: int
    terms: dict[str, tuple[str, ...]] = field(default_factory=dict)
    ll_history: tuple[float, ...] = field(default=(), repr=False)
    design: Design | None = field(default=None, repr=False, compare=False)
    std_coefficients: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def reference_class(self) -> str:
        return self.classes[0]

    @property
    def n_params(self) -> int:
        return self.coefficients.size

    @property
    def aic(self) -> float:
        return 2 * self.n_params - 2 * self.log_likelihood

    def fitted_probabilities(self) -> np.ndarray:
        return probabilities(self.coefficients, _with_intercept(self.design.X))

    def predict_proba(self, X) -> np.ndarray:
        return probabilities(self.coefficients, _with_intercept(np.asarray(X, float)))

    def coefficient_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.coefficients.T, index=(INTERCEPT,) + self.columns, columns=self.classes[1:])

    def to_dict(self) -> dict:
        cf = self.coefficient_frame()
        return {
            "spec": self.spec.to_dict(),
            "classes": list(self.classes),
            "reference_class": self.reference_class,
            "coefficients": {c: {r: float(cf.loc[r, c]) for r in cf.index} for c in cf.columns},
            "log_likelihood": self.log_likelihood,
            "aic": self.aic,
            "n_params": self.n_params,
            "n_used": self.n_used,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def fit_design(design: Design, spec: ModelSpec, *, gtol: float = GTOL, max_iter: int = 1000) -> MlogitFit:
    K = len(design.classes)
    n, p = design.X.shape
    if n <= design.n_params:
        raise DataError(f"{n} respondents for {design.n_params} free parameters")
    mean = design.X.mean(axis=0) if p else np.zeros(0)
    sd = design.X.std(axis=0) if p else np.zeros(0)
    if (sd == 0).any():
        bad = [c for c, s in zip(design.columns, sd) if s == 0]
        raise DataError(f"constant predictor column(s): {bad}")
    Z = (design.X - mean) / sd if p else design.X
    _check_rank(Z, design.columns)
    Zi = _with_intercept(Z)
    shape = (K - 1, p + 1)

    # start at the intercept-only optimum
    share = np.bincount(design.y, minlength=K) / n
    theta0 = np.zeros(shape)
    theta0[:, 0] = np.log(share[1:] / share[0])
    theta0 = theta0.ravel()

    def f_grad(t):
        b = t.reshape(shape)
        return -log_likelihood(b, Zi, design.y), -gradient(b, Zi, design.y).ravel()

    try:
        H0inv = np.linalg.inv(hessian(theta0.reshape(shape), Zi))
    except np.linalg.LinAlgError:
        H0inv = np.eye(theta0.size)
    theta, ll, iters, ok, hist = _bfgs(theta0, f_grad, H0inv, gtol=gtol, max_iter=max_iter,
                                       bound=SEPARATION_BOUND, shape=shape, columns=design.columns,
                                       classes=design.classes)
    Bs = theta.reshape(shape)
    if p and probabilities(Bs, Zi)[np.arange(n), design.y].max() > 1 - 1e-5:
        # near-certain fits are where an optimum can be reported at a finite
        # point although the likelihood keeps rising towards infinity
        D = _separating_direction(Zi, design.y, K)
        if D is not None:
            k, j = np.unravel_index(int(np.argmax(np.abs(D[:, 1:]))), D[:, 1:].shape)
            raise SeparationError(
                f"separation: coefficient of {design.columns[j]!r} for class {design.classes[k + 1]!r} diverges",
                predictor=design.columns[j], klass=design.classes[k + 1])
    B = np.empty_like(Bs)
    B[:, 1:] = Bs[:, 1:] / sd if p else Bs[:, 1:]
    B[:, 0] = Bs[:, 0] - (Bs[:, 1:] * (mean / sd)).sum(axis=1) if p else Bs[:, 0]
    fit = MlogitFit(spec, design.classes, design.columns, B, ll, n, ok, iters, dict(design.terms),
                    tuple(hist), design, Bs)
    if not ok:
        raise ConvergenceError(f"multinomial fit did not converge in {max_iter} iterations", best=fit)
    return fit


def fit_mlogit(table: PredictorTable, spec: ModelSpec, outcome=None, **kw) -> MlogitFit:
    """Maximum-likelihood multinomial logit of ``spec.outcome`` on ``spec.predictors``.

    Predictors are standardised for the optimisation and coefficients are
    reported on the original scale.

    Raises
    ------
    SeparationError
        A standardised coefficient exceeds 30 in magnitude.
    RankDeficientError
        The design columns are collinear.
    """
    return fit_design(build_design(table, spec, outcome), spec, **kw)


def odds_ratios(fit: MlogitFit) -> pd.DataFrame:
    """Rows are predictor columns, columns the non-reference classes."""
    if not fit.converged:
        raise ConvergenceError("odds ratios need a converged fit")
    return pd.DataFrame(np.exp(fit.coefficients[:, 1:].T), index=list(fit.columns), columns=list(fit.classes[1:]))


def odds_ratio_csv(fit: MlogitFit, lrts: Mapping[str, "LrtResult"] | None = None) -> str:
    OR = odds_ratios(fit)
    OR.index.name = "predictor"
    if lrts:
        OR["stars"] = [_column_stars(c, fit, lrts) for c in OR.index]
    return OR.to_csv(float_format="%.6g", lineterminator="\n")


def _column_stars(column, fit, lrts):
    for term, cols in fit.terms.items():
        if column in cols and term in lrts:
            return lrts[term].stars
    return ""


# ---------------------------------------------------------------------------
# likelihood-ratio tests


def stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class LrtResult:
    predictor: str
    deviance: float
    df: int
    p_value: float
    stars: str

    def to_dict(self) -> dict:
        return {"predictor": self.predictor, "deviance": self.deviance, "df": self.df,
                "p_value": self.p_value, "stars": self.stars}


def lrt_from_fits(full: MlogitFit, reduced: MlogitFit, predictor: str) -> LrtResult:
    dev = 2.0 * (full.log_likelihood - reduced.log_likelihood)
    df = full.n_params - reduced.n_params
    pv = float(stats.chi2.sf(max(dev, 0.0), df))
    return LrtResult(predictor, dev, df, pv, stars(pv))


def lrt(table: PredictorTable, spec: ModelSpec, predictor: str, full: MlogitFit | None = None,
        outcome=None) -> LrtResult:
    """Drop every column of ``predictor`` jointly and compare deviance to chi-square."""
    if predictor not in spec.predictors:
        raise ConfigError(f"{predictor!r} is not in the model")
    full = full or fit_mlogit(table, spec, outcome)
    reduced = fit_mlogit(table, spec.without(predictor), outcome)
    return lrt_from_fits(full, reduced, predictor)


def all_lrts(table: PredictorTable, fit: MlogitFit, outcome=None, threads: int = 1) -> dict[str, LrtResult]:
    preds = list(fit.spec.predictors)

    def one(p):
        return lrt(table, fit.spec, p, fit, outcome)

    if threads > 1 and len(preds) > 1:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(one, preds))
    else:
        res = [one(p) for p in preds]
    return dict(zip(preds, res))


# ---------------------------------------------------------------------------
# backward stepwise


@dataclass(frozen=True)
class Candidate:
    predictor: str
    aic: float | None
    error: str | None = None


@dataclass(frozen=True)
class StepRecord:
    step: int
    current_aic: float
    candidates: tuple[Candidate, ...]
    removed: str | None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "current_aic": self.current_aic,
            "candidates": [{"predictor": c.predictor, "aic": c.aic, "error": c.error} for c in self.candidates],
            "removed": self.removed,
        }


@dataclass(frozen=True)
class StepwiseResult:
    spec: ModelSpec
    fit: MlogitFit
    trace: tuple[StepRecord, ...]
    initial: MlogitFit

    @property
    def removed(self) -> list[str]:
        return [r.removed for r in self.trace if r.removed is not None]


def backward_stepwise(table: PredictorTable, spec: ModelSpec, outcome=None, *, threads: int = 1) -> StepwiseResult:
    """Backward elimination by AIC.

    Each step refits the model without each remaining predictor and drops
    the one giving the lowest AIC, as long as that AIC does not exceed the
    current one; ties go to the predictor declared first. Candidate refits
    that fail are logged and skipped. Refits may run on ``threads`` worker
    threads; the decision waits for all of them, so the result does not
    depend on the thread count.
    """
    design = build_design(table, spec, outcome)
    if spec.reference_class is None:
        # pin the reference so reduced models share it
        spec = ModelSpec(spec.outcome, spec.predictors, design.classes[0], spec.name)
    current = fit_design(design, spec)
    initial = current
    trace = []

    def refit(s: ModelSpec):
        return fit_mlogit(table, s, outcome)

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        step = 0
        while current.spec.predictors:
            step += 1
            names = list(current.spec.predictors)
            specs = [current.spec.without(p) for p in names]
            futures = [pool.submit(refit, s) for s in specs] if pool else None
            cands, fits = [], []
            for i, p in enumerate(names):
                try:
                    f = futures[i].result() if pool else refit(specs[i])
                    cands.append(Candidate(p, f.aic))
                    fits.append(f)
                except TypologyError as e:
                    logger.warning("stepwise: refit without %s failed: %s", p, e)
                    cands.append(Candidate(p, None, f"{type(e).__name__}: {e}"))
                    fits.append(None)
            ok = [(c.aic, i) for i, c in enumerate(cands) if c.aic is not None]
            best = min(ok) if ok else None
            if best is None or best[0] > current.aic:
                trace.append(StepRecord(step, current.aic, tuple(cands), None))
                break
            trace.append(StepRecord(step, current.aic, tuple(cands), names[best[1]]))
            current = fits[best[1]]
    finally:
        if pool:
            pool.shutdown()
    return StepwiseResult(current.spec, current, tuple(trace), initial)


def model_report(fit: MlogitFit, lrts: Mapping[str, LrtResult] | None = None,
                 stepwise: StepwiseResult | None = None) -> dict:
    out = fit.to_dict()
    if fit.columns:
        OR = odds_ratios(fit)
        out["odds_ratios"] = {c: {r: float(OR.loc[r, c]) for r in OR.index} for c in OR.columns}
    else:
        out["odds_ratios"] = {c: {} for c in fit.classes[1:]}
    out["lrt"] = [r.to_dict() for r in (lrts or {}).values()]
    if stepwise is not None:
        out["initial"] = {"predictors": list(stepwise.initial.spec.predictors), "aic": stepwise.initial.aic,
                          "log_likelihood": stepwise.initial.log_likelihood}
        out["removed"] = stepwise.removed
        out["trace"] = [r.to_dict() for r in stepwise.trace]
    return out
