"""Curve-fitting typology.

Every distinct Yes/No answer vector over the included questions is a
candidate type. Types are ranked by how many respondents share them, a
rank-frequency curve is fitted to the head of that ranking, and the
smallest head covering a target share of respondents becomes the typology
(classes ``C1..Ck``); everyone else is excluded.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .dataset import SurveyDataset
from .errors import ConfigError, ConvergenceError, DataError

logger = logging.getLogger(__name__)

EXCLUDED = "EXCLUDED"
DENOMINATOR_MODES = ("all_respondents", "top_n_pool")
DEFAULT_POOL_SIZE = 15
DEFAULT_THRESHOLD = 0.79
DEFAULT_MODE = "top_n_pool"


@dataclass(frozen=True)
class ResponsePattern:
    questions: tuple[str, ...]
    answers: tuple[bool, ...]
    count: int
    rank: int = 0

    def as_string(self) -> str:
        return "".join("Y" if a else "N" for a in self.answers)

    def yes_questions(self) -> list[str]:
        return [q for q, a in zip(self.questions, self.answers) if a]

    def describe(self) -> str:
        yes = self.yes_questions()
        return " + ".join(yes) if yes else "(none)"

    def as_record(self) -> dict[str, bool]:
        return dict(zip(self.questions, self.answers))


def _tie_key(answers: tuple[bool, ...]) -> tuple[int, ...]:
    # ascending on the Y/N string: No before Yes at the first differing question
    return tuple(int(a) for a in answers)


def enumerate_patterns(ds: SurveyDataset, included: Sequence[str]) -> list[ResponsePattern]:
    """Distinct answer vectors, most frequent first; rank is 1-based."""
    if not included:
        raise ConfigError("at least one question must be included")
    X = ds.binary_matrix(list(included))
    counts = Counter(tuple(bool(v) for v in row) for row in X)
    order = sorted(counts.items(), key=lambda kv: (-kv[1], _tie_key(kv[0])))
    qs = tuple(included)
    return [ResponsePattern(qs, ans, c, rank) for rank, (ans, c) in enumerate(order, start=1)]


# ---------------------------------------------------------------------------
# rank-frequency curve

CURVE_FAMILY = "offset_gaussian"


def curve_value(x, a, b, c, d):
    """y = a + b * exp(-((x + c) / d)**2)"""
    x = np.asarray(x, dtype=float)
    return a + b * np.exp(-(((x + c) / d) ** 2))


def _residuals(theta, x, y):
    return y - curve_value(x, *theta)


def _jacobian(theta, x):
    """Jacobian of the model (not the residual) with respect to (a, b, c, d)."""
    a, b, c, d = theta
    u = (x + c) / d
    e = np.exp(-u * u)
    return np.column_stack([
        np.ones_like(x),
        e,
        b * e * (-2.0 * u / d),
        b * e * (2.0 * u * u / d),
    ])


def rss_gradient(theta, x, y) -> np.ndarray:
    """Gradient of the residual sum of squares."""
    r = _residuals(theta, x, y)
    return -2.0 * _jacobian(theta, x).T @ r


@dataclass(frozen=True)
class CurveFit:
    a: float
    b: float
    c: float
    d: float
    rss: float
    family: str = CURVE_FAMILY
    iterations: int = 0
    converged: bool = True
    degenerate: bool = False
    rss_history: tuple[float, ...] = field(default=(), repr=False, compare=False)

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def predict(self, x):
        return curve_value(x, *self.params)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "d": self.d,
            "rss": self.rss,
            "iterations": self.iterations,
            "converged": self.converged,
            "degenerate": self.degenerate,
        }


def default_curve_init(x, y) -> CurveFit:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    i = int(np.argmax(y))
    return CurveFit(
        a=float(y.min()),
        b=float(y.max() - y.min()),
        c=float(1.0 - x[i]),
        d=len(x) / 4.0,
        rss=float("nan"),
    )


def fit_rank_frequency_curve(points, init: CurveFit | None = None, *, max_iter: int = 500,
                             rtol: float = 1e-10, gtol: float = 1e-8) -> CurveFit:
    """Least-squares fit of the offset-Gaussian rank-frequency curve.

    Levenberg-Marquardt with Marquardt's diagonal scaling. A trial step is
    accepted only when it lowers the residual sum of squares, so the RSS
    history is non-increasing.

    Parameters
    ----------
    points : sequence of (rank, count)
    init : CurveFit, optional
        Starting values; defaults to ``default_curve_init``.

    Raises
    ------
    ConvergenceError
        After ``max_iter`` iterations; ``.best`` is the best fit so far.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DataError("points must be a sequence of (rank, count) pairs")
    if len(pts) < 5:
        raise DataError(f"need at least 5 points to fit 4 parameters, got {len(pts)}")
    x, y = pts[:, 0], pts[:, 1]
    if (y < 0).any():
        raise DataError("counts must be nonnegative")
    start = init or default_curve_init(x, y)

    if y.max() == y.min():
        # flat curve: b = 0 makes c and d unidentifiable
        return replace(start, a=float(y[0]), b=0.0, rss=0.0, converged=True, degenerate=True,
                       rss_history=(0.0,))

    theta = np.array(start.params, dtype=float)
    if theta[3] <= 0:
        raise DataError("initial width d must be positive")
    r = _residuals(theta, x, y)
    rss = float(r @ r)
    history = [rss]
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = _jacobian(theta, x)
        g = J.T @ r
        if np.max(np.abs(2.0 * g)) < gtol:
            converged = True
            break
        A = J.T @ J
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + step
            if trial[3] <= 0 or not np.all(np.isfinite(trial)):
                lam *= 10.0
                continue
            r_new = _residuals(trial, x, y)
            rss_new = float(r_new @ r_new)
            if rss_new < rss:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no descent direction left at machine precision
            converged = True
            break
        rel = (rss - rss_new) / rss if rss > 0 else 0.0
        theta, r, rss = trial, r_new, rss_new
        history.append(rss)
        lam = max(lam / 10.0, 1e-12)
        # Gauss-Newton converges only linearly on large-residual fits, so a
        # tiny relative decrease alone does not imply a stationary point
        if rss == 0.0 or (rel < rtol and np.max(np.abs(rss_gradient(theta, x, y))) <= 1e-7 * (1.0 + rss)):
            converged = True
            break

    fit = CurveFit(*map(float, theta), rss=rss, iterations=it, converged=converged,
                   rss_history=tuple(history))
    if not converged:
        raise ConvergenceError(f"curve fit did not converge in {max_iter} iterations",
                               best=replace(fit, converged=False))
    return fit


def rank_count_points(patterns: Sequence[ResponsePattern], limit: int | None = None) -> list[tuple[int, int]]:
    head = patterns if limit is None else patterns[:limit]
    return [(p.rank, p.count) for p in head]


# ---------------------------------------------------------------------------
# count distribution diagnostic


@dataclass(frozen=True)
class CountDistributionFit:
    size: float  # r
    prob: float  # p, success probability
    log_likelihood: float
    poisson_log_likelihood: float
    chi_square: float
    chi_square_df: int
    chi_square_p: float
    poisson_like: bool
    n: int

    @property
    def mean(self) -> float:
        return self.size * (1 - self.prob) / self.prob

    def to_dict(self) -> dict:
        return {
            "family": "negative_binomial",
            "size": self.size,
            "prob": self.prob,
            "mean": self.mean,
            "log_likelihood": self.log_likelihood,
            "poisson_log_likelihood": self.poisson_log_likelihood,
            "chi_square": self.chi_square,
            "chi_square_df": self.chi_square_df,
            "chi_square_p": self.chi_square_p,
            "poisson_like": self.poisson_like,
            "n": self.n,
        }


def _nb_loglik(r, counts):
    m = counts.mean()
    p = r / (r + m)
    return float(stats.nbinom.logpmf(counts, r, p).sum()), p


def _chi_square(counts, pmf, n_params):
    """Pearson statistic with adjacent bins pooled until every expected count is >= 5."""
    n = len(counts)
    top = int(counts.max())
    obs = np.bincount(counts, minlength=top + 1).astype(float)
    exp = n * pmf(np.arange(top + 1))
    exp[-1] += n * max(0.0, 1.0 - exp.sum() / n)  # upper tail into last bin
    bins_o, bins_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if bins_e:
            bins_o[-1] += acc_o
            bins_e[-1] += acc_e
        else:
            bins_o, bins_e = [acc_o], [acc_e]
    o = np.array(bins_o)
    e = np.array(bins_e)
    stat = float(((o - e) ** 2 / e).sum())
    df = len(o) - 1 - n_params
    pval = float(stats.chi2.sf(stat, df)) if df > 0 else float("nan")
    return stat, df, pval


def fit_count_distribution(counts, *, max_size: float = 1e6) -> CountDistributionFit:
    """Maximum-likelihood negative binomial fit with a chi-square goodness-of-fit statistic.

    The success probability is profiled out (``p = r / (r + mean)``), leaving
    a one-dimensional search over ``log r``. When the sample is not
    overdispersed the likelihood keeps rising with ``r``; the fit is then
    reported at ``max_size`` and flagged Poisson-like.
    """
    c = np.asarray(counts)
    if c.size == 0:
        raise DataError("no counts")
    if not np.issubdtype(c.dtype, np.integer):
        if not np.all(np.equal(np.mod(c, 1), 0)):
            raise DataError("counts must be integers")
        c = c.astype(np.int64)
    if (c < 0).any():
        raise DataError("counts must be nonnegative")
    if c.min() == c.max():
        raise DataError("zero variance: all counts are equal")

    m = c.mean()
    v = c.var(ddof=1)
    # method-of-moments start, bracketed search over log r
    r0 = m * m / (v - m) if v > m else max_size
    res = optimize.minimize_scalar(lambda lr: -_nb_loglik(math.exp(lr), c)[0],
                                   bounds=(math.log(1e-6), math.log(max_size)), method="bounded",
                                   options={"xatol": 1e-10})
    r = math.exp(res.x)
    if -res.fun < _nb_loglik(min(r0, max_size), c)[0]:
        r = min(r0, max_size)
    ll, p = _nb_loglik(r, c)
    pois_ll = float(stats.poisson.logpmf(c, m).sum())
    chi, df, pval = _chi_square(c, lambda k: stats.nbinom.pmf(k, r, p), 2)
    poisson_like = r > 1e3 or ll - pois_ll < 1e-3
    return CountDistributionFit(size=r, prob=p, log_likelihood=ll, poisson_log_likelihood=pois_ll,
                                chi_square=chi, chi_square_df=df, chi_square_p=pval,
                                poisson_like=bool(poisson_like), n=int(c.size))


# ---------------------------------------------------------------------------
# head selection and assignment


@dataclass(frozen=True)
class PatternTypology:
    classes: tuple[tuple[str, ResponsePattern], ...]
    covered: int
    denominator: int
    denominator_mode: str
    threshold: float
    pool_size: int | None = None

    @property
    def coverage(self) -> float:
        return self.covered / self.denominator

    @property
    def k(self) -> int:
        return len(self.classes)

    @property
    def labels(self) -> list[str]:
        return [lab for lab, _ in self.classes]

    @property
    def questions(self) -> tuple[str, ...]:
        return self.classes[0][1].questions if self.classes else ()

    @property
    def mean_class_size(self) -> float:
        return self.covered / self.k

    def pattern(self, label: str) -> ResponsePattern:
        for lab, p in self.classes:
            if lab == label:
                return p
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "denominator_mode": self.denominator_mode,
            "pool_size": self.pool_size,
            "covered": self.covered,
            "denominator": self.denominator,
            "coverage": self.coverage,
            "classes": [
                {"label": lab, "pattern": p.as_string(), "yes": p.yes_questions(), "count": p.count}
                for lab, p in self.classes
            ],
        }


def select_head_classes(patterns: Sequence[ResponsePattern], threshold: float = DEFAULT_THRESHOLD,
                        mode: str = DEFAULT_MODE, pool_size: int = DEFAULT_POOL_SIZE) -> PatternTypology:
    """Smallest head of the ranking whose cumulative share reaches ``threshold``.

    The share's denominator is every respondent (``all_respondents``) or
    the respondents in the ``pool_size`` most common patterns
    (``top_n_pool``).
    """
    if not 0 < threshold <= 1:
        raise ConfigError("threshold must lie in (0, 1]")
    if mode not in DENOMINATOR_MODES:
        raise ConfigError(f"unknown denominator mode {mode!r}")
    if not patterns:
        raise DataError("no patterns")
    if mode == "top_n_pool":
        if not 1 <= pool_size <= len(patterns):
            raise ConfigError(f"pool_size {pool_size} must lie in 1..{len(patterns)}")
        candidates = patterns[:pool_size]
    else:
        candidates = patterns
    denominator = sum(p.count for p in candidates)
    cum = 0
    for k, p in enumerate(candidates, start=1):
        cum += p.count
        # integer comparison avoids rounding at the boundary
        if cum >= threshold * denominator or cum == denominator:
            classes = tuple((f"C{j}", q) for j, q in enumerate(candidates[:k], start=1))
            return PatternTypology(classes, cum, denominator, mode, threshold,
                                   pool_size if mode == "top_n_pool" else None)
    raise DataError(f"threshold {threshold} unreachable")


def assign_pattern_class(record: Mapping, typ: PatternTypology) -> str:
    answers = tuple(bool(record[q]) for q in typ.questions)
    for label, p in typ.classes:
        if p.answers == answers:
            return label
    return EXCLUDED


def assign_pattern_classes(ds: SurveyDataset, typ: PatternTypology) -> list[str]:
    lookup = {p.answers: lab for lab, p in typ.classes}
    X = ds.binary_matrix(list(typ.questions))
    return [lookup.get(tuple(bool(v) for v in row), EXCLUDED) for row in X]


def patterns_csv(patterns: Sequence[ResponsePattern]) -> str:
    total = sum(p.count for p in patterns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "pattern", "yes_questions", "count", "cumulative_share"])
    cum = 0
    for p in patterns:
        cum += p.count
        w.writerow([p.rank, p.as_string(), p.describe(), p.count, f"{cum / total:.6f}"])
    return buf.getvalue()
