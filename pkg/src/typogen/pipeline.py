"""Configuration and the end-to-end run.

One YAML file drives every stage: dataset -> both typologies (and any rule
typologies) -> predictors -> fitted and reduced models -> comparisons.
Each stage writes its own report into the output directory; a manifest
records the config hash, library versions and per-stage counts. Wall-clock
timings go to a separate ``timings.json`` so the remaining files are
byte-identical between runs with the same config.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd
import scipy
import yaml

from . import __version__
from .comparison import (
    AlignmentReport,
    RuleTypology,
    TypologyMapping,
    alignment_report,
    assign_rule_classes,
    map_typologies,
)
from .dataset import (
    QuestionDef,
    SurveyDataset,
    binary_correlation_matrix,
    correlation_csv,
    drop_degenerate_questions,
    load_dataset,
    load_schema,
    question_stats,
)
from .errors import ConfigError, DataError, TypologyError
from .modeling import ModelSpec, MlogitFit, StepwiseResult, all_lrts, backward_stepwise, fit_mlogit, model_report, odds_ratio_csv
from .patterns import (
    DEFAULT_MODE,
    DEFAULT_POOL_SIZE,
    DEFAULT_THRESHOLD,
    EXCLUDED,
    CountDistributionFit,
    CurveFit,
    PatternTypology,
    ResponsePattern,
    assign_pattern_classes,
    enumerate_patterns,
    fit_count_distribution,
    fit_rank_frequency_curve,
    patterns_csv,
    rank_count_points,
    select_head_classes,
)
from .psychometrics import (
    DEFAULT_LOADING_THRESHOLD,
    Demographic,
    DirectItem,
    FixedScaleKey,
    PredictorTable,
    ScaleSpec,
    build_predictor_table,
)
from .trees import (
    TaxonomicTree,
    TreeCandidateSet,
    TreeConstraints,
    assign_tree_classes,
    enumerate_trees,
    filter_trees,
    select_tree,
)

logger = logging.getLogger(__name__)

PATTERN_TYPOLOGY = "pattern"
TREE_TYPOLOGY = "tree"


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class ModelConfig:
    name: str
    typology: str
    predictors: tuple[str, ...] | None = None  # None: every predictor in the table
    reference_class: str | None = None
    stepwise: bool = True


@dataclass
class PipelineConfig:
    dataset_path: Path
    questions: tuple[QuestionDef, ...]
    delimiter: str = ","
    id_column: str = "respondent_id"
    degenerate_threshold: float = 0.02
    pattern_questions: tuple[str, ...] | None = None
    pool_size: int = DEFAULT_POOL_SIZE
    threshold: float = DEFAULT_THRESHOLD
    denominator: str = DEFAULT_MODE
    curve_points: int | None = None  # None: the pool
    min_leaf_grow: int = 40
    constraints: TreeConstraints = field(default_factory=TreeConstraints)
    max_candidates: int = 10 ** 6
    loading_threshold: float = DEFAULT_LOADING_THRESHOLD
    scales: tuple[ScaleSpec, ...] = ()
    fixed_scales: tuple[FixedScaleKey, ...] = ()
    direct_items: tuple[DirectItem, ...] = ()
    demographics: tuple[Demographic, ...] = ()
    rule_typologies: tuple[RuleTypology, ...] = ()
    models: tuple[ModelConfig, ...] = ()
    comparisons: tuple[tuple[str, str], ...] = ()
    seed: int = 0
    threads: int = 1
    out_dir: Path | None = None
    raw: bytes = b""

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.raw).hexdigest()


CONFIG_KEYS = frozenset({
    "dataset", "degenerate_threshold", "patterns", "trees", "loading_threshold", "scales", "fixed_scales",
    "direct_items", "demographics", "rule_typologies", "models", "comparisons", "seed", "threads", "out_dir",
})


def _get(d: Mapping, key: str, default=None, kind=None):
    v = d.get(key, default)
    if kind is not None and v is not None:
        try:
            v = kind(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config field {key!r}: {exc}") from exc
    return v


def parse_config(data: Mapping, base_dir: Path | str = ".", raw: bytes = b"") -> PipelineConfig:
    """Validate a config mapping; relative paths resolve against ``base_dir``."""
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a mapping")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    base_dir = Path(base_dir)
    try:
        ds = data["dataset"]
        path = Path(ds["path"])
        questions = load_schema(ds["questions"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"config: dataset section needs path and questions ({exc})") from exc
    if not path.is_absolute():
        path = base_dir / path

    pat = data.get("patterns") or {}
    tr = data.get("trees") or {}
    constraints = TreeConstraints(
        min_leaf_grow=_get(tr, "min_leaf_grow", 40, int),
        min_leaf_filter=_get(tr, "min_leaf_filter", 51, int),
        max_leaf_filter=_get(tr, "max_leaf_filter", None, int),
        excluded_questions=frozenset(tr.get("exclude_questions") or ()),
    )
    rules = tuple(RuleTypology.from_dict(r) for r in data.get("rule_typologies") or ())
    typologies = {PATTERN_TYPOLOGY, TREE_TYPOLOGY} | {r.name for r in rules}
    models = []
    for m in data.get("models") or ():
        mc = ModelConfig(
            name=str(m["name"]),
            typology=str(m.get("typology", m["name"])),
            predictors=None if m.get("predictors") is None else tuple(m["predictors"]),
            reference_class=m.get("reference_class"),
            stepwise=bool(m.get("stepwise", True)),
        )
        if mc.typology not in typologies:
            raise ConfigError(f"model {mc.name!r}: unknown typology {mc.typology!r}")
        models.append(mc)
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate model names")
    comps = []
    for c in data.get("comparisons") or ():
        a, b = str(c["a"]), str(c["b"])
        for x in (a, b):
            if x not in names:
                raise ConfigError(f"comparison refers to unknown model {x!r}")
        comps.append((a, b))
    out_dir = data.get("out_dir")
    cfg = PipelineConfig(
        dataset_path=path,
        questions=questions,
        delimiter=str(ds.get("delimiter", ",")),
        id_column=str(ds.get("id_column", "respondent_id")),
        degenerate_threshold=_get(data, "degenerate_threshold", 0.02, float),
        pattern_questions=None if pat.get("questions") is None else tuple(pat["questions"]),
        pool_size=_get(pat, "pool_size", DEFAULT_POOL_SIZE, int),
        threshold=_get(pat, "threshold", DEFAULT_THRESHOLD, float),
        denominator=str(pat.get("denominator", DEFAULT_MODE)),
        curve_points=_get(pat, "curve_points", None, int),
        min_leaf_grow=constraints.min_leaf_grow,
        constraints=constraints,
        max_candidates=_get(tr, "max_candidates", 10 ** 6, int),
        loading_threshold=_get(data, "loading_threshold", DEFAULT_LOADING_THRESHOLD, float),
        scales=tuple(ScaleSpec.from_dict(s) for s in data.get("scales") or ()),
        fixed_scales=tuple(FixedScaleKey.from_dict(s) for s in data.get("fixed_scales") or ()),
        direct_items=tuple(DirectItem(str(d["id"]), str(d.get("name", d["id"])))
                           for d in data.get("direct_items") or ()),
        demographics=tuple(Demographic.from_dict(d) for d in data.get("demographics") or ()),
        rule_typologies=rules,
        models=tuple(models),
        comparisons=tuple(comps),
        seed=_get(data, "seed", 0, int),
        threads=max(1, _get(data, "threads", 1, int)),
        out_dir=None if out_dir is None else base_dir / out_dir,
        raw=raw,
    )
    if cfg.denominator not in ("all_respondents", "top_n_pool"):
        raise ConfigError(f"unknown denominator mode {cfg.denominator!r}")
    if not 0 < cfg.threshold <= 1:
        raise ConfigError("patterns.threshold must lie in (0, 1]")
    known = {q.id for q in questions}
    for q in cfg.pattern_questions or ():
        if q not in known:
            raise ConfigError(f"patterns.questions: unknown question {q!r}")
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(data, path.parent, raw)


def dump_config(data: Mapping) -> str:
    return yaml.safe_dump(dict(data), sort_keys=False, allow_unicode=True)


# ---------------------------------------------------------------------------
# serialisation helpers


def _clean(x):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats to None."""
    if isinstance(x, Mapping):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"


class StageError(Exception):
    """A pipeline stage failed; wraps the underlying error."""

    def __init__(self, stage: str, error: Exception):
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error

    @property
    def exit_code(self) -> int:
        return getattr(self.error, "exit_code", 3)

    def report(self) -> dict:
        return {
            "status": "error",
            "stage": self.stage,
            "error": type(self.error).__name__,
            "message": str(self.error),
            "exit_code": self.exit_code,
        }


# ---------------------------------------------------------------------------
# the run


@dataclass
class ModelResult:
    config: ModelConfig
    full: MlogitFit
    final: MlogitFit
    stepwise: StepwiseResult | None
    lrts: dict


class Pipeline:
    """Stages computed lazily and cached; every stage writes its outputs once."""

    def __init__(self, cfg: PipelineConfig, out_dir: Path | str | None = None):
        self.cfg = cfg
        self.out_dir = Path(out_dir) if out_dir is not None else (cfg.out_dir or Path("out"))
        self.timings: dict[str, float] = {}
        self.counts: dict[str, Any] = {}
        self.written: list[str] = []
        self._cache: dict[str, Any] = {}

    # -- plumbing

    def _stage(self, name: str, fn):
        if name in self._cache:
            return self._cache[name]
        t0 = time.perf_counter()
        try:
            value = fn()
        except StageError:
            raise
        except TypologyError as exc:
            raise StageError(name, exc) from exc
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise StageError(name, exc) from exc
        self.timings[name] = round(time.perf_counter() - t0, 6)
        self._cache[name] = value
        return value

    def write(self, name: str, text: str):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / name).write_text(text, encoding="utf-8")
        if name not in self.written:
            self.written.append(name)

    # -- stages

    @property
    def dataset(self) -> SurveyDataset:
        return self._stage("dataset", self._dataset)

    def _dataset(self):
        cfg = self.cfg
        if not cfg.dataset_path.exists():
            raise DataError(f"dataset file not found: {cfg.dataset_path}")
        ds = load_dataset(cfg.dataset_path, cfg.questions, cfg.delimiter, cfg.id_column)
        if cfg.pattern_questions is not None:
            included = list(cfg.pattern_questions)
        else:
            included = drop_degenerate_questions(ds, cfg.degenerate_threshold)
        if not included:
            raise DataError("no typology question passes the degenerate-question threshold")
        dropped = [q for q in ds.typology_questions() if q not in included]
        self._cache["included"] = included
        stats = {q: {"yes": question_stats(ds, q).yes_count,
                     "minority_share": question_stats(ds, q).minority_share}
                 for q in ds.typology_questions()}
        self.counts["dataset"] = {"respondents": ds.n, "questions": len(ds.questions),
                                  "included": len(included), "dropped": dropped}
        self.write("dataset_summary.json", dumps_json({
            "respondents": ds.n, "included_questions": included, "dropped_questions": dropped,
            "degenerate_threshold": cfg.degenerate_threshold, "typology_questions": stats,
        }))
        self.write("correlations.csv", correlation_csv(binary_correlation_matrix(ds, included)))
        return ds

    @property
    def included(self) -> list[str]:
        self.dataset
        return self._cache["included"]

    @property
    def patterns(self) -> list[ResponsePattern]:
        return self._stage("patterns", self._patterns)

    def _patterns(self):
        pats = enumerate_patterns(self.dataset, self.included)
        self.write("patterns.csv", patterns_csv(pats))
        self.counts["patterns"] = {"distinct": len(pats)}
        return pats

    @property
    def pattern_typology(self) -> PatternTypology:
        return self._stage("pattern_typology", self._pattern_typology)

    def _pattern_typology(self):
        cfg = self.cfg
        pats = self.patterns
        pool = min(cfg.pool_size, len(pats))
        pt = select_head_classes(pats, cfg.threshold, cfg.denominator, pool)
        self.counts["pattern_typology"] = {"classes": pt.k, "covered": pt.covered, "denominator": pt.denominator}
        self.write("pattern_typology.json", dumps_json(pt.to_dict() | {"mean_class_size": pt.mean_class_size}))
        return pt

    @property
    def curvefit(self) -> tuple[CurveFit | None, CountDistributionFit | None]:
        return self._stage("curvefit", self._curvefit)

    def _curvefit(self):
        pats = self.patterns
        limit = self.cfg.curve_points or min(self.cfg.pool_size, len(pats))
        pts = rank_count_points(pats, limit)
        curve = nb = None
        notes = []
        if len(pts) >= 5:
            curve = fit_rank_frequency_curve(pts)
        else:
            notes.append(f"curve not fitted: {len(pts)} points")
        counts = [p.count for p in pats]
        if len(set(counts)) > 1:
            nb = fit_count_distribution(counts)
        else:
            notes.append("count distribution not fitted: all counts equal")
        rows = ["rank,count,fitted"]
        for r, c in rank_count_points(pats):
            fitted = "" if curve is None else f"{float(curve.predict(r)):.6f}"
            rows.append(f"{r},{c},{fitted}")
        self.write("curve_points.csv", "\n".join(rows) + "\n")
        self.write("curve_fit.json", dumps_json({
            "points": len(pts),
            "curve": None if curve is None else curve.to_dict(),
            "count_distribution": None if nb is None else nb.to_dict(),
            "notes": notes,
        }))
        return curve, nb

    @property
    def tree_candidates(self) -> TreeCandidateSet:
        return self._stage("trees", self._trees)

    def _trees(self):
        cfg = self.cfg
        cands = enumerate_trees(self.dataset, self.included, cfg.min_leaf_grow,
                                max_candidates=cfg.max_candidates, threads=cfg.threads)
        filtered = filter_trees(cands, cfg.constraints)
        tree = select_tree(filtered)
        self._cache["tree"] = tree
        self.counts["trees"] = dict(filtered.stage_counts) | {"selected_leaves": len(tree.leaves)}
        self.write("trees.json", dumps_json({
            "questions": self.included,
            "constraints": {
                "min_leaf_grow": cfg.constraints.min_leaf_grow,
                "min_leaf_filter": cfg.constraints.min_leaf_filter,
                "max_leaf_filter": cfg.constraints.resolved_max(self.dataset.n),
                "excluded_questions": sorted(cfg.constraints.excluded_questions),
            },
            "stage_counts": filtered.stage_counts,
            "candidates": [{"canonical": t.canonical, "leaf_counts": list(t.leaf_counts),
                            "leaf_variance": float(t.leaf_variance()), "tree": t.to_dict()}
                           for t in filtered.trees],
            "selected": tree.summary(),
        }))
        self.write("selected_tree.json", dumps_json(tree.to_dict()))
        return filtered

    @property
    def tree(self) -> TaxonomicTree:
        self.tree_candidates
        return self._cache["tree"]

    @property
    def assignments(self) -> dict[str, list[str]]:
        return self._stage("assignments", self._assignments)

    def _assignments(self):
        ds = self.dataset
        out = {PATTERN_TYPOLOGY: assign_pattern_classes(ds, self.pattern_typology),
               TREE_TYPOLOGY: assign_tree_classes(ds, self.tree)}
        for rt in self.cfg.rule_typologies:
            out[rt.name] = assign_rule_classes(ds, rt)
        frame = pd.DataFrame({self.cfg.id_column: ds.respondent_ids} | out)
        self.write("assignments.csv", frame.to_csv(index=False, lineterminator="\n"))
        self.counts["assignments"] = {
            name: {lab: labels.count(lab) for lab in sorted(set(labels), key=_label_key)}
            for name, labels in out.items()
        }
        return out

    @property
    def mapping(self) -> TypologyMapping:
        return self._stage("mapping", lambda: map_typologies(self.pattern_typology, self.tree))

    @property
    def predictors(self) -> PredictorTable:
        return self._stage("predictors", self._predictors)

    def _predictors(self):
        cfg = self.cfg
        table = build_predictor_table(self.dataset, cfg.scales, cfg.fixed_scales, cfg.direct_items,
                                      cfg.demographics, threshold=cfg.loading_threshold)
        self.write("efa_report.json", dumps_json({name: m.to_report() for name, m in table.factor_models.items()}))
        self.write("predictors.csv", table.to_csv())
        self.counts["predictors"] = {"predictors": len(table.terms), "columns": table.frame.shape[1]}
        return table

    def model(self, name: str) -> ModelResult:
        return self._stage(f"model:{name}", lambda: self._model(name))

    def _model(self, name: str) -> ModelResult:
        mc = next((m for m in self.cfg.models if m.name == name), None)
        if mc is None:
            raise ConfigError(f"unknown model {name!r}")
        table = self.predictors
        labels = self.assignments[mc.typology]
        preds = mc.predictors if mc.predictors is not None else tuple(table.terms)
        spec = ModelSpec(mc.typology, preds, mc.reference_class, mc.name)
        table = table.with_outcome(mc.typology, labels)
        if mc.stepwise:
            sw = backward_stepwise(table, spec, threads=self.cfg.threads)
            full, final = sw.initial, sw.fit
        else:
            sw = None
            full = final = fit_mlogit(table, spec)
        lrts = all_lrts(table, final, threads=self.cfg.threads)
        self.write(f"model_{name}.json", dumps_json(model_report(final, lrts, sw)))
        if final.columns:
            self.write(f"odds_ratios_{name}.csv", odds_ratio_csv(final, lrts))
        self.counts[f"model:{name}"] = {"n_used": final.n_used, "initial_predictors": len(full.spec.predictors),
                                        "final_predictors": len(final.spec.predictors)}
        return ModelResult(mc, full, final, sw, lrts)

    def comparison(self, a: str, b: str) -> AlignmentReport:
        return self._stage(f"comparison:{a}:{b}", lambda: self._comparison(a, b))

    def _comparison(self, a, b):
        ma, mb = self.model(a), self.model(b)
        typs = (ma.config.typology, mb.config.typology)
        mapping = self.mapping if typs == (PATTERN_TYPOLOGY, TREE_TYPOLOGY) else None
        rep = alignment_report(ma.final, mb.final, mapping, names=(a, b))
        self.write(f"comparison_{a}_{b}.json", dumps_json(rep.to_dict()))
        self.write(f"comparison_{a}_{b}.md", rep.to_markdown())
        self.counts[f"comparison:{a}:{b}"] = {s: len(rep.with_status(s)) for s in
                                              ("both_retained", "A_only", "B_only")}
        return rep

    # -- drivers

    def run(self, targets=("all",)) -> None:
        t = set(targets)
        every = "all" in t
        self.dataset
        if every or t & {"patterns", "curvefit", "typologies"}:
            self.patterns
            self.pattern_typology
        if every or "curvefit" in t:
            self.curvefit
        if every or t & {"trees", "typologies"}:
            self.tree_candidates
        if every or "typologies" in t:
            self.assignments
            self.write("mapping.json", dumps_json(self.mapping.to_dict()))
        if every or t & {"efa", "score"}:
            self.predictors
        if every or t & {"fit", "stepwise"}:
            for m in self.cfg.models:
                if "fit" in t and not every:
                    self._stage(f"fit:{m.name}", lambda m=m: self._plain_fit(m))
                else:
                    self.model(m.name)
        if every or "compare" in t:
            for a, b in self.cfg.comparisons:
                self.comparison(a, b)
        self.finish()

    def _plain_fit(self, mc: ModelConfig):
        table = self.predictors
        labels = self.assignments[mc.typology]
        preds = mc.predictors if mc.predictors is not None else tuple(table.terms)
        spec = ModelSpec(mc.typology, preds, mc.reference_class, mc.name)
        table = table.with_outcome(mc.typology, labels)
        fit = fit_mlogit(table, spec)
        lrts = all_lrts(table, fit, threads=self.cfg.threads)
        self.write(f"model_{mc.name}_full.json", dumps_json(model_report(fit, lrts)))
        self.counts[f"fit:{mc.name}"] = {"n_used": fit.n_used, "predictors": len(spec.predictors)}
        return fit

    def manifest(self) -> dict:
        outputs = {}
        for name in sorted(self.written):
            outputs[name] = hashlib.sha256((self.out_dir / name).read_bytes()).hexdigest()
        return {
            "status": "ok",
            "config_sha256": self.cfg.sha256,
            "seed": self.cfg.seed,
            "versions": versions(),
            "stages": list(self.timings),
            "stage_counts": self.counts,
            "outputs": outputs,
        }

    def finish(self):
        self.write("manifest.json", dumps_json(self.manifest()))
        self.write("timings.json", dumps_json({"seconds": self.timings}))


def _label_key(lab: str):
    from .modeling import natural_key

    return (lab == EXCLUDED, natural_key(lab))


def versions() -> dict:
    return {
        "typogen": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pyyaml": yaml.__version__,
    }


def run_pipeline(cfg: PipelineConfig | str | Path, out_dir=None, targets=("all",)) -> tuple[int, Pipeline | None]:
    """Run the requested stages; returns (exit status, pipeline).

    On failure an ``error.json`` naming the failing stage is written to the
    output directory and the status is the error's exit code.
    """
    if not isinstance(cfg, PipelineConfig):
        try:
            cfg = load_config(cfg)
        except ConfigError as exc:
            err = StageError("config", exc)
            _write_error(Path(out_dir) if out_dir else None, err)
            return err.exit_code, None
    pipe = Pipeline(cfg, out_dir)
    try:
        pipe.run(targets)
    except StageError as err:
        logger.error("stage %s failed: %s", err.stage, err.error)
        _write_error(pipe.out_dir, err, pipe)
        return err.exit_code, pipe
    return 0, pipe


def _write_error(out_dir: Path | None, err: StageError, pipe: Pipeline | None = None):
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    rep = err.report()
    if pipe is not None:
        rep["completed_stages"] = list(pipe.timings)
        rep["stage_counts"] = pipe.counts
    (out_dir / "error.json").write_text(dumps_json(rep), encoding="utf-8")
