"""Command-line front end.

Every subcommand reads the same config file and writes its reports into
``--out-dir``. Exit codes: 0 success, 1 config error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError, TypologyError
from .pipeline import dumps_json, dump_config, load_config, run_pipeline

logger = logging.getLogger("typogen")

# subcommand -> pipeline targets
TARGETS = {
    "patterns": ("patterns",),
    "curvefit": ("curvefit",),
    "trees": ("trees",),
    "efa": ("efa",),
    "score": ("score",),
    "fit": ("typologies", "fit"),
    "stepwise": ("typologies", "stepwise"),
    "compare": ("typologies", "stepwise", "compare"),
    "run": ("all",),
}

HELP = {
    "validate": "check the config and parse the dataset",
    "patterns": "rank distinct answer patterns and select the head classes",
    "curvefit": "fit the rank-frequency curve and the count distribution",
    "trees": "enumerate, filter and select taxonomic trees",
    "efa": "factor-analyse the configured scales",
    "score": "build the predictor table",
    "fit": "fit full multinomial models for every configured typology",
    "stepwise": "fit and reduce the models by backward elimination",
    "compare": "compare reduced models",
    "run": "run the whole pipeline",
    "synth-fixture": "write a synthetic survey and a matching config",
}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="pipeline config (YAML)")
    p.add_argument("--out-dir", type=Path, help="output directory (default: config out_dir or ./out)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="worker threads for enumeration and refits")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="typogen", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    trees = argparse.ArgumentParser(add_help=False)
    g = trees.add_argument_group("tree constraints (override the config)")
    g.add_argument("--min-leaf-grow", type=int)
    g.add_argument("--min-leaf-filter", type=int)
    g.add_argument("--max-leaf-filter", type=int)
    g.add_argument("--exclude-question", action="append", metavar="ID",
                   help="question no tree may split on (repeatable)")
    for name in ("validate", *TARGETS):
        parents = [common] if name in ("validate", "patterns", "curvefit", "efa", "score") else [common, trees]
        sub.add_parser(name, parents=parents, help=HELP[name], description=HELP[name])
    s = sub.add_parser("synth-fixture", parents=[common], help=HELP["synth-fixture"],
                       description=HELP["synth-fixture"])
    s.add_argument("--head-only", action="store_true",
                   help="only the 435 respondents of the fifteen most common patterns")
    return parser


def _merge_global(args, argv):
    # flags may come before or after the subcommand; argparse keeps the
    # subparser's value, which is None when only the global one was given
    glob = _common().parse_known_args(argv)[0]
    for k in ("config", "out_dir", "seed", "threads"):
        if getattr(args, k, None) is None:
            setattr(args, k, getattr(glob, k))
    args.verbose = max(args.verbose, glob.verbose)
    return args


def _fail(stage: str, exc: Exception, out_dir: Path | None) -> int:
    code = getattr(exc, "exit_code", 3)
    rep = {"status": "error", "stage": stage, "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(f"error [{stage}]: {exc}", file=sys.stderr)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(dumps_json(rep), encoding="utf-8")
    return code


def cmd_synth(args) -> int:
    from .dataset import write_dataset
    from .fixtures import binary_dataset, survey_config, head_fixture_spec, synthesize_fixture, synthesize_survey_dataset

    out = args.out_dir or Path(".")
    seed = 0 if args.seed is None else args.seed
    out.mkdir(parents=True, exist_ok=True)
    if args.head_only:
        spec = head_fixture_spec()
        ds = binary_dataset(synthesize_fixture(spec, seed), spec.questions)
    else:
        ds = synthesize_survey_dataset(seed)
    write_dataset(ds, out / "survey.csv")
    cfg = survey_config("survey.csv", seed)
    if args.head_only:
        cfg["dataset"]["questions"] = [q.to_dict() for q in ds.questions]
        for key in ("scales", "fixed_scales", "direct_items", "demographics", "rule_typologies",
                    "models", "comparisons"):
            cfg[key] = []
        # a third of the head alone leaves no tree between the leaf bounds;
        # keep the full survey's cap instead
        cfg["trees"]["max_leaf_filter"] = 514 // 3
    if args.threads:
        cfg["threads"] = args.threads
    (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    print(f"wrote {ds.n} respondents to {out / 'survey.csv'} and {out / 'config.yaml'}")
    return 0


def cmd_validate(args) -> int:
    from .dataset import load_dataset

    cfg = load_config(args.config)
    if not cfg.dataset_path.exists():
        return _fail("dataset", DataError(f"dataset file not found: {cfg.dataset_path}"), None)
    ds = load_dataset(cfg.dataset_path, cfg.questions, cfg.delimiter, cfg.id_column)
    print(json.dumps({"status": "ok", "respondents": ds.n, "questions": len(ds.questions),
                      "models": [m.name for m in cfg.models], "config_sha256": cfg.sha256}, indent=2))
    return 0


def _override_trees(cfg, args):
    from dataclasses import replace

    c = cfg.constraints
    kw = {}
    if getattr(args, "min_leaf_grow", None) is not None:
        kw["min_leaf_grow"] = args.min_leaf_grow
    if getattr(args, "min_leaf_filter", None) is not None:
        kw["min_leaf_filter"] = args.min_leaf_filter
    if getattr(args, "max_leaf_filter", None) is not None:
        kw["max_leaf_filter"] = args.max_leaf_filter
    if getattr(args, "exclude_question", None):
        kw["excluded_questions"] = frozenset(args.exclude_question)
    if kw:
        cfg.constraints = replace(c, **kw)
        cfg.min_leaf_grow = cfg.constraints.min_leaf_grow


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = _merge_global(parser.parse_args(argv), argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth-fixture":
        try:
            return cmd_synth(args)
        except TypologyError as exc:
            return _fail("synth-fixture", exc, None)
    if args.config is None:
        parser.error(f"{args.command} needs --config")
    if args.command == "validate":
        try:
            return cmd_validate(args)
        except ConfigError as exc:
            return _fail("config", exc, None)
        except TypologyError as exc:
            return _fail("dataset", exc, None)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail("config", exc, args.out_dir)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = max(1, args.threads)
    try:
        _override_trees(cfg, args)
    except ConfigError as exc:
        return _fail("config", exc, args.out_dir)
    status, pipe = run_pipeline(cfg, args.out_dir, TARGETS[args.command])
    if status:
        err = json.loads((pipe.out_dir / "error.json").read_text())
        print(f"error [{err['stage']}]: {err['message']}", file=sys.stderr)
        return status
    print(f"{args.command}: ok; outputs in {pipe.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
