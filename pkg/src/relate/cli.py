"""Command line front end.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 on runtime
failures. All file outputs are written atomically, so an interrupted
command leaves no partial artifact under a final name.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .evaluation import bench_scaling, evaluate, evaluate_by_category, write_category_csv
from .expressivity import audit_random_tables, write_audit_json
from .kg import augment_reciprocal, load_dataset, write_triples
from .patterns import verify_all_patterns, write_witnesses_json
from .perturbation import (
    ALL_KINDS,
    PerturbationKind,
    PerturbationSpec,
    RobustnessReport,
    apply_perturbation,
    robustness_experiment,
    write_edit_log,
)
from .storage import (
    atomic_write,
    build_model,
    export_embeddings,
    load_checkpoint,
    save_checkpoint,
    write_history_csv,
    write_json,
)
from .synthetic import SyntheticSpec, generate_synthetic_kg, write_synthetic_dataset
from .training import ConfigError, TrainConfig, load_config, prepare_training_graph, train, write_config

log = logging.getLogger(__name__)


class UsageError(Exception):
    """Raised for malformed invocations; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise UsageError(f"{self.prog}: {message}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the random seed")
    parser.add_argument(
        "--workers", type=int, default=None, help="worker count (default 1)"
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="relate", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic family dataset")
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--valid-frac", type=float, default=0.1)
    p.add_argument("--test-frac", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--config", type=Path, default=None, help="key=value config file")
    p.add_argument("--model", choices=["relate", "transe", "rotate"], default="relate")
    p.add_argument("--no-timing", action="store_true", help="zero timing fields in outputs")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p.add_argument("--out", type=Path, default=None, help="JSON report path")
    p.add_argument("--category-csv", type=Path, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("perturb", help="write a perturbed copy of a dataset")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument(
        "--kind",
        required=True,
        choices=[k.value for k in ALL_KINDS],
    )
    p.add_argument("--ratio", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--relation-pair",
        default=None,
        help="two comma-separated relation indices for the flip kind",
    )
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("robustness", help="train and evaluate across perturbations")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--models", default="relate,transe,rotate")
    p.add_argument(
        "--kinds",
        default="all",
        help="comma-separated perturbation kinds, or 'all'",
    )
    p.add_argument("--ratio", type=float, default=0.1)
    p.add_argument("--n-seeds", type=int, default=3)
    _add_common(p)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser(
        "verify-expressivity",
        help="construct and verify separation certificates over random truth tables",
    )
    p.add_argument("--entities", type=int, default=3)
    p.add_argument("--relations", type=int, default=2)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--gamma", type=float, default=12.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", type=Path, default=None, help="audit JSON path")
    p.set_defaults(func=cmd_verify_expressivity)

    p = sub.add_parser(
        "verify-patterns", help="check the inference-pattern constructions"
    )
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--tolerance", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="witness JSON path")
    p.set_defaults(func=cmd_verify_patterns)

    p = sub.add_parser("bench", help="scoring cost versus dimension")
    p.add_argument("--dims", default="64,128,256,512,1024")
    p.add_argument("--triples", type=int, default=5000)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--model", choices=["relate", "transe", "rotate"], default="relate")
    p.add_argument("--entities", type=int, default=512)
    p.add_argument("--relations", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-embeddings", help="write entity embeddings as CSV")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_export_embeddings)

    return parser


def _resolve_config(args) -> TrainConfig:
    config = load_config(args.config) if args.config else TrainConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        config = replace(config, workers=args.workers)
    return config.validate()


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(
        entities=args.entities,
        depth=args.depth,
        train_fraction=args.train_frac,
        valid_fraction=args.valid_frac,
        test_fraction=args.test_frac,
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    kg = generate_synthetic_kg(spec, args.seed)
    write_synthetic_dataset(kg, args.out, spec, args.seed)
    print(
        f"wrote {kg.n_entities} entities, "
        f"{kg.train.shape[0]}/{kg.valid.shape[0]}/{kg.test.shape[0]} "
        f"train/valid/test triples to {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    config = _resolve_config(args)
    kg = load_dataset(args.data)
    kg, signatures = prepare_training_graph(config, kg)
    model, history = train(config, kg, signatures=signatures, model_kind=args.model)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        out / "checkpoint.npz",
        model,
        kg.vocab,
        extra_meta={"reciprocal": config.reciprocal, "model": args.model},
    )
    write_history_csv(
        out / "history.csv", history.as_dicts(), include_timing=not args.no_timing
    )
    write_config(out / "config.resolved.cfg", config)
    report = evaluate(model, kg, "test", workers=config.workers)
    write_json(out / "metrics.json", report.as_dict())
    print(report.format_text())
    best = history.best_valid_mrr
    if best is not None:
        print(f"best validation MRR {best:.4f} at step {history.best_step}")
    return 0


def _load_eval_pair(checkpoint: Path, data: Path):
    model, _, meta = load_checkpoint(checkpoint)
    kg = load_dataset(data)
    if meta.get("reciprocal"):
        kg = augment_reciprocal(kg)
    if kg.n_relations != model.n_relations or kg.n_entities != model.n_entities:
        raise ValueError(
            f"checkpoint space ({model.n_entities} entities, {model.n_relations} "
            f"relations) does not match dataset ({kg.n_entities}, {kg.n_relations})"
        )
    return model, kg


def cmd_eval(args) -> int:
    workers = args.workers or 1
    model, kg = _load_eval_pair(args.checkpoint, args.data)
    report = evaluate(model, kg, args.split, workers=workers)
    print(report.format_text())
    if args.out is not None:
        write_json(args.out, report.as_dict())
    if args.category_csv is not None:
        categories = evaluate_by_category(model, kg, args.split, workers=workers)
        write_category_csv(args.category_csv, categories)
    return 0


def cmd_perturb(args) -> int:
    kg = load_dataset(args.data)
    pair = None
    if args.relation_pair is not None:
        try:
            a, b = (int(x) for x in args.relation_pair.split(","))
        except ValueError:
            raise UsageError(
                f"--relation-pair expects two comma-separated integers, got {args.relation_pair!r}"
            ) from None
        pair = (a, b)
    spec = PerturbationSpec(
        kind=PerturbationKind(args.kind),
        ratio=args.ratio,
        seed=args.seed,
        relation_pair=pair,
    )
    new_train, edits = apply_perturbation(kg.train, kg, spec)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    header = [
        f"perturbed training split: kind={spec.kind.value} ratio={spec.ratio} seed={spec.seed}"
    ]
    write_triples(out / "train.txt", new_train, kg.vocab, header)
    # valid/test are untouched: copy the source files byte for byte so the
    # held-out splits stay verifiably identical
    for name in ("valid.txt", "test.txt"):
        with atomic_write(out / name, "wb") as fh:
            fh.write((args.data / name).read_bytes())
    write_edit_log(out / "edit_log.tsv", edits)
    print(
        f"{spec.kind.value}: {len(edits)} edits, "
        f"train {kg.train.shape[0]} -> {new_train.shape[0]} triples"
    )
    return 0


def cmd_robustness(args) -> int:
    config = _resolve_config(args)
    kg = load_dataset(args.data)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    for m in models:
        if m not in ("relate", "transe", "rotate"):
            raise UsageError(f"unknown model kind {m!r}")
    if args.kinds.strip() == "all":
        kinds = list(ALL_KINDS)
    else:
        try:
            kinds = [PerturbationKind(k.strip()) for k in args.kinds.split(",")]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    specs = [
        PerturbationSpec(kind=kind, ratio=args.ratio, seed=config.seed)
        for kind in kinds
    ]
    report = robustness_experiment(
        models, kg, specs, config, seeds=tuple(range(args.n_seeds))
    )
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "robustness.json", report.as_dict())
    report.write_csv(out / "robustness.csv")
    for kind in report.kinds:
        cells = " ".join(
            f"{m}:{report.cells[(kind, m)].delta_mrr_pct:+.1f}%" for m in models
        )
        print(f"{kind:<26} dMRR {cells}")
    return 0


def cmd_verify_expressivity(args) -> int:
    audit = audit_random_tables(
        n_tables=args.trials,
        n_entities=args.entities,
        n_relations=args.relations,
        gamma=args.gamma,
        seed=args.seed,
    )
    if args.out is not None:
        write_audit_json(args.out, audit)
    print(f"{audit.n_valid}/{audit.n_tables} certificates valid")
    if audit.failures:
        sample = audit.failures[0]
        print(
            f"first failure: table {sample['table_index']} with "
            f"{sample['n_offending']} offending triples "
            f"(min true {sample['min_true_score']:.3g}, "
            f"max false {sample['max_false_score']:.3g})"
        )
    return 0


def cmd_verify_patterns(args) -> int:
    witnesses = verify_all_patterns(
        dim=args.dim, n_trials=args.trials, tolerance=args.tolerance, seed=args.seed
    )
    if args.out is not None:
        write_witnesses_json(args.out, witnesses)
    for w in witnesses:
        status = "PASS" if w.passed else "FAIL"
        print(f"{status} {w.kind.value:<14} max residual {w.max_residual:.3e}")
    return 0 if all(w.passed for w in witnesses) else 2


def cmd_bench(args) -> int:
    try:
        dims = [int(d) for d in args.dims.split(",")]
    except ValueError:
        raise UsageError(f"--dims expects comma-separated integers, got {args.dims!r}") from None

    def factory(d: int):
        return build_model(
            args.model, args.entities, args.relations, d, gamma=12.0, seed=args.seed
        )

    report = bench_scaling(factory, dims, n_triples=args.triples, repetitions=args.reps)
    for p in report.points:
        print(f"d={p.dim:<5d} {p.seconds_per_triple * 1e6:9.3f} us/triple")
    print(
        f"linear fit: {report.slope:.3e} s/dim + {report.intercept:.3e} s, "
        f"R^2 = {report.r_squared:.4f}"
    )
    if args.out is not None:
        write_json(args.out, report.as_dict())
    return 0


def cmd_export_embeddings(args) -> int:
    model, vocab, _ = load_checkpoint(args.checkpoint)
    export_embeddings(model, vocab, args.out)
    print(f"wrote {model.n_entities} entity rows to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: report, do not traceback-spam
        log.debug("unhandled failure", exc_info=True)
        print(f"failed: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
