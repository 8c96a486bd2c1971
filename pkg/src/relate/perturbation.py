"""Structural training-graph perturbations and the robustness harness.

Each generator rewrites only the training split; validation and test are
returned untouched so degradation numbers are comparable across
conditions. Edit counts are exact: k = round(ratio * |train|) edits are
logged, where modifications that collide with an existing triple are kept
in the log as no-op merges.
"""
from __future__ import annotations

import logging
import zlib
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .evaluation import evaluate
from .kg import KnowledgeGraph, Triple, infer_type_signatures
from .training import TrainConfig, derive_seed, prepare_training_graph, train

log = logging.getLogger(__name__)


def _stable_label(text: str) -> int:
    """Process-independent label hash; Python's str hash is randomized."""
    return zlib.crc32(text.encode("utf-8"))


class PerturbationError(ValueError):
    """A perturbation that cannot be generated as specified."""


class PerturbationKind(Enum):
    EDGE_ADDITION = "edge-addition"
    EDGE_DELETION = "edge-deletion"
    INVERSE_RELATION_FLIP = "inverse-relation-flip"
    RELATION_SWAP = "relation-swap"
    COUNTERFACTUAL_INJECTION = "counterfactual-injection"


ALL_KINDS = tuple(PerturbationKind)


@dataclass(frozen=True)
class PerturbationSpec:
    """One perturbation condition.

    ``ratio`` scales the training split to the edit count k. For the flip
    kind, ``relation_pair`` optionally names two relation indices whose
    occurrences are substituted for each other instead of the default
    argument swap. ``plausibility_threshold`` is the minimum cosine between
    an entity signature and the relation's signature centroid for
    counterfactual injection.
    """

    kind: PerturbationKind
    ratio: float = 0.1
    seed: int = 0
    relation_pair: tuple[int, int] | None = None
    plausibility_threshold: float = 0.5
    attempt_budget_factor: int = 100

    def validate(self, n_train: int) -> int:
        if not 0 <= self.ratio <= 1:
            raise PerturbationError(f"ratio must lie in [0, 1], got {self.ratio}")
        k = int(round(self.ratio * n_train))
        if k > n_train and self.kind in (
            PerturbationKind.EDGE_DELETION,
            PerturbationKind.INVERSE_RELATION_FLIP,
            PerturbationKind.RELATION_SWAP,
        ):
            raise PerturbationError(
                f"cannot edit {k} triples out of {n_train}"
            )
        return k


@dataclass(frozen=True)
class EditRecord:
    op: str  # add / del / mod
    before: Triple | None
    after: Triple | None
    note: str = ""


def write_edit_log(path: str | Path, log_entries: Sequence[EditRecord]) -> None:
    """TSV edit log: op, before triple, after triple, note."""
    from .storage import atomic_write

    with atomic_write(path) as fh:
        fh.write("op\tbefore_h\tbefore_r\tbefore_t\tafter_h\tafter_r\tafter_t\tnote\n")
        for rec in log_entries:
            before = rec.before if rec.before is not None else ("", "", "")
            after = rec.after if rec.after is not None else ("", "", "")
            fh.write(
                "\t".join(
                    [rec.op]
                    + [str(x) for x in before]
                    + [str(x) for x in after]
                    + [rec.note]
                )
                + "\n"
            )


def _train_tuples(train: np.ndarray) -> list[Triple]:
    return [tuple(row) for row in train.tolist()]


def _sample_absent_triples(
    kg: KnowledgeGraph, k: int, rng: np.random.Generator, forbidden: set[Triple]
) -> list[Triple]:
    out: list[Triple] = []
    budget = 1000 * max(k, 1)
    while len(out) < k:
        if budget <= 0:
            raise PerturbationError("exhausted attempts sampling absent triples")
        budget -= 1
        h = int(rng.integers(0, kg.n_entities))
        r = int(rng.integers(0, kg.base_relation_count))
        t = int(rng.integers(0, kg.n_entities))
        trip = (h, r, t)
        if trip in forbidden or kg.filter.contains(h, r, t):
            continue
        forbidden.add(trip)
        out.append(trip)
    return out


def _dedupe_keep_first(rows: list[Triple]) -> tuple[list[Triple], set[int]]:
    """Returns the deduplicated list and the positions that were dropped."""
    seen: set[Triple] = set()
    kept: list[Triple] = []
    dropped: set[int] = set()
    for pos, trip in enumerate(rows):
        if trip in seen:
            dropped.add(pos)
            continue
        seen.add(trip)
        kept.append(trip)
    return kept, dropped


def _signature_centroids(
    kg: KnowledgeGraph, signatures: np.ndarray
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per base relation: mean head signature and mean tail signature over
    its training occurrences."""
    out: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    base = kg.train[kg.train[:, 1] < kg.base_relation_count]
    for r in np.unique(base[:, 1]).tolist():
        rows = base[base[:, 1] == r]
        out[int(r)] = (
            signatures[rows[:, 0]].mean(axis=0),
            signatures[rows[:, 2]].mean(axis=0),
        )
    return out


def _cosine_matches(
    signatures: np.ndarray, centroid: np.ndarray, threshold: float
) -> np.ndarray:
    sig_norms = np.linalg.norm(signatures, axis=1)
    c_norm = float(np.linalg.norm(centroid))
    if c_norm == 0.0:
        return np.empty(0, dtype=np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (signatures @ centroid) / (sig_norms * c_norm)
    cos = np.where(np.isfinite(cos), cos, -1.0)
    return np.nonzero(cos >= threshold)[0].astype(np.int64)


def apply_perturbation(
    train: np.ndarray,
    kg: KnowledgeGraph,
    spec: PerturbationSpec,
    signatures: np.ndarray | None = None,
) -> tuple[np.ndarray, list[EditRecord]]:
    """Perturbed copy of ``train`` plus the exact edit log.

    ``kg`` supplies the splits used for absence checks and the entity
    space; ``train`` is usually ``kg.train`` but may already differ.
    Deterministic in (spec, seed).
    """
    train = np.asarray(train, dtype=np.int64).reshape(-1, 3)
    n_train = train.shape[0]
    if n_train == 0:
        raise PerturbationError("cannot perturb an empty training split")
    k = spec.validate(n_train)
    rng = derive_seed(spec.seed, _stable_label(spec.kind.value))
    rows = _train_tuples(train)
    edits: list[EditRecord] = []

    if spec.kind is PerturbationKind.EDGE_ADDITION:
        added = _sample_absent_triples(kg, k, rng, set(rows))
        for trip in added:
            edits.append(EditRecord("add", None, trip))
        rows = rows + added

    elif spec.kind is PerturbationKind.EDGE_DELETION:
        doomed = set(rng.choice(n_train, size=k, replace=False).tolist())
        for pos in sorted(doomed):
            edits.append(EditRecord("del", rows[pos], None))
        rows = [trip for pos, trip in enumerate(rows) if pos not in doomed]

    elif spec.kind is PerturbationKind.INVERSE_RELATION_FLIP:
        if spec.relation_pair is not None:
            r1, r2 = spec.relation_pair
            if not (0 <= r1 < kg.n_relations and 0 <= r2 < kg.n_relations):
                raise PerturbationError(f"relation pair {spec.relation_pair} out of range")
            eligible = [
                pos for pos, (_, r, _) in enumerate(rows) if r in (r1, r2)
            ]
            if len(eligible) < k:
                raise PerturbationError(
                    f"only {len(eligible)} triples use relations {spec.relation_pair}, need {k}"
                )
            chosen = rng.choice(len(eligible), size=k, replace=False)
            swap = {r1: r2, r2: r1}
            for ci in sorted(chosen.tolist()):
                pos = eligible[ci]
                h, r, t = rows[pos]
                rows[pos] = (h, swap[r], t)
                edits.append(EditRecord("mod", (h, r, t), rows[pos]))
        else:
            chosen = np.sort(rng.choice(n_train, size=k, replace=False))
            for pos in chosen.tolist():
                h, r, t = rows[pos]
                rows[pos] = (t, r, h)
                edits.append(EditRecord("mod", (h, r, t), rows[pos]))

    elif spec.kind is PerturbationKind.RELATION_SWAP:
        if kg.base_relation_count < 2:
            raise PerturbationError("relation swap needs at least 2 relations")
        chosen = np.sort(rng.choice(n_train, size=k, replace=False))
        for pos in chosen.tolist():
            h, r, t = rows[pos]
            draw = int(rng.integers(0, kg.base_relation_count - 1))
            new_r = draw + (draw >= r)
            rows[pos] = (h, new_r, t)
            edits.append(EditRecord("mod", (h, r, t), rows[pos]))

    elif spec.kind is PerturbationKind.COUNTERFACTUAL_INJECTION:
        if signatures is None:
            signatures = infer_type_signatures(
                kg.train, kg.valid, kg.n_entities, kg.n_relations
            )
        centroids = _signature_centroids(kg, signatures)
        candidates = {
            r: (
                _cosine_matches(signatures, head_c, spec.plausibility_threshold),
                _cosine_matches(signatures, tail_c, spec.plausibility_threshold),
            )
            for r, (head_c, tail_c) in centroids.items()
        }
        usable = [
            r for r, (hs, ts) in sorted(candidates.items()) if len(hs) and len(ts)
        ]
        if not usable:
            raise PerturbationError(
                "no relation has entities within the plausibility threshold"
            )
        forbidden = set(rows)
        injected: list[Triple] = []
        budget = spec.attempt_budget_factor * max(k, 1)
        last_r = usable[0]
        while len(injected) < k:
            if budget <= 0:
                raise PerturbationError(
                    f"counterfactual sampler exhausted its attempt budget "
                    f"(last relation tried: {last_r})"
                )
            budget -= 1
            last_r = usable[int(rng.integers(0, len(usable)))]
            heads, tails = candidates[last_r]
            h = int(heads[rng.integers(0, len(heads))])
            t = int(tails[rng.integers(0, len(tails))])
            trip = (h, last_r, t)
            if trip in forbidden or kg.filter.contains(h, last_r, t):
                continue
            forbidden.add(trip)
            injected.append(trip)
            edits.append(EditRecord("add", None, trip))
        rows = rows + injected

    else:
        raise PerturbationError(f"unknown perturbation kind {spec.kind!r}")

    deduped, dropped = _dedupe_keep_first(rows)
    if dropped:
        # mark log entries whose result collapsed into an existing triple
        occurrence = Counter(rows)
        edits = [
            (
                EditRecord(rec.op, rec.before, rec.after, "merged")
                if rec.op == "mod" and occurrence[rec.after] > 1
                else rec
            )
            for rec in edits
        ]
        log.info("perturbation %s: %d duplicate rows merged", spec.kind.value, len(dropped))
    return np.array(deduped, dtype=np.int64).reshape(-1, 3), edits


def perturbed_graph(
    kg: KnowledgeGraph, spec: PerturbationSpec, signatures: np.ndarray | None = None
) -> tuple[KnowledgeGraph, list[EditRecord]]:
    """KnowledgeGraph with the perturbed training split; the filter index is
    rebuilt so the new graph is self-consistent."""
    new_train, edits = apply_perturbation(kg.train, kg, spec, signatures)
    return (
        KnowledgeGraph.from_splits(kg.vocab, new_train, kg.valid, kg.test),
        edits,
    )


@dataclass
class RobustnessCell:
    base_mrr: float
    base_hits10: float
    perturbed_mrr: float
    perturbed_hits10: float
    n_seeds: int

    @property
    def delta_mrr(self) -> float:
        return self.perturbed_mrr - self.base_mrr

    @property
    def delta_hits10(self) -> float:
        return self.perturbed_hits10 - self.base_hits10

    @property
    def delta_mrr_pct(self) -> float:
        return 100.0 * self.delta_mrr / self.base_mrr if self.base_mrr else 0.0

    @property
    def delta_hits10_pct(self) -> float:
        return 100.0 * self.delta_hits10 / self.base_hits10 if self.base_hits10 else 0.0

    def as_dict(self) -> dict[str, Any]:
        return {
            "base_mrr": self.base_mrr,
            "base_hits10": self.base_hits10,
            "perturbed_mrr": self.perturbed_mrr,
            "perturbed_hits10": self.perturbed_hits10,
            "delta_mrr": self.delta_mrr,
            "delta_hits10": self.delta_hits10,
            "delta_mrr_pct": self.delta_mrr_pct,
            "delta_hits10_pct": self.delta_hits10_pct,
            "n_seeds": self.n_seeds,
        }


@dataclass
class RobustnessReport:
    """Rows are perturbation kinds, columns are models."""

    models: list[str]
    kinds: list[str]
    cells: dict[tuple[str, str], RobustnessCell]  # (kind, model)
    edit_counts: dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {
            "models": self.models,
            "kinds": self.kinds,
            "edit_counts": self.edit_counts,
            "cells": {
                f"{kind}|{model}": cell.as_dict()
                for (kind, model), cell in sorted(self.cells.items())
            },
        }

    def write_csv(self, path: str | Path) -> None:
        import csv

        from .storage import atomic_write

        with atomic_write(path) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["kind"]
            for model in self.models:
                header += [f"{model}_delta_mrr_pct", f"{model}_delta_hits10_pct"]
            writer.writerow(header)
            for kind in self.kinds:
                row: list[str] = [kind]
                for model in self.models:
                    cell = self.cells[(kind, model)]
                    row += [
                        format(cell.delta_mrr_pct, ".17g"),
                        format(cell.delta_hits10_pct, ".17g"),
                    ]
                writer.writerow(row)


def robustness_experiment(
    models: Sequence[str],
    kg: KnowledgeGraph,
    specs: Sequence[PerturbationSpec],
    train_config: TrainConfig,
    seeds: Sequence[int] = (0,),
) -> RobustnessReport:
    """Train each model on the clean and each perturbed graph, evaluate on
    the untouched test split, and average over seeds.

    The perturbed graphs are generated once per spec and shared across
    models and seeds; per-run training seeds are derived from the config
    seed, the model and the condition so runs are independent but
    reproducible.
    """
    if not models:
        raise ValueError("need at least one model kind")
    conditions: list[tuple[str, KnowledgeGraph]] = [("base", kg)]
    edit_counts: dict[str, int] = {}
    for spec in specs:
        graph, edits = perturbed_graph(kg, spec)
        conditions.append((spec.kind.value, graph))
        edit_counts[spec.kind.value] = len(edits)

    metrics: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for model_kind in models:
        for cond_idx, (label, graph) in enumerate(conditions):
            for seed in seeds:
                run_seed = int(
                    derive_seed(
                        train_config.seed, _stable_label(model_kind), cond_idx, seed
                    ).integers(0, 2**31 - 1)
                )
                cfg = replace(train_config, seed=run_seed)
                run_graph, run_sig = prepare_training_graph(cfg, graph)
                model, _ = train(
                    cfg, run_graph, signatures=run_sig, model_kind=model_kind
                )
                report = evaluate(model, run_graph, "test", workers=cfg.workers)
                metrics.setdefault((label, model_kind), []).append(
                    (report.mrr, report.hits[10])
                )
                log.info(
                    "robustness %s/%s seed %d: mrr=%.4f hits10=%.4f",
                    model_kind,
                    label,
                    seed,
                    report.mrr,
                    report.hits[10],
                )

    cells: dict[tuple[str, str], RobustnessCell] = {}
    for model_kind in models:
        base_vals = np.array(metrics[("base", model_kind)])
        base_mrr = float(base_vals[:, 0].mean())
        base_h10 = float(base_vals[:, 1].mean())
        for label, _ in conditions[1:]:
            vals = np.array(metrics[(label, model_kind)])
            cells[(label, model_kind)] = RobustnessCell(
                base_mrr=base_mrr,
                base_hits10=base_h10,
                perturbed_mrr=float(vals[:, 0].mean()),
                perturbed_hits10=float(vals[:, 1].mean()),
                n_seeds=len(seeds),
            )
    return RobustnessReport(
        models=list(models),
        kinds=[label for label, _ in conditions[1:]],
        cells=cells,
        edit_counts=edit_counts,
    )
