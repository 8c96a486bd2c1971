"""Filtered link-prediction evaluation and the scoring cost benchmark.

Every test triple spawns two queries: predict the tail given (h, r, ?) and
predict the head given (?, r, t). All entities are candidates; candidates
known true from any split, other than the query's own answer, are removed
before ranking. Ties share their mean rank, so a constant scorer lands at
(|candidates| + 1) / 2 instead of 1.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .kg import KnowledgeGraph, RelationCategory, check_triples, classify_relations
from .scoring import ScoreModel

HITS_LEVELS = (1, 3, 10)


@dataclass
class RankingReport:
    """Aggregate rank statistics for one query direction (or combined)."""

    direction: str
    mr: float
    mrr: float
    hits: dict[int, float]
    n_queries: int
    by_direction: dict[str, "RankingReport"] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "direction": self.direction,
            "mr": self.mr,
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "n_queries": self.n_queries,
        }
        if self.by_direction:
            payload["by_direction"] = {
                k: v.as_dict() for k, v in sorted(self.by_direction.items())
            }
        return payload

    def format_text(self) -> str:
        lines = [
            f"{'direction':<10} {'MR':>10} {'MRR':>8} "
            + " ".join(f"H@{k:<2}" for k in sorted(self.hits))
            + f" {'queries':>8}"
        ]

        def row(rep: "RankingReport") -> str:
            hits = " ".join(f"{rep.hits[k]:.3f}" for k in sorted(rep.hits))
            return (
                f"{rep.direction:<10} {rep.mr:>10.2f} {rep.mrr:>8.4f} {hits}"
                f" {rep.n_queries:>8d}"
            )

        for rep in self.by_direction.values():
            lines.append(row(rep))
        lines.append(row(self))
        return "\n".join(lines)


def metrics_from_ranks(ranks: Sequence[float], direction: str) -> RankingReport:
    """MR, MRR and Hits@{1,3,10} from raw (possibly fractional) ranks."""
    arr = np.asarray(ranks, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot aggregate an empty rank list")
    return RankingReport(
        direction=direction,
        mr=float(arr.mean()),
        mrr=float((1.0 / arr).mean()),
        hits={k: float((arr <= k).mean()) for k in HITS_LEVELS},
        n_queries=int(arr.size),
    )


def ranked_position(
    scores: np.ndarray, true_idx: int, filter_out: Iterable[int]
) -> float:
    """Mean-tie rank of the true candidate after removing known-true others.

    ``filter_out`` holds known-true candidate indices; the true answer
    itself must be among them (it is a known-true completion) and is
    exempted rather than removed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    filter_set = set(int(i) for i in filter_out)
    if int(true_idx) not in filter_set:
        raise RuntimeError(
            "true answer missing from its own filter set; filter index and "
            "query disagree"
        )
    mask = np.ones(scores.shape[0], dtype=bool)
    if filter_set:
        mask[np.fromiter(filter_set, dtype=np.int64)] = False
    mask[true_idx] = False
    rivals = scores[mask]
    s_true = scores[true_idx]
    greater = int(np.count_nonzero(rivals > s_true))
    ties = int(np.count_nonzero(rivals == s_true))
    return 1.0 + greater + 0.5 * ties


def rank_query(
    model: ScoreModel,
    kg: KnowledgeGraph,
    direction: str,
    h: int,
    r: int,
    t: int,
) -> float:
    """Rank of one query's answer under the filtered protocol.

    ``direction`` is "tail" for (h, r, ?) with answer t, "head" for
    (?, r, t) with answer h. Head queries against a reciprocal-trained
    model are scored as tail queries of the reversed relation while the
    filter stays the canonical head filter.
    """
    if direction == "tail":
        scores = model.score_tail_candidates(h, r)
        return ranked_position(scores, t, kg.filter.tails(h, r))
    if direction == "head":
        if kg.has_reciprocal:
            scores = model.score_tail_candidates(t, r + kg.base_relation_count)
        else:
            scores = model.score_head_candidates(r, t)
        return ranked_position(scores, h, kg.filter.heads(r, t))
    raise ValueError(f"direction must be 'head' or 'tail', got {direction!r}")


def _query_ranks(
    model: ScoreModel,
    kg: KnowledgeGraph,
    triples: np.ndarray,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Tail and head rank arrays for a triple block."""

    def one(idx: int) -> tuple[float, float]:
        h, r, t = (int(x) for x in triples[idx])
        return (
            rank_query(model, kg, "tail", h, r, t),
            rank_query(model, kg, "head", h, r, t),
        )

    n = triples.shape[0]
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one, range(n)))
    else:
        pairs = [one(i) for i in range(n)]
    tail_ranks = np.array([p[0] for p in pairs])
    head_ranks = np.array([p[1] for p in pairs])
    return tail_ranks, head_ranks


def _combine(head: RankingReport, tail: RankingReport) -> RankingReport:
    n = head.n_queries + tail.n_queries
    weight_h = head.n_queries / n
    weight_t = tail.n_queries / n
    combined = RankingReport(
        direction="combined",
        mr=weight_h * head.mr + weight_t * tail.mr,
        mrr=weight_h * head.mrr + weight_t * tail.mrr,
        hits={
            k: weight_h * head.hits[k] + weight_t * tail.hits[k] for k in head.hits
        },
        n_queries=n,
    )
    combined.by_direction = {"head": head, "tail": tail}
    return combined


def evaluate(
    model: ScoreModel,
    kg: KnowledgeGraph,
    split: str | np.ndarray = "test",
    workers: int = 1,
) -> RankingReport:
    """Filtered ranking metrics over a named split or explicit triples.

    Results are independent of the worker count; workers only parallelize
    independent queries.
    """
    triples = kg.split(split) if isinstance(split, str) else check_triples(split)
    if triples.shape[0] == 0:
        raise ValueError("cannot evaluate an empty split")
    tail_ranks, head_ranks = _query_ranks(model, kg, triples, workers)
    return _combine(
        metrics_from_ranks(head_ranks, "head"),
        metrics_from_ranks(tail_ranks, "tail"),
    )


UNCATEGORIZED = "uncategorized"


@dataclass
class CategoryReport:
    """Per relation-category, per direction rank metrics."""

    table: dict[tuple[str, str], RankingReport]

    def as_dict(self) -> dict[str, Any]:
        return {
            f"{category}/{direction}": rep.as_dict()
            for (category, direction), rep in sorted(self.table.items())
        }

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for (category, direction), rep in sorted(self.table.items()):
            out.append(
                {
                    "category": category,
                    "direction": direction,
                    "mr": rep.mr,
                    "mrr": rep.mrr,
                    "hits1": rep.hits[1],
                    "hits3": rep.hits[3],
                    "hits10": rep.hits[10],
                    "n": rep.n_queries,
                }
            )
        return out


def evaluate_by_category(
    model: ScoreModel,
    kg: KnowledgeGraph,
    split: str | np.ndarray = "test",
    categories: dict[int, RelationCategory] | None = None,
    workers: int = 1,
) -> CategoryReport:
    """Bucket queries by the training-graph category of their relation.

    Relations unseen in training fall into an "uncategorized" bucket.
    Categories refer to base relations even under reciprocal training.
    """
    triples = kg.split(split) if isinstance(split, str) else check_triples(split)
    if triples.shape[0] == 0:
        raise ValueError("cannot evaluate an empty split")
    if categories is None:
        base_train = kg.train[kg.train[:, 1] < kg.base_relation_count]
        categories = classify_relations(base_train)
    tail_ranks, head_ranks = _query_ranks(model, kg, triples, workers)
    labels = [
        categories[r].kind.value if r in categories else UNCATEGORIZED
        for r in triples[:, 1].tolist()
    ]
    table: dict[tuple[str, str], RankingReport] = {}
    for label in sorted(set(labels)):
        pick = np.array([lab == label for lab in labels])
        table[(label, "head")] = metrics_from_ranks(head_ranks[pick], "head")
        table[(label, "tail")] = metrics_from_ranks(tail_ranks[pick], "tail")
    return CategoryReport(table)


def write_category_csv(path: str | Path, report: CategoryReport) -> None:
    import csv

    from .storage import atomic_write

    with atomic_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["category", "direction", "mr", "mrr", "hits1", "hits3", "hits10", "n"])
        for row in report.rows():
            writer.writerow(
                [
                    row["category"],
                    row["direction"],
                    format(row["mr"], ".17g"),
                    format(row["mrr"], ".17g"),
                    format(row["hits1"], ".17g"),
                    format(row["hits3"], ".17g"),
                    format(row["hits10"], ".17g"),
                    row["n"],
                ]
            )


@dataclass
class EfficiencyPoint:
    dim: int
    seconds_per_batch: float
    seconds_per_triple: float


@dataclass
class EfficiencyReport:
    """Scoring cost versus dimension with a least squares linear fit."""

    points: list[EfficiencyPoint]
    n_triples: int
    repetitions: int
    slope: float
    intercept: float
    r_squared: float

    def as_dict(self) -> dict[str, Any]:
        return {
            "points": [
                {
                    "dim": p.dim,
                    "seconds_per_batch": p.seconds_per_batch,
                    "seconds_per_triple": p.seconds_per_triple,
                }
                for p in self.points
            ],
            "n_triples": self.n_triples,
            "repetitions": self.repetitions,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
        }


def bench_scaling(
    model_factory: Callable[[int], ScoreModel],
    dims: Sequence[int],
    n_triples: int = 5000,
    repetitions: int = 5,
    seed: int = 0,
) -> EfficiencyReport:
    """Time batched scoring per dimension and fit time against dimension.

    Uses a monotonic clock, discards one warmup repetition and keeps the
    minimum over repetitions as the representative time per dimension.
    """
    dims = sorted(set(int(d) for d in dims))
    if len(dims) < 2:
        raise ValueError("need at least 2 distinct dims for a scaling fit")
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    rng = np.random.default_rng(seed)
    points: list[EfficiencyPoint] = []
    for d in dims:
        model = model_factory(d)
        triples = np.stack(
            [
                rng.integers(0, model.n_entities, size=n_triples),
                rng.integers(0, model.n_relations, size=n_triples),
                rng.integers(0, model.n_entities, size=n_triples),
            ],
            axis=1,
        ).astype(np.int64)
        model.score_triples(triples)  # warmup, discarded
        best = np.inf
        for _ in range(repetitions):
            t0 = time.perf_counter()
            model.score_triples(triples)
            best = min(best, time.perf_counter() - t0)
        points.append(EfficiencyPoint(d, best, best / n_triples))
    x = np.array([p.dim for p in points], dtype=np.float64)
    y = np.array([p.seconds_per_batch for p in points], dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return EfficiencyReport(
        points=points,
        n_triples=n_triples,
        repetitions=repetitions,
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r_squared),
    )
