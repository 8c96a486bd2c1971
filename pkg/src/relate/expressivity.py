"""Mechanical check of the constructive full-expressivity procedure.

Given an arbitrary truth assignment over all |R| x |E| x |E| triples, the
procedure claims a parameter setting whose scores strictly exceed gamma on
every true triple and fall strictly below zero on every false one. It works
on the raw modulus score with unconstrained widths and biases, one
dedicated dimension per (relation, tail) pair and all phases at zero, and
falsifies each false triple by a four-step local surgery:

  1. raise the tail entity's modulus at the dedicated dimension,
  2. lower every other entity's modulus there,
  3. raise the triple's relation width and bias there,
  4. raise every other relation's width there.

The verifier recomputes the exhaustive score table and never trusts the
construction: certificates record both the parameters and the table, and a
certificate is valid only if every score lands on the right side of its
threshold. Invalid certificates enumerate the offending triples.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

# Uniform starting point chosen so every triple begins strictly true:
# inner gap = 1*(2+0) - 1*(1-0) = 1 per dimension, width -1, so each of the
# m dimensions contributes -1 and every score starts at gamma + m.
BASE_ENTITY_MODULUS = 1.0
BASE_RELATION_MODULUS = 2.0
BASE_RELATION_BIAS = 0.0
BASE_RELATION_WIDTH = -1.0

_MIN_WIDTH_FLOOR = 1e-9


@dataclass
class TruthTable:
    """Boolean assignment over every (h, r, t) combination."""

    n_entities: int
    n_relations: int
    assignment: np.ndarray  # bool, shape (R, E, E), [r, h, t]

    def __post_init__(self) -> None:
        expected = (self.n_relations, self.n_entities, self.n_entities)
        self.assignment = np.asarray(self.assignment, dtype=bool)
        if self.assignment.shape != expected:
            raise ValueError(
                f"assignment shape {self.assignment.shape} != {expected}"
            )

    @classmethod
    def random(
        cls, n_entities: int, n_relations: int, rng: np.random.Generator
    ) -> "TruthTable":
        return cls(
            n_entities,
            n_relations,
            rng.random((n_relations, n_entities, n_entities)) < 0.5,
        )

    @classmethod
    def all_true(cls, n_entities: int, n_relations: int) -> "TruthTable":
        return cls(
            n_entities,
            n_relations,
            np.ones((n_relations, n_entities, n_entities), dtype=bool),
        )

    def false_triples(self) -> list[tuple[int, int, int]]:
        """False (h, r, t) in deterministic (r, h, t) lexicographic order."""
        r_idx, h_idx, t_idx = np.nonzero(~self.assignment)
        return [(int(h), int(r), int(t)) for r, h, t in zip(r_idx, h_idx, t_idx)]


@dataclass
class TableParams:
    """Unconstrained modulus-only parameters used by the construction.

    One dimension per (relation, tail) pair: index r * |E| + t, padded by
    one unused dimension when that count is odd to keep the paired layout.
    Phases exist but stay at zero and mixing weights are fixed at one.
    """

    entity_modulus: np.ndarray  # (E, m)
    entity_phase: np.ndarray  # (E, m)
    relation_modulus: np.ndarray  # (R, m)
    relation_phase: np.ndarray  # (R, m)
    relation_bias: np.ndarray  # (R, m)
    relation_width: np.ndarray  # (R, m)
    gamma: float

    @property
    def n_entities(self) -> int:
        return self.entity_modulus.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation_modulus.shape[0]

    @property
    def n_dims(self) -> int:
        return self.entity_modulus.shape[1]

    @classmethod
    def uniform_base(
        cls, n_entities: int, n_relations: int, gamma: float
    ) -> "TableParams":
        m = n_entities * n_relations
        if m % 2 != 0:
            m += 1  # unused padding dimension to keep phase/modulus pairing
        return cls(
            entity_modulus=np.full((n_entities, m), BASE_ENTITY_MODULUS),
            entity_phase=np.zeros((n_entities, m)),
            relation_modulus=np.full((n_relations, m), BASE_RELATION_MODULUS),
            relation_phase=np.zeros((n_relations, m)),
            relation_bias=np.full((n_relations, m), BASE_RELATION_BIAS),
            relation_width=np.full((n_relations, m), BASE_RELATION_WIDTH),
            gamma=float(gamma),
        )

    def score(self, h: int, r: int, t: int) -> float:
        inner = self.entity_modulus[h] * (
            self.relation_modulus[r] + self.relation_bias[r]
        ) - self.entity_modulus[t] * (1.0 - self.relation_bias[r])
        mod = float(np.sum(self.relation_width[r] * np.abs(inner)))
        u = (self.entity_phase[h] + self.relation_phase[r] - self.entity_phase[t]) * 0.5
        phase = float(np.sum(np.abs(np.sin(u))))
        return self.gamma - (mod + phase)

    def score_table(self) -> np.ndarray:
        out = np.empty((self.n_relations, self.n_entities, self.n_entities))
        for r in range(self.n_relations):
            for h in range(self.n_entities):
                for t in range(self.n_entities):
                    out[r, h, t] = self.score(h, r, t)
        return out

    def as_dict(self) -> dict[str, Any]:
        return {
            "entity_modulus": self.entity_modulus.tolist(),
            "entity_phase": self.entity_phase.tolist(),
            "relation_modulus": self.relation_modulus.tolist(),
            "relation_phase": self.relation_phase.tolist(),
            "relation_bias": self.relation_bias.tolist(),
            "relation_width": self.relation_width.tolist(),
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "TableParams":
        return cls(
            entity_modulus=np.array(payload["entity_modulus"], dtype=np.float64),
            entity_phase=np.array(payload["entity_phase"], dtype=np.float64),
            relation_modulus=np.array(payload["relation_modulus"], dtype=np.float64),
            relation_phase=np.array(payload["relation_phase"], dtype=np.float64),
            relation_bias=np.array(payload["relation_bias"], dtype=np.float64),
            relation_width=np.array(payload["relation_width"], dtype=np.float64),
            gamma=float(payload["gamma"]),
        )


@dataclass
class SurgeryStep:
    triple: tuple[int, int, int]
    dimension: int
    constant: float


@dataclass
class SeparationCertificate:
    """Construction output plus the exhaustive verification verdict."""

    truth: TruthTable
    params: TableParams
    score_table: np.ndarray
    min_true_score: float
    max_false_score: float
    valid: bool
    offending: list[dict[str, Any]]
    surgeries: list[SurgeryStep] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        return {
            "n_entities": self.truth.n_entities,
            "n_relations": self.truth.n_relations,
            "assignment": self.truth.assignment.tolist(),
            "params": self.params.as_dict(),
            "score_table": self.score_table.tolist(),
            "min_true_score": self.min_true_score,
            "max_false_score": self.max_false_score,
            "valid": self.valid,
            "offending": self.offending,
            "surgeries": [
                {
                    "triple": list(s.triple),
                    "dimension": s.dimension,
                    "constant": s.constant,
                }
                for s in self.surgeries
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SeparationCertificate":
        payload = json.loads(text)
        truth = TruthTable(
            payload["n_entities"],
            payload["n_relations"],
            np.array(payload["assignment"], dtype=bool),
        )
        return cls(
            truth=truth,
            params=TableParams.from_dict(payload["params"]),
            score_table=np.array(payload["score_table"], dtype=np.float64),
            min_true_score=float(payload["min_true_score"]),
            max_false_score=float(payload["max_false_score"]),
            valid=bool(payload["valid"]),
            offending=payload["offending"],
            surgeries=[
                SurgeryStep(tuple(s["triple"]), s["dimension"], s["constant"])
                for s in payload["surgeries"]
            ],
        )


def _verdict(
    truth: TruthTable, table: np.ndarray, gamma: float
) -> tuple[float, float, bool, list[dict[str, Any]]]:
    truth_mask = truth.assignment
    true_scores = table[truth_mask]
    false_scores = table[~truth_mask]
    min_true = float(true_scores.min()) if true_scores.size else float("inf")
    max_false = float(false_scores.max()) if false_scores.size else float("-inf")
    valid = bool(min_true > gamma and max_false < 0.0)
    offending: list[dict[str, Any]] = []
    if not valid:
        for r in range(truth.n_relations):
            for h in range(truth.n_entities):
                for t in range(truth.n_entities):
                    score = float(table[r, h, t])
                    if truth_mask[r, h, t] and score <= gamma:
                        offending.append(
                            {
                                "h": h,
                                "r": r,
                                "t": t,
                                "score": score,
                                "expected": f"> {gamma} (true triple)",
                            }
                        )
                    elif not truth_mask[r, h, t] and score >= 0.0:
                        offending.append(
                            {
                                "h": h,
                                "r": r,
                                "t": t,
                                "score": score,
                                "expected": "< 0 (false triple)",
                            }
                        )
    return min_true, max_false, valid, offending


def construct_expressive_embedding(
    truth: TruthTable,
    gamma: float = 12.0,
    adjustment: float | None = None,
) -> SeparationCertificate:
    """Run the four-step falsification surgery for every false triple, then
    verify exhaustively.

    The per-surgery constant defaults to
    (current score - 0) / (minimal affected width magnitude) + gamma + 1,
    floored at zero score so the constant stays positive; ``adjustment``
    overrides it. The verifier decides validity; nothing is patched when
    scores land on the wrong side.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    params = TableParams.uniform_base(truth.n_entities, truth.n_relations, gamma)
    surgeries: list[SurgeryStep] = []
    n_entities = truth.n_entities

    for h, r, t in truth.false_triples():
        dim = r * n_entities + t
        if adjustment is None:
            current = params.score(h, r, t)
            min_width = max(
                float(np.min(np.abs(params.relation_width[:, dim]))),
                _MIN_WIDTH_FLOOR,
            )
            constant = max(current, 0.0) / min_width + gamma + 1.0
        else:
            constant = float(adjustment)
        # step 1: raise the tail's modulus at the dedicated dimension
        params.entity_modulus[t, dim] += constant
        # step 2: lower every other entity's modulus there
        others = np.arange(n_entities) != t
        params.entity_modulus[others, dim] -= constant
        # step 3: raise this relation's width and bias there
        params.relation_width[r, dim] += constant
        params.relation_bias[r, dim] += constant
        # step 4: raise every other relation's width there
        other_rels = np.arange(truth.n_relations) != r
        params.relation_width[other_rels, dim] += constant
        surgeries.append(SurgeryStep((h, r, t), dim, constant))

    table = params.score_table()
    min_true, max_false, valid, offending = _verdict(truth, table, gamma)
    return SeparationCertificate(
        truth=truth,
        params=params,
        score_table=table,
        min_true_score=min_true,
        max_false_score=max_false,
        valid=valid,
        offending=offending,
        surgeries=surgeries,
    )


def verify_certificate(cert: SeparationCertificate, tolerance: float = 1e-9) -> bool:
    """Re-verify from stored parameters alone.

    Recomputes the full score table, requires it to match the stored table
    within tolerance, and re-derives the verdict. Returns the re-derived
    validity; raises if the stored table disagrees with the parameters.
    """
    table = cert.params.score_table()
    if not np.allclose(table, cert.score_table, rtol=0.0, atol=tolerance):
        raise ValueError("stored score table does not match stored parameters")
    _, _, valid, _ = _verdict(cert.truth, table, cert.params.gamma)
    return valid


@dataclass
class ExpressivityAudit:
    """Aggregate over many random truth tables."""

    n_tables: int
    n_valid: int
    n_entities: int
    n_relations: int
    gamma: float
    seed: int
    failures: list[dict[str, Any]] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        return {
            "n_tables": self.n_tables,
            "n_valid": self.n_valid,
            "n_entities": self.n_entities,
            "n_relations": self.n_relations,
            "gamma": self.gamma,
            "seed": self.seed,
            "failures": self.failures,
        }


def audit_random_tables(
    n_tables: int,
    n_entities: int,
    n_relations: int,
    gamma: float = 12.0,
    seed: int = 0,
    max_reported_offenders: int = 5,
) -> ExpressivityAudit:
    """Construct and verify certificates for random truth tables; invalid
    ones are summarized with a bounded sample of offending triples."""
    rng = np.random.default_rng(seed)
    n_valid = 0
    failures: list[dict[str, Any]] = []
    for table_idx in range(n_tables):
        truth = TruthTable.random(n_entities, n_relations, rng)
        cert = construct_expressive_embedding(truth, gamma)
        if cert.valid:
            n_valid += 1
        else:
            failures.append(
                {
                    "table_index": table_idx,
                    "n_false_triples": len(truth.false_triples()),
                    "min_true_score": cert.min_true_score,
                    "max_false_score": cert.max_false_score,
                    "n_offending": len(cert.offending),
                    "offending_sample": cert.offending[:max_reported_offenders],
                }
            )
    return ExpressivityAudit(
        n_tables=n_tables,
        n_valid=n_valid,
        n_entities=n_entities,
        n_relations=n_relations,
        gamma=gamma,
        seed=seed,
        failures=failures,
    )


def write_audit_json(path: str | Path, audit: ExpressivityAudit) -> None:
    from .storage import write_json

    write_json(path, audit.as_dict())
