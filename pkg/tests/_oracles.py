"""Independent reference implementations used to cross-check the package.

Everything here is written with plain Python loops and ``math`` scalar
functions, deliberately avoiding the vectorized code paths under test.
"""
from __future__ import annotations

import math

import numpy as np

from relate import KnowledgeGraph
from relate.scoring import RelateParams, ScoreModel, TypeContext


def softplus_scalar(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def oracle_modulus(params: RelateParams, h: int, r: int, t: int) -> float:
    total = 0.0
    for i in range(params.half_dim):
        w = softplus_scalar(float(params.relation_width_raw[r, i]))
        b = sigmoid_scalar(float(params.relation_bias_raw[r, i]))
        inner = float(params.entity_modulus[h, i]) * (
            float(params.relation_modulus[r, i]) + b
        ) - float(params.entity_modulus[t, i]) * (1.0 - b)
        total += w * abs(inner)
    return total


def oracle_phase(params: RelateParams, h: int, r: int, t: int) -> float:
    total = 0.0
    for i in range(params.half_dim):
        u = (
            float(params.entity_phase[h, i])
            + float(params.relation_phase[r, i])
            - float(params.entity_phase[t, i])
        ) * 0.5
        total += abs(math.sin(u))
    return total


def oracle_score(
    params: RelateParams, h: int, r: int, t: int, ctx: TypeContext | None = None
) -> float:
    score = params.gamma - (
        softplus_scalar(float(params.lambda_mod_raw[r])) * oracle_modulus(params, h, r, t)
        + softplus_scalar(float(params.lambda_phase_raw[r])) * oracle_phase(params, h, r, t)
    )
    if ctx is not None:
        head_part = 0.0
        tail_part = 0.0
        for s in range(params.head_type_proto.shape[1]):
            head_part += float(ctx.signatures[h, s]) * float(params.head_type_proto[r, s])
            tail_part += float(ctx.signatures[t, s]) * float(params.tail_type_proto[r, s])
        score += ctx.warm * ctx.type_lambda * (head_part + tail_part)
    return score


def finite_difference(
    objective, tensors: dict[str, np.ndarray], step: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central differences of a zero-argument objective over every element
    of the given tensors, which the objective must read live."""
    out: dict[str, np.ndarray] = {}
    for name, tensor in tensors.items():
        grad = np.zeros_like(tensor, dtype=np.float64)
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            saved = flat[j]
            flat[j] = saved + step
            up = objective()
            flat[j] = saved - step
            down = objective()
            flat[j] = saved
            gflat[j] = (up - down) / (2.0 * step)
        out[name] = grad
    return out


def oracle_rank(
    model: ScoreModel, kg: KnowledgeGraph, direction: str, h: int, r: int, t: int
) -> float:
    """Filtered mean-tie rank via per-candidate scalar scoring.

    Head queries against a reciprocal-trained model are scored through the
    reversed relation, mirroring the query semantics under test; the filter
    stays the canonical head filter.
    """
    n = kg.n_entities
    if direction == "tail":
        scores = [model.score(h, r, e) for e in range(n)]
        gold = t
        known = set(kg.filter.tails(h, r))
    elif direction == "head":
        if kg.has_reciprocal:
            rr = r + kg.base_relation_count
            scores = [model.score(t, rr, e) for e in range(n)]
        else:
            scores = [model.score(e, r, t) for e in range(n)]
        gold = h
        known = set(kg.filter.heads(r, t))
    else:
        raise ValueError(direction)
    gold_score = scores[gold]
    greater = 0
    ties = 0
    for e in range(n):
        if e == gold or e in known:
            continue
        if scores[e] > gold_score:
            greater += 1
        elif scores[e] == gold_score:
            ties += 1
    return 1.0 + greater + 0.5 * ties
