"""Phase-modulus scoring model: parameters, scores and analytic gradients.

Each entity and relation carries a phase vector and a modulus vector of
length d/2. A triple is scored as

    f(h, r, t) = gamma - (lam_mod(r) * modulus_mismatch
                          + lam_phase(r) * phase_mismatch) [+ type bias]

where the modulus mismatch is a per-relation widened, biased L1 gap between
head and tail magnitudes and the phase mismatch is a half-angle sine gap.
Higher scores mean more plausible. Constrained quantities are stored raw:
widths through softplus, biases through sigmoid, mixing weights through
softplus, so all tensors are unconstrained for the optimizer.
"""
from __future__ import annotations

import abc
import copy
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ArrayLike = np.ndarray


def softplus(x: ArrayLike) -> np.ndarray:
    return np.logaddexp(0.0, x)


def softplus_inverse(y: ArrayLike) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError("softplus_inverse requires positive inputs")
    # log(e^y - 1) rearranged to stay finite for small and large y
    return y + np.log1p(-np.exp(-y))


def sigmoid(x: ArrayLike) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def phase_mismatch_terms(hp: np.ndarray, rp: np.ndarray, tp: np.ndarray) -> np.ndarray:
    """|sin((h + r - t) / 2)| per coordinate; shared by scoring and the
    inference-pattern checks so both see identical rounding."""
    return np.abs(np.sin((hp + rp - tp) * 0.5))


@dataclass
class RelateParams:
    """Learnable tensors plus the fixed margin gamma.

    Shapes: entity tensors (E, d/2), relation tensors (R, d/2), mixing raws
    (R,), type prototypes (R, S) with S the type-signature length.
    """

    entity_phase: np.ndarray
    entity_modulus: np.ndarray
    relation_phase: np.ndarray
    relation_modulus: np.ndarray
    relation_bias_raw: np.ndarray
    relation_width_raw: np.ndarray
    lambda_mod_raw: np.ndarray
    lambda_phase_raw: np.ndarray
    head_type_proto: np.ndarray
    tail_type_proto: np.ndarray
    gamma: float
    dim: int

    @property
    def n_entities(self) -> int:
        return self.entity_phase.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation_phase.shape[0]

    @property
    def half_dim(self) -> int:
        return self.dim // 2

    def tensors(self) -> dict[str, np.ndarray]:
        """Mutable references to every learnable tensor, in a fixed order."""
        return {
            "entity_phase": self.entity_phase,
            "entity_modulus": self.entity_modulus,
            "relation_phase": self.relation_phase,
            "relation_modulus": self.relation_modulus,
            "relation_bias_raw": self.relation_bias_raw,
            "relation_width_raw": self.relation_width_raw,
            "lambda_mod_raw": self.lambda_mod_raw,
            "lambda_phase_raw": self.lambda_phase_raw,
            "head_type_proto": self.head_type_proto,
            "tail_type_proto": self.tail_type_proto,
        }

    def copy(self) -> "RelateParams":
        return RelateParams(
            **{k: v.copy() for k, v in self.tensors().items()},
            gamma=self.gamma,
            dim=self.dim,
        )


def init_relate(
    n_entities: int,
    n_relations: int,
    dim: int,
    *,
    seed: int,
    gamma: float = 12.0,
    init_relation_width: float = 0.03,
    modulus_weight: float = 1.0,
    signature_size: int | None = None,
) -> RelateParams:
    """Deterministic initial parameters.

    Phases start uniform in [-pi, pi), moduli uniform in (0.5, 1.5), biases
    at sigmoid(0) = 0.5, widths at ``init_relation_width`` through softplus,
    the phase mixing weight at softplus 1 and the modulus mixing weight at
    softplus ``modulus_weight``. Type prototypes start at zero.
    """
    if dim < 2 or dim % 2 != 0:
        raise ValueError(f"dim must be a positive even integer, got {dim}")
    if n_entities < 1 or n_relations < 1:
        raise ValueError("need at least one entity and one relation")
    if init_relation_width <= 0:
        raise ValueError("init_relation_width must be positive")
    if modulus_weight <= 0:
        raise ValueError("modulus_weight must be positive")
    k = dim // 2
    s = 2 * n_relations if signature_size is None else signature_size
    rng = np.random.default_rng(seed)
    return RelateParams(
        entity_phase=rng.uniform(-np.pi, np.pi, size=(n_entities, k)),
        entity_modulus=rng.uniform(0.5, 1.5, size=(n_entities, k)),
        relation_phase=rng.uniform(-np.pi, np.pi, size=(n_relations, k)),
        relation_modulus=rng.uniform(0.5, 1.5, size=(n_relations, k)),
        relation_bias_raw=np.zeros((n_relations, k)),
        relation_width_raw=np.full(
            (n_relations, k), float(softplus_inverse(init_relation_width))
        ),
        lambda_mod_raw=np.full(n_relations, float(softplus_inverse(modulus_weight))),
        lambda_phase_raw=np.full(n_relations, float(softplus_inverse(1.0))),
        head_type_proto=np.zeros((n_relations, s)),
        tail_type_proto=np.zeros((n_relations, s)),
        gamma=float(gamma),
        dim=int(dim),
    )


@dataclass
class TypeContext:
    """Entity type signatures plus the schedule state of the bias term."""

    signatures: np.ndarray
    type_lambda: float
    warm: float = 1.0

    def copy(self) -> "TypeContext":
        return TypeContext(self.signatures, self.type_lambda, self.warm)


def _as_index_arrays(*idx: int | np.ndarray) -> tuple[np.ndarray, ...]:
    return tuple(np.atleast_1d(np.asarray(i, dtype=np.int64)) for i in idx)


def _modulus_parts(
    params: RelateParams, h: np.ndarray, r: np.ndarray, t: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Width, bias and signed per-coordinate gap for a batch of triples."""
    w = softplus(params.relation_width_raw[r])
    b = sigmoid(params.relation_bias_raw[r])
    inner = params.entity_modulus[h] * (params.relation_modulus[r] + b) - (
        params.entity_modulus[t] * (1.0 - b)
    )
    return w, b, inner


def modulus_score_batch(
    params: RelateParams, h: np.ndarray, r: np.ndarray, t: np.ndarray
) -> np.ndarray:
    w, _, inner = _modulus_parts(params, h, r, t)
    return np.sum(w * np.abs(inner), axis=-1)


def phase_score_batch(
    params: RelateParams, h: np.ndarray, r: np.ndarray, t: np.ndarray
) -> np.ndarray:
    terms = phase_mismatch_terms(
        params.entity_phase[h], params.relation_phase[r], params.entity_phase[t]
    )
    return np.sum(terms, axis=-1)


def type_bias_batch(
    params: RelateParams,
    h: np.ndarray,
    r: np.ndarray,
    t: np.ndarray,
    ctx: TypeContext,
) -> np.ndarray:
    sig = ctx.signatures
    head_part = np.einsum("ns,ns->n", sig[h], params.head_type_proto[r])
    tail_part = np.einsum("ns,ns->n", sig[t], params.tail_type_proto[r])
    return ctx.warm * ctx.type_lambda * (head_part + tail_part)


def relate_score_batch(
    params: RelateParams,
    h: np.ndarray,
    r: np.ndarray,
    t: np.ndarray,
    type_ctx: TypeContext | None = None,
) -> np.ndarray:
    lam_mod = softplus(params.lambda_mod_raw[r])
    lam_phase = softplus(params.lambda_phase_raw[r])
    score = params.gamma - (
        lam_mod * modulus_score_batch(params, h, r, t)
        + lam_phase * phase_score_batch(params, h, r, t)
    )
    if type_ctx is not None:
        score = score + type_bias_batch(params, h, r, t, type_ctx)
    return score


def modulus_score(params: RelateParams, h: int, r: int, t: int) -> float:
    ha, ra, ta = _as_index_arrays(h, r, t)
    return float(modulus_score_batch(params, ha, ra, ta)[0])


def phase_score(params: RelateParams, h: int, r: int, t: int) -> float:
    ha, ra, ta = _as_index_arrays(h, r, t)
    return float(phase_score_batch(params, ha, ra, ta)[0])


def relate_score(
    params: RelateParams, h: int, r: int, t: int, type_ctx: TypeContext | None = None
) -> float:
    ha, ra, ta = _as_index_arrays(h, r, t)
    return float(relate_score_batch(params, ha, ra, ta, type_ctx)[0])


class SparseGrads:
    """Row-sparse gradients per named tensor.

    Each tensor maps to a sorted unique row-index array and a matching block
    of per-row gradients. Accumulators built independently over disjoint or
    overlapping batches can be merged; merge order only perturbs values at
    floating point reassociation level.
    """

    def __init__(self) -> None:
        self._pending: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
        self._data: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def add(self, name: str, rows: np.ndarray, grads: np.ndarray) -> None:
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        grads = np.asarray(grads, dtype=np.float64)
        if grads.shape[0] != rows.shape[0]:
            raise ValueError("row index and gradient block length mismatch")
        self._pending.setdefault(name, []).append((rows, grads))

    def _compact(self, name: str) -> None:
        pieces = self._pending.pop(name, [])
        if not pieces:
            return
        if name in self._data:
            pieces.insert(0, self._data[name])
        rows = np.concatenate([p[0] for p in pieces])
        grads = np.concatenate([p[1] for p in pieces])
        uniq, inverse = np.unique(rows, return_inverse=True)
        summed = np.zeros((uniq.shape[0],) + grads.shape[1:], dtype=np.float64)
        np.add.at(summed, inverse, grads)
        self._data[name] = (uniq, summed)

    def items(self) -> Iterable[tuple[str, np.ndarray, np.ndarray]]:
        for name in list(self._pending):
            self._compact(name)
        for name, (rows, grads) in sorted(self._data.items()):
            yield name, rows, grads

    def get(self, name: str) -> tuple[np.ndarray, np.ndarray] | None:
        self._compact(name)
        return self._data.get(name)

    def merge(self, other: "SparseGrads") -> "SparseGrads":
        for name, rows, grads in other.items():
            self.add(name, rows, grads)
        return self

    def scale(self, factor: float) -> "SparseGrads":
        for name, _, grads in self.items():
            grads *= factor
        return self

    def global_norm(self) -> float:
        total = 0.0
        for _, _, grads in self.items():
            total += float(np.sum(grads * grads))
        return float(np.sqrt(total))

    def dense(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        """Dense view of one tensor's gradient; intended for tests."""
        out = np.zeros(shape, dtype=np.float64)
        entry = self.get(name)
        if entry is not None:
            rows, grads = entry
            out[rows] = grads
        return out


WeightedTriple = tuple[Sequence[int], float, float]


def relate_grad_arrays(
    params: RelateParams,
    triples: np.ndarray,
    weights: np.ndarray,
    signs: np.ndarray,
    type_ctx: TypeContext | None = None,
) -> SparseGrads:
    """Gradient of sum_i weights_i * signs_i * f(h_i, r_i, t_i).

    Kink conventions: the absolute value contributes zero slope exactly at
    zero, and so does |sin| at its zeros.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    coef = (np.asarray(weights, dtype=np.float64) * np.asarray(signs, dtype=np.float64))[
        :, None
    ]

    grads = SparseGrads()
    if triples.shape[0] == 0:
        return grads

    w, b, inner = _modulus_parts(params, h, r, t)
    sgn_inner = np.sign(inner)
    lam_mod = softplus(params.lambda_mod_raw[r])[:, None]
    lam_phase = softplus(params.lambda_phase_raw[r])[:, None]
    hm = params.entity_modulus[h]
    tm = params.entity_modulus[t]
    rm = params.relation_modulus[r]

    mod_core = lam_mod * w * sgn_inner
    grads.add("entity_modulus", h, -mod_core * (rm + b) * coef)
    grads.add("entity_modulus", t, mod_core * (1.0 - b) * coef)
    grads.add("relation_modulus", r, -mod_core * hm * coef)
    grads.add(
        "relation_bias_raw", r, -mod_core * (hm + tm) * (b * (1.0 - b)) * coef
    )
    grads.add(
        "relation_width_raw",
        r,
        -lam_mod * np.abs(inner) * sigmoid(params.relation_width_raw[r]) * coef,
    )

    u = (params.entity_phase[h] + params.relation_phase[r] - params.entity_phase[t]) * 0.5
    phase_core = 0.5 * lam_phase * np.sign(np.sin(u)) * np.cos(u)
    grads.add("entity_phase", h, -phase_core * coef)
    grads.add("relation_phase", r, -phase_core * coef)
    grads.add("entity_phase", t, phase_core * coef)

    mod_total = np.sum(w * np.abs(inner), axis=-1)
    phase_total = np.sum(np.abs(np.sin(u)), axis=-1)
    coef1 = coef[:, 0]
    grads.add(
        "lambda_mod_raw", r, -mod_total * sigmoid(params.lambda_mod_raw[r]) * coef1
    )
    grads.add(
        "lambda_phase_raw",
        r,
        -phase_total * sigmoid(params.lambda_phase_raw[r]) * coef1,
    )

    if type_ctx is not None:
        gate = type_ctx.warm * type_ctx.type_lambda
        grads.add("head_type_proto", r, gate * type_ctx.signatures[h] * coef)
        grads.add("tail_type_proto", r, gate * type_ctx.signatures[t] * coef)
    return grads


def relate_grad(
    params: RelateParams,
    weighted_triples: Iterable[WeightedTriple],
    type_ctx: TypeContext | None = None,
) -> SparseGrads:
    """List-of-(triple, weight, sign) front end over relate_grad_arrays."""
    entries = list(weighted_triples)
    if not entries:
        return SparseGrads()
    triples = np.array([e[0] for e in entries], dtype=np.int64)
    weights = np.array([e[1] for e in entries], dtype=np.float64)
    signs = np.array([e[2] for e in entries], dtype=np.float64)
    return relate_grad_arrays(params, triples, weights, signs, type_ctx)


class ScoreModel(abc.ABC):
    """Uniform surface over scoring models: plausibility scores, candidate
    sweeps and row-sparse gradients with a (triples, weights, signs) calling
    convention. Higher scores always mean more plausible."""

    kind: str = ""

    @property
    @abc.abstractmethod
    def n_entities(self) -> int: ...

    @property
    @abc.abstractmethod
    def n_relations(self) -> int: ...

    @property
    @abc.abstractmethod
    def gamma(self) -> float: ...

    @property
    @abc.abstractmethod
    def dim(self) -> int: ...

    @abc.abstractmethod
    def tensors(self) -> dict[str, np.ndarray]: ...

    @abc.abstractmethod
    def score_triples(self, triples: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def score_tail_candidates(self, h: int, r: int) -> np.ndarray: ...

    @abc.abstractmethod
    def score_head_candidates(self, r: int, t: int) -> np.ndarray: ...

    @abc.abstractmethod
    def gradients(
        self, triples: np.ndarray, weights: np.ndarray, signs: np.ndarray
    ) -> SparseGrads: ...

    def score(self, h: int, r: int, t: int) -> float:
        return float(self.score_triples(np.array([[h, r, t]], dtype=np.int64))[0])

    def copy(self) -> "ScoreModel":
        return copy.deepcopy(self)


class RelateModel(ScoreModel):
    """Phase-modulus model over a fixed entity/relation space, optionally
    carrying a type context that adds the prototype bias to every score."""

    kind = "relate"

    def __init__(self, params: RelateParams, type_context: TypeContext | None = None):
        self.params = params
        self.type_context = type_context

    @property
    def n_entities(self) -> int:
        return self.params.n_entities

    @property
    def n_relations(self) -> int:
        return self.params.n_relations

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @property
    def dim(self) -> int:
        return self.params.dim

    def tensors(self) -> dict[str, np.ndarray]:
        return self.params.tensors()

    def score_triples(self, triples: np.ndarray) -> np.ndarray:
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        return relate_score_batch(
            self.params, triples[:, 0], triples[:, 1], triples[:, 2], self.type_context
        )

    def score_tail_candidates(self, h: int, r: int) -> np.ndarray:
        n = self.n_entities
        heads = np.full(n, h, dtype=np.int64)
        rels = np.full(n, r, dtype=np.int64)
        tails = np.arange(n, dtype=np.int64)
        return relate_score_batch(self.params, heads, rels, tails, self.type_context)

    def score_head_candidates(self, r: int, t: int) -> np.ndarray:
        n = self.n_entities
        heads = np.arange(n, dtype=np.int64)
        rels = np.full(n, r, dtype=np.int64)
        tails = np.full(n, t, dtype=np.int64)
        return relate_score_batch(self.params, heads, rels, tails, self.type_context)

    def gradients(
        self, triples: np.ndarray, weights: np.ndarray, signs: np.ndarray
    ) -> SparseGrads:
        return relate_grad_arrays(self.params, triples, weights, signs, self.type_context)
