"""Translation and rotation baselines sharing the ScoreModel surface."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scoring import ScoreModel, SparseGrads


@dataclass
class TransEParams:
    entity: np.ndarray
    relation: np.ndarray
    gamma: float
    dim: int

    def tensors(self) -> dict[str, np.ndarray]:
        return {"entity": self.entity, "relation": self.relation}

    def copy(self) -> "TransEParams":
        return TransEParams(self.entity.copy(), self.relation.copy(), self.gamma, self.dim)


def init_transe(
    n_entities: int, n_relations: int, dim: int, *, seed: int, gamma: float = 12.0
) -> TransEParams:
    if dim < 1:
        raise ValueError("dim must be positive")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    return TransEParams(
        entity=rng.uniform(-bound, bound, size=(n_entities, dim)),
        relation=rng.uniform(-bound, bound, size=(n_relations, dim)),
        gamma=float(gamma),
        dim=int(dim),
    )


class TransEModel(ScoreModel):
    """f(h, r, t) = gamma - ||h + r - t||_1."""

    kind = "transe"

    def __init__(self, params: TransEParams):
        self.params = params

    @property
    def n_entities(self) -> int:
        return self.params.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.params.relation.shape[0]

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @property
    def dim(self) -> int:
        return self.params.dim

    def tensors(self) -> dict[str, np.ndarray]:
        return self.params.tensors()

    def _diff(self, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
        p = self.params
        return p.entity[h] + p.relation[r] - p.entity[t]

    def score_triples(self, triples: np.ndarray) -> np.ndarray:
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        diff = self._diff(triples[:, 0], triples[:, 1], triples[:, 2])
        return self.gamma - np.sum(np.abs(diff), axis=-1)

    def score_tail_candidates(self, h: int, r: int) -> np.ndarray:
        p = self.params
        diff = (p.entity[h] + p.relation[r])[None, :] - p.entity
        return self.gamma - np.sum(np.abs(diff), axis=-1)

    def score_head_candidates(self, r: int, t: int) -> np.ndarray:
        p = self.params
        diff = p.entity + (p.relation[r] - p.entity[t])[None, :]
        return self.gamma - np.sum(np.abs(diff), axis=-1)

    def gradients(
        self, triples: np.ndarray, weights: np.ndarray, signs: np.ndarray
    ) -> SparseGrads:
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
        coef = (np.asarray(weights, float) * np.asarray(signs, float))[:, None]
        grads = SparseGrads()
        if triples.shape[0] == 0:
            return grads
        s = np.sign(self._diff(h, r, t))
        grads.add("entity", h, -s * coef)
        grads.add("entity", t, s * coef)
        grads.add("relation", r, -s * coef)
        return grads


@dataclass
class RotateParams:
    """Entity rows hold d/2 real parts then d/2 imaginary parts."""

    entity: np.ndarray
    relation_phase: np.ndarray
    gamma: float
    dim: int

    def tensors(self) -> dict[str, np.ndarray]:
        return {"entity": self.entity, "relation_phase": self.relation_phase}

    def copy(self) -> "RotateParams":
        return RotateParams(
            self.entity.copy(), self.relation_phase.copy(), self.gamma, self.dim
        )


def init_rotate(
    n_entities: int, n_relations: int, dim: int, *, seed: int, gamma: float = 12.0
) -> RotateParams:
    if dim < 2 or dim % 2 != 0:
        raise ValueError(f"dim must be a positive even integer, got {dim}")
    rng = np.random.default_rng(seed)
    return RotateParams(
        entity=rng.uniform(-0.5, 0.5, size=(n_entities, dim)),
        relation_phase=rng.uniform(-np.pi, np.pi, size=(n_relations, dim // 2)),
        gamma=float(gamma),
        dim=int(dim),
    )


class RotateModel(ScoreModel):
    """Relations act as coordinate-pair rotations; the score is gamma minus
    the summed Euclidean gap between the rotated head and the tail."""

    kind = "rotate"

    def __init__(self, params: RotateParams):
        self.params = params

    @property
    def n_entities(self) -> int:
        return self.params.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.params.relation_phase.shape[0]

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @property
    def dim(self) -> int:
        return self.params.dim

    @property
    def half_dim(self) -> int:
        return self.params.dim // 2

    def tensors(self) -> dict[str, np.ndarray]:
        return self.params.tensors()

    def _split(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = self.half_dim
        return rows[..., :k], rows[..., k:]

    def _pair_gaps(
        self, h: np.ndarray, r: np.ndarray, t: np.ndarray
    ) -> tuple[np.ndarray, ...]:
        p = self.params
        h_re, h_im = self._split(p.entity[h])
        t_re, t_im = self._split(p.entity[t])
        theta = p.relation_phase[r]
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        rot_re = h_re * cos_t - h_im * sin_t
        rot_im = h_re * sin_t + h_im * cos_t
        d_re = rot_re - t_re
        d_im = rot_im - t_im
        norm = np.sqrt(d_re * d_re + d_im * d_im)
        return d_re, d_im, norm, rot_re, rot_im, cos_t, sin_t

    def score_triples(self, triples: np.ndarray) -> np.ndarray:
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        norm = self._pair_gaps(triples[:, 0], triples[:, 1], triples[:, 2])[2]
        return self.gamma - np.sum(norm, axis=-1)

    def score_tail_candidates(self, h: int, r: int) -> np.ndarray:
        n = self.n_entities
        heads = np.full(n, h, dtype=np.int64)
        rels = np.full(n, r, dtype=np.int64)
        tails = np.arange(n, dtype=np.int64)
        return self.score_triples(np.stack([heads, rels, tails], axis=1))

    def score_head_candidates(self, r: int, t: int) -> np.ndarray:
        n = self.n_entities
        heads = np.arange(n, dtype=np.int64)
        rels = np.full(n, r, dtype=np.int64)
        tails = np.full(n, t, dtype=np.int64)
        return self.score_triples(np.stack([heads, rels, tails], axis=1))

    def gradients(
        self, triples: np.ndarray, weights: np.ndarray, signs: np.ndarray
    ) -> SparseGrads:
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
        coef = (np.asarray(weights, float) * np.asarray(signs, float))[:, None]
        grads = SparseGrads()
        if triples.shape[0] == 0:
            return grads
        d_re, d_im, norm, rot_re, rot_im, cos_t, sin_t = self._pair_gaps(h, r, t)
        # unit gap direction; zero-length gaps contribute zero slope
        safe = np.where(norm > 0, norm, 1.0)
        u_re = np.where(norm > 0, d_re / safe, 0.0)
        u_im = np.where(norm > 0, d_im / safe, 0.0)
        g_h_re = -(u_re * cos_t + u_im * sin_t) * coef
        g_h_im = -(-u_re * sin_t + u_im * cos_t) * coef
        g_t_re = u_re * coef
        g_t_im = u_im * coef
        grads.add("entity", h, np.concatenate([g_h_re, g_h_im], axis=-1))
        grads.add("entity", t, np.concatenate([g_t_re, g_t_im], axis=-1))
        grads.add(
            "relation_phase", r, -(u_re * (-rot_im) + u_im * rot_re) * coef
        )
        return grads
