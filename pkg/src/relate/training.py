"""Margin-ranking training with self-adversarial negatives.

The loop optimizes mean hinge loss over uniformly drawn positive batches,
weighting each negative by a stop-gradient softmax of its own score, plus a
cubic magnitude penalty over every learnable tensor and, when a type
context is active, a warmup-gated type compatibility bias inside the score.
Updates flow through a row-sparse Adam: only rows touched by the step move,
and moment state of untouched rows is frozen by construction.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .kg import KnowledgeGraph, augment_reciprocal, infer_type_signatures
from .scoring import RelateModel, ScoreModel, SparseGrads, TypeContext, init_relate
from .storage import build_model

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """A training configuration that cannot be accepted."""


class SamplingError(ValueError):
    """Negative sampling is impossible for this entity space."""


class TrainingAbort(RuntimeError):
    """Training hit a non-finite loss; message carries step diagnostics."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class TrainConfig:
    """All knobs of one training run.

    ``loss_margin`` of None reuses ``margin``; ``warmup_steps`` of None
    resolves to one tenth of ``max_steps``. ``negative_side`` is API-only
    and not accepted from config files.
    """

    dim: int = 64
    lr: float = 0.05
    margin: float = 6.0
    loss_margin: float | None = None
    adv_temperature: float = 1.0
    neg_samples: int = 16
    batch_size: int = 256
    max_steps: int = 2000
    valid_interval: int = 200
    patience: int = 10
    l3_weight: float = 1e-5
    type_lambda: float = 0.05
    warmup_steps: int | None = None
    init_relation_width: float = 0.03
    modulus_weight: float = 1.0
    seed: int = 0
    reciprocal: bool = False
    filter_negatives: bool = False
    clip_norm: float = 10.0
    workers: int = 1
    negative_side: str = "both"

    def validate(self) -> "TrainConfig":
        if self.dim < 2 or self.dim % 2 != 0:
            raise ConfigError(f"dim must be a positive even integer, got {self.dim}")
        positive = {
            "lr": self.lr,
            "margin": self.margin,
            "init_relation_width": self.init_relation_width,
            "modulus_weight": self.modulus_weight,
        }
        for key, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{key} must be positive, got {value}")
        at_least_one = {
            "neg_samples": self.neg_samples,
            "batch_size": self.batch_size,
            "valid_interval": self.valid_interval,
            "patience": self.patience,
            "workers": self.workers,
        }
        for key, value in at_least_one.items():
            if value < 1:
                raise ConfigError(f"{key} must be at least 1, got {value}")
        non_negative = {
            "adv_temperature": self.adv_temperature,
            "l3_weight": self.l3_weight,
            "type_lambda": self.type_lambda,
            "max_steps": self.max_steps,
        }
        for key, value in non_negative.items():
            if value < 0:
                raise ConfigError(f"{key} must be non-negative, got {value}")
        if self.loss_margin is not None and self.loss_margin < 0:
            raise ConfigError(f"loss_margin must be non-negative, got {self.loss_margin}")
        if self.warmup_steps is not None and self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps must be non-negative, got {self.warmup_steps}")
        if not (self.clip_norm > 0):
            raise ConfigError(f"clip_norm must be positive (inf disables), got {self.clip_norm}")
        if self.negative_side not in ("both", "head", "tail"):
            raise ConfigError(f"negative_side must be both/head/tail, got {self.negative_side!r}")
        return self

    @property
    def effective_loss_margin(self) -> float:
        return self.margin if self.loss_margin is None else self.loss_margin

    @property
    def effective_warmup_steps(self) -> int:
        return self.max_steps // 10 if self.warmup_steps is None else self.warmup_steps


_CONFIG_PARSERS: dict[str, Callable[[str], Any]] = {
    "dim": int,
    "lr": float,
    "margin": float,
    "loss_margin": float,
    "adv_temperature": float,
    "neg_samples": int,
    "batch_size": int,
    "max_steps": int,
    "valid_interval": int,
    "patience": int,
    "l3_weight": float,
    "type_lambda": float,
    "warmup_steps": int,
    "init_relation_width": float,
    "modulus_weight": float,
    "seed": int,
    "reciprocal": _parse_bool,
    "filter_negatives": _parse_bool,
    "clip_norm": float,
    "workers": int,
}


def load_config(path: str | Path) -> TrainConfig:
    """Parse a flat key=value file; '#' comments and blank lines allowed.

    Unknown keys, repeated keys and malformed values are rejected with the
    offending key and line number. An empty file yields all defaults.
    """
    path = Path(path)
    values: dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key not in _CONFIG_PARSERS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}")
            try:
                values[key] = _CONFIG_PARSERS[key](text)
            except ValueError as exc:
                raise ConfigError(
                    f"{path}:{lineno}: bad value for {key!r}: {exc}"
                ) from None
    return TrainConfig(**values).validate()


def write_config(path: str | Path, config: TrainConfig) -> None:
    """Echo a resolved configuration back out as key=value lines."""
    from .storage import atomic_write

    with atomic_write(path) as fh:
        for f in fields(config):
            if f.name == "negative_side":
                continue
            value = getattr(config, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            fh.write(f"{f.name}={value}\n")


def derive_seed(base_seed: int, *labels: int) -> np.random.Generator:
    """All randomness flows from one base seed; purposes get fixed slots."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), *map(int, labels)]))


# fixed purpose slots for derive_seed; logged once per run
SEED_SLOT_INIT = 0
SEED_SLOT_BATCH = 1
SEED_SLOT_NEGATIVE = 2
SEED_SLOT_VALID_SUBSAMPLE = 3


def sample_negatives(
    batch: np.ndarray,
    n_negatives: int,
    n_entities: int,
    rng: np.random.Generator,
    side: str = "both",
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt head or tail with a uniform entity different from the original.

    Returns (replacement entities, corrupt-tail mask), both (B, K). Sampling
    is unfiltered: a corruption may coincide with a different true triple.
    """
    if n_entities < 2:
        raise SamplingError("need at least 2 entities to sample negatives")
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    b = batch.shape[0]
    if side == "both":
        corrupt_tail = rng.integers(0, 2, size=(b, n_negatives)).astype(bool)
    elif side == "tail":
        corrupt_tail = np.ones((b, n_negatives), dtype=bool)
    elif side == "head":
        corrupt_tail = np.zeros((b, n_negatives), dtype=bool)
    else:
        raise SamplingError(f"unknown corruption side {side!r}")
    original = np.where(corrupt_tail, batch[:, 2:3], batch[:, 0:1])
    draws = rng.integers(0, n_entities - 1, size=(b, n_negatives))
    draws += draws >= original
    return draws, corrupt_tail


def build_negative_triples(
    batch: np.ndarray, neg_entities: np.ndarray, corrupt_tail: np.ndarray
) -> np.ndarray:
    """(B, K, 3) corrupted triples from a batch and sampling output."""
    b, k = neg_entities.shape
    out = np.repeat(np.asarray(batch, dtype=np.int64)[:, None, :], k, axis=1).copy()
    heads = np.where(corrupt_tail, out[:, :, 0], neg_entities)
    tails = np.where(corrupt_tail, neg_entities, out[:, :, 2])
    out[:, :, 0] = heads
    out[:, :, 2] = tails
    return out


def adversarial_weights(neg_scores: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise softmax of temperature-scaled scores; temperature 0 gives
    uniform weights. Treated as constants by the gradient."""
    scaled = temperature * np.asarray(neg_scores, dtype=np.float64)
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    exp = np.exp(scaled)
    return exp / exp.sum(axis=-1, keepdims=True)


def margin_loss(
    f_pos: float | np.ndarray,
    f_neg: np.ndarray,
    weights: np.ndarray,
    margin: float,
) -> float | np.ndarray:
    """Weighted hinge: sum_j w_j * max(0, f_neg_j - f_pos + margin)."""
    f_neg = np.asarray(f_neg, dtype=np.float64)
    f_pos_arr = np.asarray(f_pos, dtype=np.float64)
    slack = f_neg - f_pos_arr[..., None] + margin
    per_pos = np.sum(np.asarray(weights) * np.maximum(slack, 0.0), axis=-1)
    return float(per_pos) if np.ndim(f_pos) == 0 else per_pos


def l3_penalty(model: ScoreModel, weight: float) -> float:
    """weight * sum of |theta|^3 over every learnable tensor entry."""
    if weight == 0.0:
        return 0.0
    total = 0.0
    for tensor in model.tensors().values():
        total += float(np.sum(np.abs(tensor) ** 3))
    return weight * total


def l3_grads(model: ScoreModel, weight: float) -> SparseGrads:
    """d/d theta of the cubic penalty: 3 * weight * sign(theta) * theta^2."""
    grads = SparseGrads()
    if weight == 0.0:
        return grads
    for name, tensor in model.tensors().items():
        g = 3.0 * weight * np.sign(tensor) * tensor * tensor
        grads.add(name, np.arange(tensor.shape[0], dtype=np.int64), g)
    return grads


def warm_factor(step: int, warmup_steps: int) -> float:
    """Linear ramp 0 -> 1 over the warmup window; 1 when no warmup."""
    if warmup_steps <= 0:
        return 1.0
    return min(1.0, step / warmup_steps)


class AdamState:
    """First/second moment estimates per tensor plus a shared step counter.

    ``apply`` touches only the rows present in the gradient; moments of all
    other rows are left untouched by construction. Bias correction uses the
    shared step counter.
    """

    def __init__(
        self,
        tensors: dict[str, np.ndarray],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}

    def apply(
        self, tensors: dict[str, np.ndarray], grads: SparseGrads, lr: float
    ) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for name, rows, g in grads.items():
            if name not in tensors:
                raise KeyError(f"gradient for unknown tensor {name!r}")
            m = self.m[name]
            v = self.v[name]
            m[rows] = self.beta1 * m[rows] + (1.0 - self.beta1) * g
            v[rows] = self.beta2 * v[rows] + (1.0 - self.beta2) * (g * g)
            m_hat = m[rows] / correction1
            v_hat = v[rows] / correction2
            tensors[name][rows] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(
    state: AdamState, tensors: dict[str, np.ndarray], grads: SparseGrads, lr: float
) -> None:
    state.apply(tensors, grads, lr)


def clip_gradients(grads: SparseGrads, clip_norm: float) -> float:
    """Scale all gradients so the global norm is at most clip_norm; returns
    the pre-clip norm."""
    norm = grads.global_norm()
    if np.isfinite(clip_norm) and norm > clip_norm and norm > 0:
        grads.scale(clip_norm / norm)
    return norm


@dataclass
class HistoryPoint:
    step: int
    loss: float
    valid_mrr: float | None
    seconds: float

    def as_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "loss": self.loss,
            "valid_mrr": self.valid_mrr,
            "seconds": self.seconds,
        }


@dataclass
class TrainHistory:
    points: list[HistoryPoint] = field(default_factory=list)
    best_step: int = 0
    best_valid_mrr: float | None = None
    stopped_early: bool = False

    def as_dicts(self) -> list[dict[str, Any]]:
        return [p.as_dict() for p in self.points]


def _filtered_resample(
    kg: KnowledgeGraph,
    batch: np.ndarray,
    neg_entities: np.ndarray,
    corrupt_tail: np.ndarray,
    rng: np.random.Generator,
    max_attempts: int = 100,
) -> np.ndarray:
    """Resample corruptions that collide with known-true triples; after the
    attempt budget a remaining collision is kept (fully saturated
    neighborhoods would otherwise loop forever)."""
    n_entities = kg.n_entities
    for _ in range(max_attempts):
        triples = build_negative_triples(batch, neg_entities, corrupt_tail)
        flat = triples.reshape(-1, 3)
        colliding = np.array(
            [kg.filter.contains(int(h), int(r), int(t)) for h, r, t in flat],
            dtype=bool,
        ).reshape(neg_entities.shape)
        if not colliding.any():
            break
        original = np.where(corrupt_tail, batch[:, 2:3], batch[:, 0:1])
        fresh = rng.integers(0, n_entities - 1, size=neg_entities.shape)
        fresh += fresh >= original
        neg_entities = np.where(colliding, fresh, neg_entities)
    return neg_entities


def _shard_gradients(
    model: ScoreModel,
    triples: np.ndarray,
    weights: np.ndarray,
    signs: np.ndarray,
    workers: int,
) -> SparseGrads:
    """Split entries across workers, accumulate independently, merge in
    shard order. Single worker takes the direct path."""
    if workers <= 1 or triples.shape[0] < 2 * workers:
        return model.gradients(triples, weights, signs)
    chunks = np.array_split(np.arange(triples.shape[0]), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(
                lambda idx: model.gradients(triples[idx], weights[idx], signs[idx]),
                chunks,
            )
        )
    merged = parts[0]
    for part in parts[1:]:
        merged.merge(part)
    return merged


def prepare_training_graph(
    config: TrainConfig, kg: KnowledgeGraph
) -> tuple[KnowledgeGraph, np.ndarray | None]:
    """Apply reciprocal augmentation and derive type signatures as the
    configuration asks. Signatures live in the trained relation space."""
    if config.reciprocal and not kg.has_reciprocal:
        kg = augment_reciprocal(kg)
    signatures = None
    if config.type_lambda > 0:
        signatures = infer_type_signatures(
            kg.train, kg.valid, kg.n_entities, kg.n_relations
        )
    return kg, signatures


def train(
    config: TrainConfig,
    kg: KnowledgeGraph,
    signatures: np.ndarray | None = None,
    model: ScoreModel | None = None,
    model_kind: str = "relate",
) -> tuple[ScoreModel, TrainHistory]:
    """Run the full loop and return the best validation checkpoint.

    ``kg`` should already carry reciprocal relations if the config asks for
    them (see ``prepare_training_graph``); this function augments on the fly
    when it does not. With an empty validation split there is no early
    stopping and the final parameters are returned.
    """
    config.validate()
    if config.reciprocal and not kg.has_reciprocal:
        kg, auto_sig = prepare_training_graph(config, kg)
        if signatures is None:
            signatures = auto_sig

    if model is None:
        init_rng_seed = int(
            derive_seed(config.seed, SEED_SLOT_INIT).integers(0, 2**31 - 1)
        )
        if model_kind == "relate":
            model = RelateModel(
                init_relate(
                    kg.n_entities,
                    kg.n_relations,
                    config.dim,
                    seed=init_rng_seed,
                    gamma=config.margin,
                    init_relation_width=config.init_relation_width,
                    modulus_weight=config.modulus_weight,
                    signature_size=(
                        None if signatures is None else signatures.shape[1]
                    ),
                )
            )
        else:
            model = build_model(
                model_kind,
                kg.n_entities,
                kg.n_relations,
                config.dim,
                gamma=config.margin,
                seed=init_rng_seed,
            )
    type_ctx = None
    if (
        isinstance(model, RelateModel)
        and config.type_lambda > 0
        and signatures is not None
    ):
        type_ctx = TypeContext(signatures, config.type_lambda, warm=0.0)
        model.type_context = type_ctx

    history = TrainHistory()
    if config.max_steps == 0 or kg.train.shape[0] == 0:
        return model, history

    from .evaluation import evaluate  # local import to avoid a cycle

    batch_rng = derive_seed(config.seed, SEED_SLOT_BATCH)
    neg_rng = derive_seed(config.seed, SEED_SLOT_NEGATIVE)
    sub_rng = derive_seed(config.seed, SEED_SLOT_VALID_SUBSAMPLE)
    log.info(
        "training %s: seed=%d with purpose slots init=%d batch=%d negative=%d subsample=%d",
        model.kind,
        config.seed,
        SEED_SLOT_INIT,
        SEED_SLOT_BATCH,
        SEED_SLOT_NEGATIVE,
        SEED_SLOT_VALID_SUBSAMPLE,
    )

    n_train = kg.train.shape[0]
    has_valid = kg.valid.shape[0] > 0
    subsample_idx: np.ndarray | None = None
    if has_valid and kg.valid.shape[0] > 500:
        subsample_idx = np.sort(
            sub_rng.choice(kg.valid.shape[0], size=500, replace=False)
        )

    loss_margin_value = config.effective_loss_margin
    warmup = config.effective_warmup_steps
    tensors = model.tensors()
    adam = AdamState(tensors)
    best_model = model.copy()
    best_mrr = -np.inf
    bad_rounds = 0
    loss_window: list[float] = []
    start = time.perf_counter()

    for step in range(1, config.max_steps + 1):
        if type_ctx is not None:
            type_ctx.warm = warm_factor(step, warmup)
        batch_idx = batch_rng.integers(0, n_train, size=config.batch_size)
        batch = kg.train[batch_idx]
        neg_entities, corrupt_tail = sample_negatives(
            batch, config.neg_samples, kg.n_entities, neg_rng, config.negative_side
        )
        if config.filter_negatives:
            neg_entities = _filtered_resample(kg, batch, neg_entities, corrupt_tail, neg_rng)
        neg_triples = build_negative_triples(batch, neg_entities, corrupt_tail)

        f_pos = model.score_triples(batch)
        f_neg = model.score_triples(neg_triples.reshape(-1, 3)).reshape(
            config.batch_size, config.neg_samples
        )
        weights = adversarial_weights(f_neg, config.adv_temperature)
        slack = f_neg - f_pos[:, None] + loss_margin_value
        active = slack > 0
        batch_loss = float(np.mean(np.sum(weights * np.maximum(slack, 0.0), axis=1)))
        loss = batch_loss + l3_penalty(model, config.l3_weight)
        if not np.isfinite(loss):
            raise TrainingAbort(
                f"non-finite loss at step {step} (batch ids {batch_idx[:8].tolist()}...): "
                f"margin part {batch_loss!r}, "
                f"tensor norms {{"
                + ", ".join(
                    f"{k}: {float(np.linalg.norm(v)):.3g}" for k, v in tensors.items()
                )
                + "}"
            )

        inv_b = 1.0 / config.batch_size
        neg_weights = np.where(active, weights, 0.0) * inv_b
        pos_weights = neg_weights.sum(axis=1)
        entry_triples = np.concatenate(
            [neg_triples.reshape(-1, 3), batch], axis=0
        )
        entry_weights = np.concatenate([neg_weights.reshape(-1), pos_weights])
        entry_signs = np.concatenate(
            [
                np.ones(config.batch_size * config.neg_samples),
                -np.ones(config.batch_size),
            ]
        )
        keep = entry_weights != 0.0
        grads = _shard_gradients(
            model,
            entry_triples[keep],
            entry_weights[keep],
            entry_signs[keep],
            config.workers,
        )
        if config.l3_weight > 0:
            grads.merge(l3_grads(model, config.l3_weight))
        clip_gradients(grads, config.clip_norm)
        adam.apply(tensors, grads, config.lr)
        loss_window.append(loss)

        if step % config.valid_interval == 0 or step == config.max_steps:
            mrr: float | None = None
            if has_valid:
                valid_split = (
                    kg.valid if subsample_idx is None else kg.valid[subsample_idx]
                )
                mrr = evaluate(model, kg, valid_split, workers=config.workers).mrr
            history.points.append(
                HistoryPoint(
                    step=step,
                    loss=float(np.mean(loss_window)),
                    valid_mrr=mrr,
                    seconds=time.perf_counter() - start,
                )
            )
            loss_window.clear()
            if mrr is not None:
                if mrr > best_mrr:
                    best_mrr = mrr
                    best_model = model.copy()
                    history.best_step = step
                    history.best_valid_mrr = mrr
                    bad_rounds = 0
                else:
                    bad_rounds += 1
                    if bad_rounds >= config.patience:
                        history.stopped_early = True
                        break

    if has_valid and best_mrr > -np.inf:
        return best_model, history
    return model, history
