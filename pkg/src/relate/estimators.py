"""Scikit-learn style estimators over the training and evaluation stack.

``fit`` accepts either a KnowledgeGraph or an integer triple array of shape
(n, 3); hyperparameters mirror TrainConfig and flow through get_params /
set_params / clone unchanged. Fitted state lives in trailing-underscore
attributes.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .evaluation import RankingReport, evaluate
from .kg import KnowledgeGraph, Vocabulary, check_triples
from .training import TrainConfig, prepare_training_graph, train


def _dedup_rows(arr: np.ndarray) -> np.ndarray:
    """Drop repeated triples, keeping the first occurrence in order."""
    _, first = np.unique(arr, axis=0, return_index=True)
    return arr[np.sort(first)]


def _graph_from_arrays(
    X: np.ndarray, validation: np.ndarray | None
) -> KnowledgeGraph:
    train_arr = _dedup_rows(check_triples(X, allow_empty=False))
    valid_arr = (
        _dedup_rows(check_triples(validation))
        if validation is not None
        else np.empty((0, 3), np.int64)
    )
    both = np.concatenate([train_arr, valid_arr], axis=0)
    n_entities = int(max(both[:, 0].max(), both[:, 2].max())) + 1
    n_relations = int(both[:, 1].max()) + 1
    vocab = Vocabulary(
        tuple(f"entity_{i}" for i in range(n_entities)),
        tuple(f"relation_{i}" for i in range(n_relations)),
    )
    return KnowledgeGraph.from_splits(
        vocab, train_arr, valid_arr, np.empty((0, 3), np.int64)
    )


class KGEmbeddingEstimator(BaseEstimator):
    """Shared fit/score plumbing; subclasses pin the model kind."""

    _model_kind = "relate"

    def __init__(
        self,
        dim: int = 64,
        lr: float = 0.05,
        margin: float = 6.0,
        adv_temperature: float = 1.0,
        neg_samples: int = 16,
        batch_size: int = 256,
        max_steps: int = 2000,
        valid_interval: int = 200,
        patience: int = 10,
        l3_weight: float = 1e-5,
        type_lambda: float = 0.0,
        reciprocal: bool = False,
        seed: int = 0,
    ):
        self.dim = dim
        self.lr = lr
        self.margin = margin
        self.adv_temperature = adv_temperature
        self.neg_samples = neg_samples
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.valid_interval = valid_interval
        self.patience = patience
        self.l3_weight = l3_weight
        self.type_lambda = type_lambda
        self.reciprocal = reciprocal
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            dim=self.dim,
            lr=self.lr,
            margin=self.margin,
            adv_temperature=self.adv_temperature,
            neg_samples=self.neg_samples,
            batch_size=self.batch_size,
            max_steps=self.max_steps,
            valid_interval=self.valid_interval,
            patience=self.patience,
            l3_weight=self.l3_weight,
            type_lambda=self.type_lambda,
            reciprocal=self.reciprocal,
            seed=self.seed,
        ).validate()

    def fit(self, X, validation=None):
        """Train on a KnowledgeGraph or an (n, 3) integer triple array.

        With array input, ``validation`` optionally supplies held-out
        triples for early stopping; without it the run uses all steps.
        """
        if isinstance(X, KnowledgeGraph):
            kg = X
        else:
            kg = _graph_from_arrays(np.asarray(X), validation)
        config = self._config()
        kg, signatures = prepare_training_graph(config, kg)
        model, history = train(
            config, kg, signatures=signatures, model_kind=self._model_kind
        )
        self.model_ = model
        self.history_ = history
        self.graph_ = kg
        self.n_entities_ = kg.n_entities
        self.n_relations_ = kg.n_relations
        return self

    def _validated(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return check_triples(np.asarray(X), self.n_entities_, self.n_relations_)

    def decision_function(self, X) -> np.ndarray:
        """Plausibility score per triple; higher means more plausible."""
        triples = self._validated(X)
        return self.model_.score_triples(triples)

    def predict(self, X) -> np.ndarray:
        """Alias of decision_function; this estimator scores, it does not
        threshold."""
        return self.decision_function(X)

    def predict_tails(self, head: int, relation: int, k: int = 10) -> np.ndarray:
        """Top-k tail entity indices for (head, relation, ?), best first."""
        check_is_fitted(self, "model_")
        scores = self.model_.score_tail_candidates(int(head), int(relation))
        order = np.argsort(-scores, kind="stable")
        return order[:k]

    def predict_heads(self, relation: int, tail: int, k: int = 10) -> np.ndarray:
        """Top-k head entity indices for (?, relation, tail), best first."""
        check_is_fitted(self, "model_")
        scores = self.model_.score_head_candidates(int(relation), int(tail))
        order = np.argsort(-scores, kind="stable")
        return order[:k]

    def evaluate(self, kg: KnowledgeGraph | None = None, split: str = "test") -> RankingReport:
        """Filtered ranking metrics on the given graph (default: the
        training-time graph)."""
        check_is_fitted(self, "model_")
        graph = self.graph_ if kg is None else kg
        return evaluate(self.model_, graph, split)


class RelatE(KGEmbeddingEstimator):
    """Phase-modulus embedding estimator."""

    _model_kind = "relate"

    def __init__(
        self,
        dim: int = 64,
        lr: float = 0.05,
        margin: float = 6.0,
        adv_temperature: float = 1.0,
        neg_samples: int = 16,
        batch_size: int = 256,
        max_steps: int = 2000,
        valid_interval: int = 200,
        patience: int = 10,
        l3_weight: float = 1e-5,
        type_lambda: float = 0.0,
        reciprocal: bool = False,
        seed: int = 0,
        init_relation_width: float = 0.03,
        modulus_weight: float = 1.0,
    ):
        super().__init__(
            dim=dim,
            lr=lr,
            margin=margin,
            adv_temperature=adv_temperature,
            neg_samples=neg_samples,
            batch_size=batch_size,
            max_steps=max_steps,
            valid_interval=valid_interval,
            patience=patience,
            l3_weight=l3_weight,
            type_lambda=type_lambda,
            reciprocal=reciprocal,
            seed=seed,
        )
        self.init_relation_width = init_relation_width
        self.modulus_weight = modulus_weight

    def _config(self) -> TrainConfig:
        config = super()._config()
        config.init_relation_width = self.init_relation_width
        config.modulus_weight = self.modulus_weight
        return config.validate()


class TransE(KGEmbeddingEstimator):
    """Translation baseline estimator."""

    _model_kind = "transe"


class RotatE(KGEmbeddingEstimator):
    """Rotation baseline estimator."""

    _model_kind = "rotate"
