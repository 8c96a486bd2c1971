"""Scikit-learn estimator facade: params, clone, fit, prediction surface."""
import numpy as np
import numpy.testing as npt
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from relate.estimators import KGEmbeddingEstimator, RelatE, RotatE, TransE
from relate.kg import KnowledgeGraph
from relate.synthetic import SyntheticSpec, generate_synthetic_kg

FAST = dict(dim=8, max_steps=30, valid_interval=15, batch_size=32, seed=3)


@pytest.fixture(scope="module")
def tiny_kg():
    return generate_synthetic_kg(SyntheticSpec(entities=40), seed=9)


@pytest.fixture(scope="module")
def fitted(tiny_kg):
    return RelatE(**FAST).fit(tiny_kg)


class TestSklearnProtocol:
    def test_get_params_roundtrip(self):
        est = RelatE(dim=32, lr=0.2, modulus_weight=2.0)
        params = est.get_params()
        assert params["dim"] == 32
        assert params["modulus_weight"] == 2.0
        rebuilt = RelatE(**params)
        assert rebuilt.get_params() == params

    def test_set_params_chains(self):
        est = TransE()
        assert est.set_params(dim=16, margin=4.0) is est
        assert est.dim == 16 and est.margin == 4.0

    def test_set_params_rejects_unknown(self):
        with pytest.raises(ValueError):
            RotatE().set_params(frobnicate=1)

    def test_clone_preserves_params_drops_state(self, fitted):
        fresh = clone(fitted)
        assert fresh.get_params() == fitted.get_params()
        assert not hasattr(fresh, "model_")

    def test_model_kinds(self):
        assert RelatE._model_kind == "relate"
        assert TransE._model_kind == "transe"
        assert RotatE._model_kind == "rotate"
        assert KGEmbeddingEstimator._model_kind == "relate"

    def test_unfitted_raises(self):
        est = RelatE()
        with pytest.raises(NotFittedError):
            est.decision_function(np.array([[0, 0, 1]]))
        with pytest.raises(NotFittedError):
            est.predict_tails(0, 0)
        with pytest.raises(NotFittedError):
            est.evaluate()


class TestFit:
    def test_fit_returns_self_and_sets_state(self, fitted, tiny_kg):
        assert isinstance(fitted, RelatE)
        assert fitted.n_entities_ == tiny_kg.n_entities
        assert fitted.n_relations_ == tiny_kg.n_relations
        assert fitted.history_.points
        assert isinstance(fitted.graph_, KnowledgeGraph)

    def test_fit_from_array(self):
        rng = np.random.default_rng(0)
        X = np.column_stack(
            [rng.integers(0, 12, 80), rng.integers(0, 3, 80), rng.integers(0, 12, 80)]
        )
        est = TransE(**FAST).fit(X)
        assert est.n_entities_ == 12
        assert est.n_relations_ == 3
        assert est.graph_.valid.shape[0] == 0

    def test_fit_from_array_with_validation(self):
        rng = np.random.default_rng(1)
        X = np.column_stack(
            [rng.integers(0, 10, 60), rng.integers(0, 2, 60), rng.integers(0, 10, 60)]
        )
        V = np.array([[0, 0, 1], [2, 1, 3]])
        est = RelatE(**FAST).fit(X, validation=V)
        assert est.graph_.valid.shape[0] == 2

    def test_invalid_array_rejected(self):
        with pytest.raises(ValueError):
            RelatE(**FAST).fit(np.zeros((4, 2)))

    def test_reciprocal_flag_augments_graph(self, tiny_kg):
        est = RelatE(**{**FAST, "reciprocal": True}).fit(tiny_kg)
        assert est.n_relations_ == 2 * tiny_kg.n_relations

    def test_same_seed_same_model(self, tiny_kg, fitted):
        twin = RelatE(**FAST).fit(tiny_kg)
        for name, tensor in fitted.model_.tensors().items():
            npt.assert_array_equal(twin.model_.tensors()[name], tensor)


class TestPrediction:
    def test_decision_function_matches_model(self, fitted):
        X = np.array([[0, 0, 1], [3, 1, 2]])
        npt.assert_array_equal(
            fitted.decision_function(X), fitted.model_.score_triples(X)
        )
        npt.assert_array_equal(fitted.predict(X), fitted.decision_function(X))

    def test_out_of_range_triples_rejected(self, fitted):
        bad = np.array([[0, 0, fitted.n_entities_]])
        with pytest.raises(ValueError):
            fitted.decision_function(bad)

    def test_predict_tails_orders_by_score(self, fitted):
        top = fitted.predict_tails(0, 1, k=5)
        assert top.shape == (5,)
        scores = fitted.model_.score_tail_candidates(0, 1)
        assert scores[top[0]] == scores.max()
        assert np.all(np.diff(scores[top]) <= 0)

    def test_predict_heads_orders_by_score(self, fitted):
        top = fitted.predict_heads(1, 2, k=4)
        scores = fitted.model_.score_head_candidates(1, 2)
        assert scores[top[0]] == scores.max()
        assert np.all(np.diff(scores[top]) <= 0)

    def test_k_larger_than_entity_count_truncates(self, fitted):
        top = fitted.predict_tails(0, 0, k=10_000)
        assert top.shape == (fitted.n_entities_,)


class TestEvaluate:
    def test_default_graph_test_split(self, fitted):
        report = fitted.evaluate()
        assert report.n_queries == 2 * fitted.graph_.test.shape[0]
        assert 0.0 < report.mrr <= 1.0

    def test_explicit_graph_and_split(self, fitted, tiny_kg):
        report = fitted.evaluate(tiny_kg, split="valid")
        assert report.n_queries == 2 * tiny_kg.valid.shape[0]
