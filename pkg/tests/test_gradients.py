"""Analytic gradients versus central finite differences.

The finite-difference oracle perturbs the live tensors that the score
closures read, so the same memory is exercised on both sides. Kink
avoidance: configurations are redrawn until every absolute-value argument,
|sin| argument and hinge slack is at least 1e-3 from its kink.
"""
import numpy as np
import pytest

from relate.baselines import RotateModel, TransEModel, init_rotate, init_transe
from relate.scoring import (
    RelateModel,
    TypeContext,
    init_relate,
    sigmoid,
)
from relate.training import (
    adversarial_weights,
    build_negative_triples,
    l3_grads,
    l3_penalty,
    sample_negatives,
)

from _oracles import finite_difference

FD_STEP = 1e-5
REL_TOL = 1e-4
KINK_GAP = 1e-3


def rel_err(analytic, fd, floor=1e-5):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), floor)
    return np.max(np.abs(analytic - fd) / denom)


def relate_kink_distance(params, triples):
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    b = sigmoid(params.relation_bias_raw[r])
    inner = params.entity_modulus[h] * (params.relation_modulus[r] + b) - (
        params.entity_modulus[t] * (1.0 - b)
    )
    u = (params.entity_phase[h] + params.relation_phase[r] - params.entity_phase[t]) * 0.5
    return min(float(np.min(np.abs(inner))), float(np.min(np.abs(np.sin(u)))))


def random_relate_model(rng, with_types=True, n_entities=6, n_relations=3, dim=8):
    params = init_relate(
        n_entities, n_relations, dim, seed=int(rng.integers(2**31)), gamma=4.0
    )
    for tensor in params.tensors().values():
        tensor += rng.normal(0, 0.3, tensor.shape)
    ctx = None
    if with_types:
        sig = rng.random((n_entities, params.head_type_proto.shape[1]))
        sig /= sig.sum(axis=1, keepdims=True)
        ctx = TypeContext(signatures=sig, type_lambda=0.3, warm=0.6)
    return RelateModel(params, ctx)


def random_triples(rng, model, n):
    return np.stack(
        [
            rng.integers(0, model.n_entities, n),
            rng.integers(0, model.n_relations, n),
            rng.integers(0, model.n_entities, n),
        ],
        axis=1,
    ).astype(np.int64)


class TestScoreGradients:
    """d/d theta of a plain weighted score sum, per model family."""

    def check_model(self, model, triples, kink_fn):
        rng = np.random.default_rng(0)
        weights = rng.uniform(0.2, 1.0, triples.shape[0])
        signs = rng.choice([-1.0, 1.0], triples.shape[0])
        assert kink_fn(triples) > KINK_GAP

        def objective():
            return float(np.sum(weights * signs * model.score_triples(triples)))

        analytic = model.gradients(triples, weights, signs)
        fd = finite_difference(objective, model.tensors(), FD_STEP)
        for name, tensor in model.tensors().items():
            a = analytic.dense(name, tensor.shape)
            assert rel_err(a, fd[name]) < REL_TOL, name

    def test_relate(self, rng):
        for _ in range(20):
            model = random_relate_model(rng)
            triples = random_triples(rng, model, 5)
            if relate_kink_distance(model.params, triples) > KINK_GAP:
                break
        else:
            pytest.fail("no kink-free draw found")
        self.check_model(
            model, triples, lambda tr: relate_kink_distance(model.params, tr)
        )

    def test_transe(self, rng):
        model = TransEModel(init_transe(6, 3, 8, seed=11, gamma=4.0))
        p = model.params
        for _ in range(20):
            triples = random_triples(rng, model, 5)
            diff = p.entity[triples[:, 0]] + p.relation[triples[:, 1]] - p.entity[triples[:, 2]]
            if np.min(np.abs(diff)) > KINK_GAP:
                break
        self.check_model(
            model,
            triples,
            lambda tr: float(
                np.min(np.abs(p.entity[tr[:, 0]] + p.relation[tr[:, 1]] - p.entity[tr[:, 2]]))
            ),
        )

    def test_rotate(self, rng):
        model = RotateModel(init_rotate(6, 3, 8, seed=7, gamma=4.0))
        for _ in range(20):
            triples = random_triples(rng, model, 5)
            norms = model._pair_gaps(triples[:, 0], triples[:, 1], triples[:, 2])[2]
            if np.min(norms) > KINK_GAP:
                break
        self.check_model(
            model,
            triples,
            lambda tr: float(np.min(model._pair_gaps(tr[:, 0], tr[:, 1], tr[:, 2])[2])),
        )


def build_step_pieces(rng, model, batch_size=3, n_neg=4, margin=2.0):
    """One training step's fixed randomness: batch, negatives, frozen
    adversarial weights."""
    batch = random_triples(rng, model, batch_size)
    neg_entities, corrupt_tail = sample_negatives(
        batch, n_neg, model.n_entities, rng
    )
    neg = build_negative_triples(batch, neg_entities, corrupt_tail)
    f_neg = model.score_triples(neg.reshape(-1, 3)).reshape(batch_size, n_neg)
    frozen = adversarial_weights(f_neg, temperature=1.0)
    return batch, neg, frozen


def full_objective(model, batch, neg, frozen, margin, l3_weight):
    def objective():
        f_pos = model.score_triples(batch)
        f_neg = model.score_triples(neg.reshape(-1, 3)).reshape(frozen.shape)
        slack = f_neg - f_pos[:, None] + margin
        hinge = np.sum(frozen * np.maximum(slack, 0.0), axis=1)
        return float(np.mean(hinge)) + l3_penalty(model, l3_weight)

    return objective


def analytic_step_grads(model, batch, neg, frozen, margin, l3_weight):
    """Mirror of the training loop's gradient assembly for a fixed batch."""
    b = batch.shape[0]
    f_pos = model.score_triples(batch)
    f_neg = model.score_triples(neg.reshape(-1, 3)).reshape(frozen.shape)
    slack = f_neg - f_pos[:, None] + margin
    active = slack > 0
    neg_w = np.where(active, frozen, 0.0) / b
    pos_w = neg_w.sum(axis=1)
    triples = np.concatenate([neg.reshape(-1, 3), batch], axis=0)
    weights = np.concatenate([neg_w.reshape(-1), pos_w])
    signs = np.concatenate([np.ones(neg_w.size), -np.ones(b)])
    keep = weights != 0.0
    grads = model.gradients(triples[keep], weights[keep], signs[keep])
    if l3_weight > 0:
        grads.merge(l3_grads(model, l3_weight))
    return grads


def slack_kink_distance(model, batch, neg, margin):
    f_pos = model.score_triples(batch)
    f_neg = model.score_triples(neg.reshape(-1, 3)).reshape(batch.shape[0], -1)
    return float(np.min(np.abs(f_neg - f_pos[:, None] + margin)))


class TestFullObjective:
    """Hinge + frozen adversarial weights + L3 + type bias, as trained."""

    MARGIN = 2.0
    L3 = 1e-3

    def draw_clean_config(self, rng):
        for _ in range(50):
            model = random_relate_model(rng)
            batch, neg, frozen = build_step_pieces(rng, model, margin=self.MARGIN)
            all_triples = np.concatenate([batch, neg.reshape(-1, 3)])
            if (
                relate_kink_distance(model.params, all_triples) > KINK_GAP
                and slack_kink_distance(model, batch, neg, self.MARGIN) > KINK_GAP
            ):
                return model, batch, neg, frozen
        pytest.fail("no kink-free configuration found")

    def test_matches_fd(self, rng):
        for _ in range(5):
            model, batch, neg, frozen = self.draw_clean_config(rng)
            objective = full_objective(model, batch, neg, frozen, self.MARGIN, self.L3)
            analytic = analytic_step_grads(model, batch, neg, frozen, self.MARGIN, self.L3)
            fd = finite_difference(objective, model.tensors(), FD_STEP)
            for name, tensor in model.tensors().items():
                a = analytic.dense(name, tensor.shape)
                assert rel_err(a, fd[name]) < REL_TOL, name

    def test_l3_alone(self, rng):
        model = random_relate_model(rng, with_types=False)

        def objective():
            return l3_penalty(model, 0.01)

        analytic = l3_grads(model, 0.01)
        fd = finite_difference(objective, model.tensors(), FD_STEP)
        for name, tensor in model.tensors().items():
            a = analytic.dense(name, tensor.shape)
            assert rel_err(a, fd[name]) < REL_TOL, name

    def test_type_proto_gradient_direction(self, rng):
        # increasing a used prototype coordinate raises the score linearly
        model = random_relate_model(rng, with_types=True)
        h, r, t = 0, 1, 2
        base = model.score(h, r, t)
        eps = 1e-4
        model.params.head_type_proto[r, 0] += eps
        bumped = model.score(h, r, t)
        ctx = model.type_context
        expected = eps * ctx.warm * ctx.type_lambda * ctx.signatures[h, 0]
        assert abs((bumped - base) - expected) < 1e-12
