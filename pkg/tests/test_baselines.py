"""Translation and rotation baseline scoring semantics."""
import numpy as np
import numpy.testing as npt
import pytest

from relate.baselines import (
    RotateModel,
    TransEModel,
    init_rotate,
    init_transe,
)


class TestTransE:
    def test_score_formula(self):
        params = init_transe(3, 1, 4, seed=0, gamma=5.0)
        params.entity[0] = [1.0, 0.0, 2.0, -1.0]
        params.relation[0] = [0.5, 0.5, 0.5, 0.5]
        params.entity[1] = [1.5, 0.5, 2.5, -0.5]
        model = TransEModel(params)
        assert model.score(0, 0, 1) == pytest.approx(5.0)  # exact translation
        params.entity[2] = [0.0, 0.0, 0.0, 0.0]
        expected = 5.0 - (1.5 + 0.5 + 2.5 + 0.5)
        assert model.score(0, 0, 2) == pytest.approx(expected)

    def test_candidate_sweeps_match(self):
        model = TransEModel(init_transe(5, 2, 6, seed=1))
        tails = model.score_tail_candidates(1, 0)
        heads = model.score_head_candidates(0, 2)
        for e in range(5):
            assert tails[e] == pytest.approx(model.score(1, 0, e), abs=1e-12)
            assert heads[e] == pytest.approx(model.score(e, 0, 2), abs=1e-12)

    def test_init_bound(self):
        params = init_transe(100, 4, 16, seed=0)
        bound = 6.0 / np.sqrt(16)
        assert np.all(np.abs(params.entity) <= bound)
        assert np.all(np.abs(params.relation) <= bound)


class TestRotate:
    def test_unit_rotation_preserves_norm(self):
        params = init_rotate(2, 1, 4, seed=0, gamma=3.0)
        model = RotateModel(params)
        # rotating the head by theta and placing the tail exactly there
        # gives the maximal score gamma
        h_re, h_im = params.entity[0, :2], params.entity[0, 2:]
        theta = params.relation_phase[0]
        rot_re = h_re * np.cos(theta) - h_im * np.sin(theta)
        rot_im = h_re * np.sin(theta) + h_im * np.cos(theta)
        params.entity[1, :2] = rot_re
        params.entity[1, 2:] = rot_im
        assert model.score(0, 0, 1) == pytest.approx(3.0, abs=1e-12)

    def test_zero_phase_is_translation_free(self):
        params = init_rotate(2, 1, 4, seed=0, gamma=1.0)
        params.relation_phase[0] = 0.0
        params.entity[1] = params.entity[0]
        model = RotateModel(params)
        assert model.score(0, 0, 1) == pytest.approx(1.0, abs=1e-12)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError, match="even"):
            init_rotate(3, 1, 5, seed=0)

    def test_candidate_sweeps_match(self):
        model = RotateModel(init_rotate(5, 2, 8, seed=3))
        tails = model.score_tail_candidates(0, 1)
        heads = model.score_head_candidates(1, 4)
        for e in range(5):
            assert tails[e] == pytest.approx(model.score(0, 1, e), abs=1e-12)
            assert heads[e] == pytest.approx(model.score(e, 1, 4), abs=1e-12)

    def test_inverse_by_negated_phase(self):
        # scoring (t, -theta, h) equals scoring (h, theta, t): rotations
        # are isometries, so the gap norms agree
        params = init_rotate(4, 2, 8, seed=5)
        params.relation_phase[1] = -params.relation_phase[0]
        model = RotateModel(params)
        for h in range(4):
            for t in range(4):
                npt.assert_allclose(
                    model.score(h, 0, t), model.score(t, 1, h), atol=1e-10
                )


class TestCopySemantics:
    @pytest.mark.parametrize(
        "factory",
        [
            lambda: TransEModel(init_transe(4, 2, 6, seed=0)),
            lambda: RotateModel(init_rotate(4, 2, 6, seed=0)),
        ],
    )
    def test_copy_detaches_storage(self, factory):
        model = factory()
        clone = model.copy()
        before = clone.score(0, 0, 1)
        for tensor in model.tensors().values():
            tensor += 1.0
        assert clone.score(0, 0, 1) == before
