"""Family graph generator: closure properties, splits, determinism."""
import numpy as np
import numpy.testing as npt
import pytest

from relate.kg import load_dataset
from relate.synthetic import (
    CHILD_OF,
    GRANDPARENT_OF,
    PARENT_OF,
    RELATION_NAMES,
    SIBLING_OF,
    SPOUSE_OF,
    SyntheticSpec,
    generate_synthetic_kg,
    write_synthetic_dataset,
)


@pytest.fixture(scope="module")
def kg():
    return generate_synthetic_kg(SyntheticSpec(), seed=7)


def facts_set(kg):
    return {tuple(t) for t in kg.all_triples().tolist()}


class TestSpecValidation:
    def test_fraction_sum_enforced(self):
        spec = SyntheticSpec(train_fraction=0.9, valid_fraction=0.2, test_fraction=0.1)
        with pytest.raises(ValueError, match="sum"):
            spec.validate()

    def test_negative_fraction(self):
        spec = SyntheticSpec(train_fraction=1.2, valid_fraction=-0.1, test_fraction=-0.1)
        with pytest.raises(ValueError, match="non-negative"):
            spec.validate()

    def test_tiny_entity_count(self):
        with pytest.raises(ValueError, match="entities"):
            SyntheticSpec(entities=2).validate()


class TestClosure:
    def test_relation_vocabulary(self, kg):
        assert kg.vocab.relation_names == RELATION_NAMES

    def test_parent_child_inverse(self, kg):
        facts = facts_set(kg)
        parents = [f for f in facts if f[1] == PARENT_OF]
        assert parents
        for a, _, b in parents:
            assert (b, CHILD_OF, a) in facts
        children = [f for f in facts if f[1] == CHILD_OF]
        for b, _, a in children:
            assert (a, PARENT_OF, b) in facts

    def test_sibling_symmetric(self, kg):
        facts = facts_set(kg)
        sibs = [f for f in facts if f[1] == SIBLING_OF]
        assert sibs
        for a, _, b in sibs:
            assert a != b
            assert (b, SIBLING_OF, a) in facts

    def test_spouse_symmetric(self, kg):
        facts = facts_set(kg)
        spouses = [f for f in facts if f[1] == SPOUSE_OF]
        assert spouses
        for a, _, b in spouses:
            assert (b, SPOUSE_OF, a) in facts

    def test_grandparent_is_parent_composition(self, kg):
        facts = facts_set(kg)
        parent_pairs = {(a, b) for a, r, b in facts if r == PARENT_OF}
        grand = {(a, b) for a, r, b in facts if r == GRANDPARENT_OF}
        assert grand
        composed = {
            (a, c)
            for a, b in parent_pairs
            for b2, c in parent_pairs
            if b == b2
        }
        assert grand == composed


class TestSplits:
    def test_disjoint(self, kg):
        tr = {tuple(t) for t in kg.train.tolist()}
        va = {tuple(t) for t in kg.valid.tolist()}
        te = {tuple(t) for t in kg.test.tolist()}
        assert not (tr & va) and not (tr & te) and not (va & te)

    def test_coverage(self, kg):
        seen_e = set(kg.train[:, 0]) | set(kg.train[:, 2])
        seen_r = set(kg.train[:, 1])
        for split in (kg.valid, kg.test):
            assert set(split[:, 0]) <= seen_e
            assert set(split[:, 2]) <= seen_e
            assert set(split[:, 1]) <= seen_r

    def test_fractions_roughly_kept(self, kg):
        n = kg.all_triples().shape[0]
        assert kg.train.shape[0] >= 0.75 * n
        assert kg.valid.shape[0] >= 0.05 * n
        assert kg.test.shape[0] >= 0.05 * n

    def test_entity_budget(self, kg):
        assert kg.n_entities <= 200


class TestDeterminism:
    def test_same_seed_byte_identical(self):
        a = generate_synthetic_kg(SyntheticSpec(), seed=7)
        b = generate_synthetic_kg(SyntheticSpec(), seed=7)
        npt.assert_array_equal(a.train, b.train)
        npt.assert_array_equal(a.valid, b.valid)
        npt.assert_array_equal(a.test, b.test)
        assert a.vocab.entity_names == b.vocab.entity_names

    def test_different_seed_differs(self):
        a = generate_synthetic_kg(SyntheticSpec(), seed=7)
        b = generate_synthetic_kg(SyntheticSpec(), seed=8)
        assert a.train.shape != b.train.shape or not np.array_equal(a.train, b.train)


class TestDatasetWriter:
    def test_roundtrip(self, tmp_path, kg):
        # Reloading renumbers indices in first-seen order, so compare the
        # name-level triple sets, which must survive exactly.
        def names(graph, split):
            return {
                (
                    graph.vocab.entity_names[h],
                    graph.vocab.relation_names[r],
                    graph.vocab.entity_names[t],
                )
                for h, r, t in getattr(graph, split).tolist()
            }

        write_synthetic_dataset(kg, tmp_path, SyntheticSpec(), seed=7)
        back = load_dataset(tmp_path)
        for split in ("train", "valid", "test"):
            assert names(back, split) == names(kg, split)

    def test_provenance_header(self, tmp_path, kg):
        write_synthetic_dataset(kg, tmp_path, SyntheticSpec(), seed=7)
        lines = (tmp_path / "train.txt").read_text().splitlines()
        header = [l for l in lines if l.startswith("#")]
        assert any("seed=7" in l for l in header)


class TestScale:
    def test_desk_scale_fact_count(self):
        kg = generate_synthetic_kg(SyntheticSpec(), seed=0)
        total = kg.all_triples().shape[0]
        assert kg.n_entities == 200
        assert 900 <= total <= 1150
