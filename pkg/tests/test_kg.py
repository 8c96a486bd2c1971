"""Containers, IO round-trips and derived relation statistics."""
import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relate.kg import (
    KnowledgeGraph,
    ParseError,
    RelationKind,
    Vocabulary,
    VocabularyError,
    augment_reciprocal,
    build_filter_index,
    check_triples,
    classify_relations,
    infer_type_signatures,
    load_dataset,
    load_triples,
    write_dataset,
    write_triples,
)


def make_graph(train, valid=(), test=(), n_entities=None, n_relations=None):
    train = np.asarray(train).reshape(-1, 3)
    all_parts = [train] + [np.asarray(p).reshape(-1, 3) for p in (valid, test) if len(p)]
    stacked = np.concatenate(all_parts, axis=0)
    ne = n_entities or int(stacked[:, [0, 2]].max()) + 1
    nr = n_relations or int(stacked[:, 1].max()) + 1
    vocab = Vocabulary(
        tuple(f"e{i}" for i in range(ne)), tuple(f"r{i}" for i in range(nr))
    )
    return KnowledgeGraph.from_splits(
        vocab,
        train,
        np.asarray(valid, dtype=np.int64).reshape(-1, 3),
        np.asarray(test, dtype=np.int64).reshape(-1, 3),
    )


class TestVocabulary:
    def test_roundtrip_indices(self):
        vocab = Vocabulary(("a", "b"), ("r",))
        assert vocab.entity_index("b") == 1
        assert vocab.relation_index("r") == 0
        assert vocab.n_entities == 2 and vocab.n_relations == 1

    def test_duplicate_entity_rejected(self):
        with pytest.raises(VocabularyError, match="duplicate entity"):
            Vocabulary(("a", "a"), ("r",))

    def test_unknown_token(self):
        vocab = Vocabulary(("a",), ("r",))
        with pytest.raises(VocabularyError, match="unknown entity"):
            vocab.entity_index("zzz")


class TestCheckTriples:
    def test_normalizes_lists(self):
        arr = check_triples([[0, 0, 1]])
        assert arr.dtype == np.int64 and arr.shape == (1, 3)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError, match="shape"):
            check_triples(np.zeros((2, 4)))

    def test_rejects_fractional(self):
        with pytest.raises(ValueError, match="integer"):
            check_triples(np.array([[0.5, 0, 1]]))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="entity index"):
            check_triples([[0, 0, 5]], n_entities=3, n_relations=1)
        with pytest.raises(ValueError, match="relation index"):
            check_triples([[0, 7, 1]], n_entities=3, n_relations=1)

    def test_empty_ok(self):
        assert check_triples([]).shape == (0, 3)
        with pytest.raises(ValueError):
            check_triples([], allow_empty=False)


class TestLoadTriples:
    def test_basic_load(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("# comment\na\tlikes\tb\n\nb\tlikes\ta\n")
        arr, vocab = load_triples(p)
        npt.assert_array_equal(arr, [[0, 0, 1], [1, 0, 0]])
        assert vocab.entity_names == ("a", "b")

    def test_duplicates_dropped(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("a\tr\tb\na\tr\tb\n")
        arr, _ = load_triples(p)
        assert arr.shape[0] == 1

    def test_malformed_line_names_position(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("a\tr\tb\nbroken line\n")
        with pytest.raises(ParseError, match=r"t\.txt:2"):
            load_triples(p)

    def test_fixed_vocab_unknown_token(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("a\tr\tzzz\n")
        vocab = Vocabulary(("a", "b"), ("r",))
        with pytest.raises(VocabularyError, match="zzz"):
            load_triples(p, vocab=vocab)

    def test_write_read_roundtrip(self, tmp_path):
        kg = make_graph([[0, 0, 1], [1, 1, 2]], valid=[[2, 0, 0]], test=[[0, 1, 2]])
        write_dataset(kg, tmp_path)
        back = load_dataset(tmp_path)
        npt.assert_array_equal(back.train, kg.train)
        npt.assert_array_equal(back.valid, kg.valid)
        npt.assert_array_equal(back.test, kg.test)
        assert back.vocab.entity_names == kg.vocab.entity_names

    def test_write_triples_header(self, tmp_path):
        kg = make_graph([[0, 0, 1]])
        write_triples(tmp_path / "x.txt", kg.train, kg.vocab, ["note one"])
        text = (tmp_path / "x.txt").read_text()
        assert text.startswith("# note one\n")


class TestFilterIndex:
    def test_membership(self):
        idx = build_filter_index(
            np.array([[0, 0, 1], [0, 0, 2]]), np.array([[3, 0, 1]]), np.empty((0, 3))
        )
        assert idx.tails(0, 0) == {1, 2}
        assert idx.heads(0, 1) == {0, 3}
        assert idx.contains(0, 0, 2)
        assert not idx.contains(1, 0, 0)
        assert idx.n_triples == 3

    def test_counts_ignore_cross_split_duplicates(self):
        a = np.array([[0, 0, 1]])
        idx = build_filter_index(a, a, a)
        assert idx.n_triples == 1

    @given(
        st.lists(
            st.tuples(
                st.integers(0, 5), st.integers(0, 2), st.integers(0, 5)
            ),
            min_size=1,
            max_size=40,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_contains_matches_set_semantics(self, triples):
        arr = np.array(triples, dtype=np.int64)
        idx = build_filter_index(arr, np.empty((0, 3)), np.empty((0, 3)))
        truth = {tuple(t) for t in triples}
        for h in range(6):
            for r in range(3):
                for t in range(6):
                    assert idx.contains(h, r, t) == ((h, r, t) in truth)


class TestKnowledgeGraph:
    def test_duplicate_within_split_rejected(self):
        vocab = Vocabulary(("a", "b"), ("r",))
        with pytest.raises(ValueError, match="duplicate"):
            KnowledgeGraph.from_splits(
                vocab,
                np.array([[0, 0, 1], [0, 0, 1]]),
                np.empty((0, 3)),
                np.empty((0, 3)),
            )

    def test_splits_frozen(self):
        kg = make_graph([[0, 0, 1]])
        with pytest.raises(ValueError, match="read-only"):
            kg.train[0, 0] = 5

    def test_split_lookup(self):
        kg = make_graph([[0, 0, 1]], valid=[[1, 0, 0]])
        assert kg.split("valid").shape[0] == 1
        with pytest.raises(ValueError, match="unknown split"):
            kg.split("dev")


class TestClassifyRelations:
    def test_four_kinds(self):
        # r0: one head, many tails; r1: many heads, one tail;
        # r2: bijective; r3: many to many.
        train = np.array(
            [
                [0, 0, 1], [0, 0, 2], [0, 0, 3],
                [1, 1, 9], [2, 1, 9], [3, 1, 9],
                [4, 2, 5],
                [6, 3, 7], [6, 3, 8], [7, 3, 7], [7, 3, 8],
            ]
        )
        kinds = {r: c.kind for r, c in classify_relations(train).items()}
        assert kinds[0] == RelationKind.ONE_TO_MANY
        assert kinds[1] == RelationKind.MANY_TO_ONE
        assert kinds[2] == RelationKind.ONE_TO_ONE
        assert kinds[3] == RelationKind.MANY_TO_MANY

    def test_threshold_is_strict(self):
        # avg tails per head exactly 1.5 stays on the "one" side
        train = np.array([[0, 0, 1], [0, 0, 2], [3, 0, 4]])
        cat = classify_relations(train)[0]
        assert cat.avg_tails_per_head == 1.5
        assert cat.kind == RelationKind.ONE_TO_ONE


class TestReciprocal:
    def test_augment_shapes_and_names(self):
        kg = make_graph([[0, 0, 1], [1, 1, 2]], valid=[[2, 0, 0]])
        aug = augment_reciprocal(kg)
        assert aug.n_relations == 4
        assert aug.base_relation_count == 2
        assert aug.has_reciprocal
        assert aug.vocab.relation_names[2] == "r0_reverse"
        assert aug.train.shape[0] == 2 * kg.train.shape[0]
        npt.assert_array_equal(aug.valid, kg.valid)

    def test_reversed_triples_present(self):
        kg = make_graph([[0, 0, 1]])
        aug = augment_reciprocal(kg)
        assert aug.filter.contains(1, 1, 0)

    def test_double_augment_rejected(self):
        aug = augment_reciprocal(make_graph([[0, 0, 1]]))
        with pytest.raises(ValueError, match="already"):
            augment_reciprocal(aug)

    def test_name_collision_rejected(self):
        vocab = Vocabulary(("a", "b"), ("r", "r_reverse"))
        kg = KnowledgeGraph.from_splits(
            vocab, np.array([[0, 0, 1], [0, 1, 1]]), np.empty((0, 3)), np.empty((0, 3))
        )
        with pytest.raises(VocabularyError, match="collision"):
            augment_reciprocal(kg)


class TestTypeSignatures:
    def test_single_head_incidence(self):
        sig = infer_type_signatures(np.array([[0, 0, 1]]), np.empty((0, 3)), 2, 2)
        npt.assert_allclose(sig[0], [1, 0, 0, 0])

    def test_head_and_tail_split(self):
        train = np.array([[0, 0, 1], [2, 1, 0]])
        sig = infer_type_signatures(train, np.empty((0, 3)), 3, 2)
        npt.assert_allclose(sig[0], [0.5, 0, 0, 0.5])

    def test_isolated_entity_zero_row(self):
        sig = infer_type_signatures(np.array([[0, 0, 1]]), np.empty((0, 3)), 5, 1)
        npt.assert_allclose(sig[4], 0.0)

    def test_valid_counts_included(self):
        sig = infer_type_signatures(
            np.empty((0, 3)), np.array([[0, 0, 1]]), 2, 1
        )
        npt.assert_allclose(sig[0], [1, 0])

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_rows_normalized(self, seed):
        rng = np.random.default_rng(seed)
        train = np.stack(
            [rng.integers(0, 6, 30), rng.integers(0, 3, 30), rng.integers(0, 6, 30)],
            axis=1,
        )
        sig = infer_type_signatures(train, np.empty((0, 3)), 6, 3)
        sums = sig.sum(axis=1)
        assert np.all((np.abs(sums - 1.0) < 1e-12) | (sums == 0.0))
