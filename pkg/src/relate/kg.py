"""Knowledge graph containers, dataset IO and derived relation statistics.

Triples are stored as int64 arrays of shape (n, 3) with columns
(head entity, relation, tail entity). Splits are deduplicated on load and
frozen after construction so they can be shared across threads.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)

Triple = tuple[int, int, int]

RECIPROCAL_SUFFIX = "_reverse"


class ParseError(ValueError):
    """A dataset file line that does not parse; message carries file and line."""


class VocabularyError(ValueError):
    """An entity or relation token outside a fixed vocabulary."""


@dataclass(frozen=True)
class Vocabulary:
    """Bidirectional entity/relation name <-> index mapping.

    Indices are assigned in first-seen order and are stable across reloads
    of the same files.
    """

    entity_names: tuple[str, ...]
    relation_names: tuple[str, ...]
    _entity_index: dict[str, int] = field(init=False, repr=False, compare=False)
    _relation_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_entity_index", {n: i for i, n in enumerate(self.entity_names)}
        )
        object.__setattr__(
            self, "_relation_index", {n: i for i, n in enumerate(self.relation_names)}
        )
        if len(self._entity_index) != len(self.entity_names):
            raise VocabularyError("duplicate entity names in vocabulary")
        if len(self._relation_index) != len(self.relation_names):
            raise VocabularyError("duplicate relation names in vocabulary")

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    def entity_index(self, name: str) -> int:
        try:
            return self._entity_index[name]
        except KeyError:
            raise VocabularyError(f"unknown entity token {name!r}") from None

    def relation_index(self, name: str) -> int:
        try:
            return self._relation_index[name]
        except KeyError:
            raise VocabularyError(f"unknown relation token {name!r}") from None


def check_triples(
    triples: np.ndarray | Iterable[Iterable[int]],
    n_entities: int | None = None,
    n_relations: int | None = None,
    allow_empty: bool = True,
) -> np.ndarray:
    """Validate and normalize a triple collection to an int64 (n, 3) array.

    Raises ValueError on wrong shape, non-integral values, or out-of-range
    indices when bounds are given.
    """
    arr = np.asarray(triples)
    if arr.size == 0:
        if not allow_empty:
            raise ValueError("expected at least one triple")
        return np.empty((0, 3), dtype=np.int64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"triples must have shape (n, 3), got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.asarray(arr, dtype=np.float64) == np.floor(arr)):
            raise ValueError("triple indices must be integers")
    arr = arr.astype(np.int64, copy=False)
    if np.any(arr < 0):
        raise ValueError("triple indices must be non-negative")
    if n_entities is not None:
        if np.any(arr[:, 0] >= n_entities) or np.any(arr[:, 2] >= n_entities):
            raise ValueError(f"entity index out of range (n_entities={n_entities})")
    if n_relations is not None and np.any(arr[:, 1] >= n_relations):
        raise ValueError(f"relation index out of range (n_relations={n_relations})")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.int64)
    out.setflags(write=False)
    return out


def _iter_triple_lines(path: Path) -> Iterator[tuple[int, str, str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            yield lineno, parts[0], parts[1], parts[2]


def load_triples(
    path: str | Path,
    vocab: Vocabulary | None = None,
    extend_vocab: bool = False,
) -> tuple[np.ndarray, Vocabulary]:
    """Load a tab-separated (head, relation, tail) file.

    Blank lines and lines starting with '#' are skipped. Duplicate triples
    are dropped (first occurrence kept) and the drop count is logged. With a
    fixed ``vocab`` and ``extend_vocab=False``, unseen tokens raise
    VocabularyError; with ``extend_vocab=True`` they are appended.
    """
    path = Path(path)
    ent_names: list[str] = list(vocab.entity_names) if vocab else []
    rel_names: list[str] = list(vocab.relation_names) if vocab else []
    ent_idx = {n: i for i, n in enumerate(ent_names)}
    rel_idx = {n: i for i, n in enumerate(rel_names)}
    fixed = vocab is not None and not extend_vocab

    def intern(table: dict[str, int], names: list[str], token: str, kind: str) -> int:
        if token in table:
            return table[token]
        if fixed:
            raise VocabularyError(f"{path}: unknown {kind} token {token!r}")
        table[token] = len(names)
        names.append(token)
        return table[token]

    triples: list[Triple] = []
    seen: set[Triple] = set()
    n_dup = 0
    for _, h, r, t in _iter_triple_lines(path):
        trip = (
            intern(ent_idx, ent_names, h, "entity"),
            intern(rel_idx, rel_names, r, "relation"),
            intern(ent_idx, ent_names, t, "entity"),
        )
        if trip in seen:
            n_dup += 1
            continue
        seen.add(trip)
        triples.append(trip)
    if n_dup:
        log.info("%s: dropped %d duplicate triples", path, n_dup)
    arr = np.array(triples, dtype=np.int64).reshape(-1, 3)
    out_vocab = Vocabulary(tuple(ent_names), tuple(rel_names))
    return arr, out_vocab


def write_triples(
    path: str | Path,
    triples: np.ndarray,
    vocab: Vocabulary,
    header_lines: Iterable[str] = (),
) -> None:
    """Write triples as a name-based TSV; header lines are '#'-prefixed."""
    from .storage import atomic_write

    with atomic_write(path) as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for h, r, t in np.asarray(triples).reshape(-1, 3):
            fh.write(
                f"{vocab.entity_names[h]}\t{vocab.relation_names[r]}\t{vocab.entity_names[t]}\n"
            )


def write_vocabulary(path: str | Path, names: Iterable[str]) -> None:
    """Two-column TSV (index, name) usable to reattach labels to exports."""
    from .storage import atomic_write

    with atomic_write(path) as fh:
        for i, name in enumerate(names):
            fh.write(f"{i}\t{name}\n")


class FilterIndex:
    """Known-true completion lookup over a fixed triple collection.

    ``tails(h, r)`` is the set of t with (h, r, t) present; ``heads(r, t)``
    the set of h with (h, r, t) present. Read-only after build.
    """

    def __init__(self) -> None:
        self._tails: dict[tuple[int, int], set[int]] = defaultdict(set)
        self._heads: dict[tuple[int, int], set[int]] = defaultdict(set)
        self.n_triples = 0

    @classmethod
    def build(cls, *triple_arrays: np.ndarray) -> "FilterIndex":
        idx = cls()
        for arr in triple_arrays:
            for h, r, t in np.asarray(arr).reshape(-1, 3):
                key_t = (int(h), int(r))
                if int(t) not in idx._tails[key_t]:
                    idx.n_triples += 1
                idx._tails[key_t].add(int(t))
                idx._heads[(int(r), int(t))].add(int(h))
        return idx

    def tails(self, h: int, r: int) -> set[int]:
        return self._tails.get((h, r), set())

    def heads(self, r: int, t: int) -> set[int]:
        return self._heads.get((r, t), set())

    def contains(self, h: int, r: int, t: int) -> bool:
        return t in self._tails.get((h, r), ())


def build_filter_index(
    train: np.ndarray, valid: np.ndarray, test: np.ndarray
) -> FilterIndex:
    """Index of every known-true triple across all three splits."""
    return FilterIndex.build(train, valid, test)


@dataclass(frozen=True)
class KnowledgeGraph:
    """Immutable dataset: vocabulary, three disjoint splits, filter index.

    ``base_relation_count`` tracks the pre-augmentation relation count; it
    equals ``n_relations`` unless reciprocal relations were added.
    """

    vocab: Vocabulary
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    filter: FilterIndex
    base_relation_count: int

    @classmethod
    def from_splits(
        cls,
        vocab: Vocabulary,
        train: np.ndarray,
        valid: np.ndarray,
        test: np.ndarray,
        base_relation_count: int | None = None,
    ) -> "KnowledgeGraph":
        splits = []
        for name, arr in (("train", train), ("valid", valid), ("test", test)):
            arr = check_triples(arr, vocab.n_entities, vocab.n_relations)
            uniq = {tuple(row) for row in arr.tolist()}
            if len(uniq) != arr.shape[0]:
                raise ValueError(f"duplicate triples within {name} split")
            splits.append(_frozen(arr))
        return cls(
            vocab=vocab,
            train=splits[0],
            valid=splits[1],
            test=splits[2],
            filter=build_filter_index(*splits),
            base_relation_count=(
                vocab.n_relations if base_relation_count is None else base_relation_count
            ),
        )

    @property
    def n_entities(self) -> int:
        return self.vocab.n_entities

    @property
    def n_relations(self) -> int:
        return self.vocab.n_relations

    @property
    def has_reciprocal(self) -> bool:
        return self.base_relation_count != self.n_relations

    def split(self, name: str) -> np.ndarray:
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test], axis=0)


def load_dataset(data_dir: str | Path) -> KnowledgeGraph:
    """Load train.txt/valid.txt/test.txt from a directory.

    The vocabulary is built from the training split; validation and test
    tokens must already be covered by it (transductive setting).
    """
    data_dir = Path(data_dir)
    train, vocab = load_triples(data_dir / "train.txt")
    valid, _ = load_triples(data_dir / "valid.txt", vocab=vocab)
    test, _ = load_triples(data_dir / "test.txt", vocab=vocab)
    return KnowledgeGraph.from_splits(vocab, train, valid, test)


def write_dataset(kg: KnowledgeGraph, out_dir: str | Path, header_lines: Iterable[str] = ()) -> None:
    """Write the three split files plus entity/relation vocabulary TSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = list(header_lines)
    write_triples(out_dir / "train.txt", kg.train, kg.vocab, header)
    write_triples(out_dir / "valid.txt", kg.valid, kg.vocab, header)
    write_triples(out_dir / "test.txt", kg.test, kg.vocab, header)
    write_vocabulary(out_dir / "entities.tsv", kg.vocab.entity_names)
    write_vocabulary(out_dir / "relations.tsv", kg.vocab.relation_names)


class RelationKind(Enum):
    ONE_TO_ONE = "1-1"
    ONE_TO_MANY = "1-N"
    MANY_TO_ONE = "N-1"
    MANY_TO_MANY = "N-N"


@dataclass(frozen=True)
class RelationCategory:
    kind: RelationKind
    avg_tails_per_head: float
    avg_heads_per_tail: float


def classify_relations(
    train: np.ndarray, threshold: float = 1.5
) -> dict[int, RelationCategory]:
    """Bucket relations by average tail-per-head and head-per-tail counts.

    A relation with avg tails per head above the threshold maps many tails to
    one head (1-N on the tail side), and symmetrically for heads.
    """
    train = check_triples(train)
    tails_of: dict[int, dict[int, set[int]]] = defaultdict(lambda: defaultdict(set))
    heads_of: dict[int, dict[int, set[int]]] = defaultdict(lambda: defaultdict(set))
    for h, r, t in train.tolist():
        tails_of[r][h].add(t)
        heads_of[r][t].add(h)
    out: dict[int, RelationCategory] = {}
    for r in tails_of:
        tph = float(np.mean([len(s) for s in tails_of[r].values()]))
        hpt = float(np.mean([len(s) for s in heads_of[r].values()]))
        many_tails = tph > threshold
        many_heads = hpt > threshold
        if many_tails and many_heads:
            kind = RelationKind.MANY_TO_MANY
        elif many_tails:
            kind = RelationKind.ONE_TO_MANY
        elif many_heads:
            kind = RelationKind.MANY_TO_ONE
        else:
            kind = RelationKind.ONE_TO_ONE
        out[r] = RelationCategory(kind, tph, hpt)
    return out


def augment_reciprocal(kg: KnowledgeGraph) -> KnowledgeGraph:
    """Add a reversed relation r+R for every base relation r.

    The training split gains (t, r+R, h) for every (h, r, t); validation and
    test stay untouched. The filter index is rebuilt over the widened
    relation space. Applying this twice is rejected.
    """
    if kg.has_reciprocal:
        raise ValueError("knowledge graph already carries reciprocal relations")
    r0 = kg.n_relations
    rev_names = tuple(n + RECIPROCAL_SUFFIX for n in kg.vocab.relation_names)
    clash = set(rev_names) & set(kg.vocab.relation_names)
    if clash:
        raise VocabularyError(f"reciprocal relation name collision: {sorted(clash)!r}")
    vocab = Vocabulary(kg.vocab.entity_names, kg.vocab.relation_names + rev_names)
    reversed_train = kg.train[:, [2, 1, 0]].copy()
    reversed_train[:, 1] += r0
    train = np.concatenate([kg.train, reversed_train], axis=0)
    return KnowledgeGraph.from_splits(
        vocab, train, kg.valid, kg.test, base_relation_count=r0
    )


def infer_type_signatures(
    train: np.ndarray, valid: np.ndarray, n_entities: int, n_relations: int
) -> np.ndarray:
    """Per-entity relation incidence profile of shape (n_entities, 2R).

    Slot r counts appearances as head of relation r, slot R+r as tail. Rows
    are normalized to sum to one; entities absent from train and valid keep
    an all-zero row. Test data is never consulted.
    """
    sig = np.zeros((n_entities, 2 * n_relations), dtype=np.float64)
    for arr in (train, valid):
        arr = check_triples(arr, n_entities, n_relations)
        if arr.size:
            np.add.at(sig, (arr[:, 0], arr[:, 1]), 1.0)
            np.add.at(sig, (arr[:, 2], n_relations + arr[:, 1]), 1.0)
    totals = sig.sum(axis=1, keepdims=True)
    nonzero = totals[:, 0] > 0
    sig[nonzero] /= totals[nonzero]
    return sig
