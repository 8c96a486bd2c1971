"""Deterministic synthetic family knowledge graphs for desk-scale runs.

The generator grows a multi-generation family forest and emits the full
closure of five kinship relations, so inverse (parent_of/child_of),
symmetric (sibling_of, spouse_of) and compositional (grandparent_of)
regularities all hold exactly in the data.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kg import KnowledgeGraph, Triple, Vocabulary, write_dataset

RELATION_NAMES = (
    "parent_of",
    "child_of",
    "sibling_of",
    "grandparent_of",
    "spouse_of",
)

PARENT_OF, CHILD_OF, SIBLING_OF, GRANDPARENT_OF, SPOUSE_OF = range(5)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of the generated graph; fractions refer to the fact closure."""

    entities: int = 200
    depth: int = 4
    train_fraction: float = 0.8
    valid_fraction: float = 0.1
    test_fraction: float = 0.1
    founder_couples: int | None = None
    max_children: int = 5
    marriage_prob: float = 0.5

    def validate(self) -> None:
        if self.entities < 4:
            raise ValueError("entities must be at least 4")
        if self.depth < 2:
            raise ValueError("depth must be at least 2")
        fractions = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if any(f < 0 for f in fractions):
            raise ValueError("split fractions must be non-negative")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if not 0 <= self.marriage_prob <= 1:
            raise ValueError("marriage_prob must lie in [0, 1]")
        if self.max_children < 1:
            raise ValueError("max_children must be positive")


def _grow_family_forest(
    spec: SyntheticSpec, rng: np.random.Generator
) -> tuple[int, list[tuple[int, int]], list[tuple[int, int]], list[list[int]]]:
    """Returns (n_people, parent edges, spouse pairs, sibling groups)."""
    n_people = 0
    budget = spec.entities

    def new_person() -> int:
        nonlocal n_people
        person = n_people
        n_people += 1
        return person

    parent_edges: list[tuple[int, int]] = []
    spouse_pairs: list[tuple[int, int]] = []
    sibling_groups: list[list[int]] = []

    n_founders = spec.founder_couples or max(1, round(spec.entities / 12))
    couples: list[tuple[int, int]] = []
    for _ in range(n_founders):
        if n_people + 2 > budget:
            break
        a, b = new_person(), new_person()
        couples.append((a, b))
        spouse_pairs.append((a, b))

    for _ in range(spec.depth - 1):
        next_couples: list[tuple[int, int]] = []
        for a, b in couples:
            if n_people >= budget:
                break
            n_kids = int(rng.integers(1, spec.max_children + 1))
            kids = []
            for _ in range(n_kids):
                if n_people >= budget:
                    break
                kid = new_person()
                kids.append(kid)
                parent_edges.append((a, kid))
                parent_edges.append((b, kid))
            if len(kids) > 1:
                sibling_groups.append(kids)
            for kid in kids:
                if rng.random() < spec.marriage_prob and n_people < budget:
                    partner = new_person()
                    spouse_pairs.append((kid, partner))
                    next_couples.append((kid, partner))
        couples = next_couples
        if not couples or n_people >= budget:
            break
    return n_people, parent_edges, spouse_pairs, sibling_groups


def _closure_facts(
    parent_edges: list[tuple[int, int]],
    spouse_pairs: list[tuple[int, int]],
    sibling_groups: list[list[int]],
) -> list[Triple]:
    facts: list[Triple] = []
    seen: set[Triple] = set()

    def add(h: int, r: int, t: int) -> None:
        trip = (h, r, t)
        if trip not in seen:
            seen.add(trip)
            facts.append(trip)

    parents_of: dict[int, list[int]] = {}
    for p, c in parent_edges:
        add(p, PARENT_OF, c)
        add(c, CHILD_OF, p)
        parents_of.setdefault(c, []).append(p)
    for group in sibling_groups:
        for a in group:
            for b in group:
                if a != b:
                    add(a, SIBLING_OF, b)
    for a, b in spouse_pairs:
        add(a, SPOUSE_OF, b)
        add(b, SPOUSE_OF, a)
    for p, c in parent_edges:
        for g in parents_of.get(p, ()):
            add(g, GRANDPARENT_OF, c)
    return facts


def _split_with_coverage(
    facts: list[Triple], spec: SyntheticSpec, rng: np.random.Generator
) -> tuple[list[Triple], list[Triple], list[Triple]]:
    """Shuffle-split, then move held-out facts whose entities or relations
    are unseen in train back into train."""
    order = rng.permutation(len(facts))
    shuffled = [facts[i] for i in order]
    n = len(facts)
    n_valid = int(round(spec.valid_fraction * n))
    n_test = int(round(spec.test_fraction * n))
    n_train = n - n_valid - n_test
    train = shuffled[:n_train]
    valid = shuffled[n_train : n_train + n_valid]
    test = shuffled[n_train + n_valid :]

    covered_e = {h for h, _, _ in train} | {t for _, _, t in train}
    covered_r = {r for _, r, _ in train}

    def repair(split: list[Triple]) -> list[Triple]:
        kept = []
        for h, r, t in split:
            if h in covered_e and t in covered_e and r in covered_r:
                kept.append((h, r, t))
            else:
                train.append((h, r, t))
                covered_e.update((h, t))
                covered_r.add(r)
        return kept

    valid = repair(valid)
    test = repair(test)
    return train, valid, test


def generate_synthetic_kg(spec: SyntheticSpec, seed: int) -> KnowledgeGraph:
    """Build a family knowledge graph; identical spec and seed give an
    identical graph."""
    spec.validate()
    rng = np.random.default_rng(seed)
    n_people, parent_edges, spouse_pairs, sibling_groups = _grow_family_forest(spec, rng)
    facts = _closure_facts(parent_edges, spouse_pairs, sibling_groups)
    if not facts:
        raise ValueError("generated graph has no facts; increase entities or depth")
    train, valid, test = _split_with_coverage(facts, spec, rng)

    width = max(4, len(str(n_people - 1)))
    names = tuple(f"person_{i:0{width}d}" for i in range(n_people))
    vocab = Vocabulary(names, RELATION_NAMES)
    return KnowledgeGraph.from_splits(
        vocab,
        np.array(train, dtype=np.int64).reshape(-1, 3),
        np.array(valid, dtype=np.int64).reshape(-1, 3),
        np.array(test, dtype=np.int64).reshape(-1, 3),
    )


def write_synthetic_dataset(
    kg: KnowledgeGraph, out_dir: str | Path, spec: SyntheticSpec, seed: int
) -> None:
    """Write split files with a provenance header recording spec and seed."""
    header = [
        "synthetic family knowledge graph",
        f"entities={kg.n_entities} depth={spec.depth} seed={seed}",
        (
            f"fractions={spec.train_fraction}/{spec.valid_fraction}/{spec.test_fraction}"
            f" founder_couples={spec.founder_couples or 'auto'}"
            f" max_children={spec.max_children} marriage_prob={spec.marriage_prob}"
        ),
    ]
    write_dataset(kg, out_dir, header)
