"""Shared generators for randomized suites."""

import random

import pytest

from medico.triples import Iri, Literal, Triple, TripleStore

IRI_POOL = [Iri(f"urn:x:{name}") for name in "abcdefghij"]
PRED_POOL = [Iri(f"urn:p:{name}") for name in "pqrs"]
LIT_POOL = [Literal(v) for v in ("one", "two", "three")] + [
    Literal("42", "urn:xsd:integer")
]


def random_triple(rng: random.Random) -> Triple:
    obj = rng.choice(IRI_POOL + LIT_POOL)
    return Triple(rng.choice(IRI_POOL), rng.choice(PRED_POOL), obj)


def random_store(rng: random.Random, max_triples=50) -> TripleStore:
    store = TripleStore()
    for _ in range(rng.randrange(max_triples + 1)):
        store.insert(random_triple(rng))
    return store


@pytest.fixture
def rng():
    return random.Random(20260811)
