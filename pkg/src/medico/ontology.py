"""Concept-level view over the triple store: label lookup, hierarchy
navigation, and breadth-first query expansion.

Relations are uniform across the bundled vocabularies: ``medico:isA``
(child isA parent) and ``medico:partOf`` (part partOf whole). "down" walks
toward specializations/parts, "up" toward generalizations/wholes.
"""

from collections import deque
from dataclasses import dataclass
from importlib import resources

from . import vocab
from .errors import NotFoundError, ValidationError
from .triples import Iri, Literal, TripleStore, load

RELATIONS = {"isA": vocab.IS_A, "partOf": vocab.PART_OF}
DISTANCE_CAP = 4  # beyond this, concepts contribute nothing to ranking

BUNDLED_ONTOLOGIES = ("fma_mini.ttl", "radlex_mini.ttl", "icd10_mini.ttl")


@dataclass(frozen=True, order=True)
class ConceptRef:
    iri: Iri
    source: str  # anatomy | imaging | disease | dicom | dialogue


@dataclass(frozen=True)
class ExpansionSpec:
    relations: frozenset = frozenset({"isA", "partOf"})
    directions: frozenset = frozenset({"down", "up"})
    max_depth: int = 2

    def __post_init__(self):
        if not self.relations <= {"isA", "partOf"}:
            raise ValidationError(f"unknown relations: {self.relations}")
        if not self.directions <= {"down", "up"}:
            raise ValidationError(f"unknown directions: {self.directions}")
        if self.max_depth < 0:
            raise ValidationError("max_depth must be non-negative")
        if self.max_depth > 0 and (not self.relations or not self.directions):
            raise ValidationError("relations and directions must be non-empty")


@dataclass(frozen=True, order=True)
class ExpandedTerm:
    concept: ConceptRef
    distance: int


@dataclass
class Neighborhood:
    concept: ConceptRef
    labels: list[str]
    parents: list[tuple[Iri, str]]
    children: list[tuple[Iri, str]]
    wholes: list[tuple[Iri, str]]
    parts: list[tuple[Iri, str]]


def load_bundled(store: TripleStore | None = None) -> TripleStore:
    """Load the three bundled mini ontologies into a store."""
    store = store if store is not None else TripleStore()
    for name in BUNDLED_ONTOLOGIES:
        with resources.files("medico.data").joinpath(name).open("r") as fh:
            load(fh, store)
    return store


def is_concept(store: TripleStore, iri: Iri) -> bool:
    return bool(store.match(iri, vocab.RDF_TYPE, vocab.CONCEPT))


def concept_source(store: TripleStore, iri: Iri) -> str | None:
    for t in store.match(iri, vocab.SOURCE, None):
        if isinstance(t.object, Literal):
            return t.object.value
    return None


def concept_ref(store: TripleStore, iri: Iri) -> ConceptRef:
    if not is_concept(store, iri):
        raise NotFoundError(f"unknown concept: {iri}")
    source = concept_source(store, iri)
    if source not in vocab.SOURCES:
        raise NotFoundError(f"concept {iri} has no valid source")
    return ConceptRef(iri, source)


def label_of(store: TripleStore, iri: Iri) -> str:
    """Preferred display label; falls back to the IRI's local name."""
    labels = [
        t.object.value
        for t in store.match(iri, vocab.RDFS_LABEL, None)
        if isinstance(t.object, Literal)
    ]
    if labels:
        return sorted(labels)[0]
    return iri.value.rsplit(":", 1)[-1]


def normalize_surface(surface: str) -> str:
    cleaned = surface.replace("-", " ").replace("_", " ")
    return " ".join(cleaned.lower().split())


def lookup_concept(store: TripleStore, surface: str) -> list[ConceptRef]:
    """All concepts whose label or synonym matches, case-insensitively and
    with hyphens/underscores treated as spaces. Empty list, never an error,
    when nothing matches."""
    wanted = normalize_surface(surface)
    if not wanted:
        raise ValidationError("empty surface form")
    hits = set()
    for predicate in (vocab.RDFS_LABEL, vocab.SYNONYM):
        for t in store.match(None, predicate, None):
            if not isinstance(t.object, Literal):
                continue
            if normalize_surface(t.object.value) != wanted:
                continue
            if is_concept(store, t.subject):
                source = concept_source(store, t.subject)
                if source in vocab.SOURCES:
                    hits.add(ConceptRef(t.subject, source))
    return sorted(hits)


def _step(store: TripleStore, node: Iri, relations, directions) -> set[Iri]:
    out = set()
    for rel in relations:
        predicate = RELATIONS[rel]
        if "up" in directions:
            for t in store.match(node, predicate, None):
                if isinstance(t.object, Iri):
                    out.add(t.object)
        if "down" in directions:
            for t in store.match(None, predicate, node):
                out.add(t.subject)
    return out


def expand(store: TripleStore, seed: ConceptRef, spec: ExpansionSpec) -> set[ExpandedTerm]:
    """BFS over the selected relation edges; each reachable concept appears
    once with its minimum distance from the seed."""
    if not is_concept(store, seed.iri):
        raise NotFoundError(f"unknown concept: {seed.iri}")
    distances = {seed.iri: 0}
    queue = deque([seed.iri])
    while queue:
        node = queue.popleft()
        d = distances[node]
        if d >= spec.max_depth:
            continue
        for neighbor in _step(store, node, spec.relations, spec.directions):
            if neighbor not in distances:
                distances[neighbor] = d + 1
                queue.append(neighbor)
    out = set()
    for iri, d in distances.items():
        source = concept_source(store, iri)
        if source in vocab.SOURCES:
            out.add(ExpandedTerm(ConceptRef(iri, source), d))
    return out


def concept_distance(store: TripleStore, a: Iri, b: Iri, relations=frozenset({"isA", "partOf"})) -> int | None:
    """Minimum hops between two concepts in the undirected relation graph,
    or None when they are cross-source, disconnected, or beyond the cap."""
    ref_a = concept_ref(store, a)
    ref_b = concept_ref(store, b)
    if ref_a.source != ref_b.source:
        return None
    if a == b:
        return 0
    distances = {a: 0}
    queue = deque([a])
    while queue:
        node = queue.popleft()
        d = distances[node]
        if d >= DISTANCE_CAP:
            continue
        for neighbor in _step(store, node, relations, {"up", "down"}):
            if neighbor == b:
                return d + 1
            if neighbor not in distances:
                distances[neighbor] = d + 1
                queue.append(neighbor)
    return None


def neighbors(store: TripleStore, iri: Iri) -> Neighborhood:
    """One-hop listing per relation and direction, with display labels."""
    ref = concept_ref(store, iri)

    def listing(relation, direction):
        nodes = _step(store, iri, {relation}, {direction})
        return sorted((n, label_of(store, n)) for n in nodes)

    labels = sorted(
        t.object.value
        for t in store.match(iri, vocab.RDFS_LABEL, None)
        if isinstance(t.object, Literal)
    )
    return Neighborhood(
        concept=ref,
        labels=labels,
        parents=listing("isA", "up"),
        children=listing("isA", "down"),
        wholes=listing("partOf", "up"),
        parts=listing("partOf", "down"),
    )
