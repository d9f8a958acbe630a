import random

import pytest

from medico import vocab
from medico.errors import NotFoundError, ValidationError
from medico.ontology import (
    ConceptRef,
    ExpansionSpec,
    concept_distance,
    expand,
    label_of,
    load_bundled,
    lookup_concept,
    neighbors,
)
from medico.triples import Iri, Literal, Triple, TripleStore


@pytest.fixture(scope="module")
def onto():
    return load_bundled()


def ref(store, iri):
    from medico.ontology import concept_ref

    return concept_ref(store, Iri(iri))


class TestLookup:
    def test_hodgkin_hyphenated_synonym(self, onto):
        refs = lookup_concept(onto, "Hodgkin-Lymphoma")
        assert [r.iri.value for r in refs] == ["urn:icd10:C81"]
        assert refs[0].source == "disease"

    def test_liver_label(self, onto):
        refs = lookup_concept(onto, "liver")
        assert [r.iri.value for r in refs] == ["urn:fma:Liver"]

    def test_unknown_term_empty(self, onto):
        assert lookup_concept(onto, "flurble") == []

    def test_case_insensitive(self, onto):
        assert lookup_concept(onto, "LYMPH NODE") == lookup_concept(onto, "lymph node")

    def test_underscores_normalized(self, onto):
        assert lookup_concept(onto, "coarse_texture") == lookup_concept(onto, "coarse texture")

    def test_empty_surface_rejected(self, onto):
        with pytest.raises(ValidationError):
            lookup_concept(onto, "   ")


class TestExpand:
    def test_zero_depth_is_identity(self, onto):
        seed = ref(onto, "urn:fma:Liver")
        out = expand(onto, seed, ExpansionSpec(max_depth=0))
        assert {(t.concept.iri.value, t.distance) for t in out} == {("urn:fma:Liver", 0)}

    def test_lymph_node_chain_down(self, onto):
        seed = ref(onto, "urn:fma:LymphNode")
        spec = ExpansionSpec(relations=frozenset({"isA"}), directions=frozenset({"down"}), max_depth=2)
        got = {(t.concept.iri.value, t.distance) for t in expand(onto, seed, spec)}
        assert ("urn:fma:LymphNode", 0) in got
        assert ("urn:fma:CervicalLymphNode", 1) in got
        assert ("urn:fma:DeepCervicalLymphNode", 2) in got
        # depth-2 down expansion over isA only: exactly the node's isA subtree
        assert got == {
            ("urn:fma:LymphNode", 0),
            ("urn:fma:CervicalLymphNode", 1),
            ("urn:fma:AxillaryLymphNode", 1),
            ("urn:fma:MediastinalLymphNode", 1),
            ("urn:fma:InguinalLymphNode", 1),
            ("urn:fma:DeepCervicalLymphNode", 2),
        }

    def test_leaf_down_expansion_stays_identity(self, onto):
        seed = ref(onto, "urn:fma:DeepCervicalLymphNode")
        spec = ExpansionSpec(relations=frozenset({"isA"}), directions=frozenset({"down"}), max_depth=3)
        assert {t.concept.iri for t in expand(onto, seed, spec)} == {seed.iri}

    def test_monotone_in_depth(self, onto):
        seed = ref(onto, "urn:fma:Heart")
        for d in range(4):
            smaller = expand(onto, seed, ExpansionSpec(max_depth=d))
            larger = expand(onto, seed, ExpansionSpec(max_depth=d + 1))
            assert {t.concept for t in smaller} <= {t.concept for t in larger}

    def test_unknown_seed(self, onto):
        with pytest.raises(NotFoundError):
            expand(onto, ConceptRef(Iri("urn:fma:Nope"), "anatomy"), ExpansionSpec())

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            ExpansionSpec(relations=frozenset(), max_depth=1)
        with pytest.raises(ValidationError):
            ExpansionSpec(max_depth=-1)


class TestDistance:
    def test_self_distance_zero(self, onto):
        assert concept_distance(onto, Iri("urn:fma:Liver"), Iri("urn:fma:Liver")) == 0

    def test_siblings_distance_two(self, onto):
        d = concept_distance(
            onto, Iri("urn:icd10:C81.0"), Iri("urn:icd10:C81.1"), frozenset({"isA"})
        )
        assert d == 2

    def test_symmetry(self, onto):
        pairs = [
            ("urn:fma:Liver", "urn:fma:Spleen"),
            ("urn:icd10:C81", "urn:icd10:C83.3"),
            ("urn:radlex:HyperIntense", "urn:radlex:CoarseTexture"),
        ]
        for a, b in pairs:
            assert concept_distance(onto, Iri(a), Iri(b)) == concept_distance(onto, Iri(b), Iri(a))

    def test_disjoint_components_absent(self, onto):
        assert concept_distance(onto, Iri("urn:icd10:J18"), Iri("urn:icd10:C81")) is None

    def test_cross_source_absent(self, onto):
        assert concept_distance(onto, Iri("urn:fma:Liver"), Iri("urn:icd10:C81")) is None

    def test_beyond_cap_absent(self, onto):
        # enlarged -> Modifier is one tree; hyper-intense sits in the other
        assert concept_distance(onto, Iri("urn:radlex:Enlarged"), Iri("urn:radlex:HyperIntense")) is None


class TestNeighbors:
    def test_liver_whole_is_abdomen(self, onto):
        hood = neighbors(onto, Iri("urn:fma:Liver"))
        assert ("urn:fma:Abdomen" in {i.value for i, _ in hood.wholes})

    def test_root_has_no_parents(self, onto):
        hood = neighbors(onto, Iri("urn:fma:AnatomicalStructure"))
        assert hood.parents == []

    def test_unknown_concept(self, onto):
        with pytest.raises(NotFoundError):
            neighbors(onto, Iri("urn:fma:Nope"))

    def test_parents_children_reconstruct_isa_edges(self, onto):
        edges = {
            (t.subject, t.object)
            for t in onto.match(None, vocab.IS_A, None)
        }
        reconstructed = set()
        concepts = [t.subject for t in onto.match(None, vocab.RDF_TYPE, vocab.CONCEPT)]
        for c in concepts:
            hood = neighbors(onto, c)
            for parent, _ in hood.parents:
                reconstructed.add((c, parent))
            for child, _ in hood.children:
                reconstructed.add((child, c))
        assert reconstructed == edges


def random_dag_store(rng: random.Random):
    """Random two-relation DAG over <=60 nodes, edges i->j only for i<j."""
    n = rng.randint(2, 60)
    nodes = [Iri(f"urn:t:n{i}") for i in range(n)]
    store = TripleStore()
    for node in nodes:
        store.insert(Triple(node, vocab.RDF_TYPE, vocab.CONCEPT))
        store.insert(Triple(node, vocab.SOURCE, Literal("anatomy")))
    edges = []
    for j in range(1, n):
        for _ in range(rng.randint(0, 2)):
            i = rng.randrange(j)
            rel = rng.choice(["isA", "partOf"])
            predicate = vocab.IS_A if rel == "isA" else vocab.PART_OF
            store.insert(Triple(nodes[i], predicate, nodes[j]))
            edges.append((nodes[i], rel, nodes[j]))
    return store, nodes, edges


def oracle_shortest(edges, seed, relations, directions, max_depth):
    """All-paths enumeration with per-node minimum distance."""
    adjacency = {}
    for child, rel, parent in edges:
        if rel not in relations:
            continue
        if "up" in directions:
            adjacency.setdefault(child, set()).add(parent)
        if "down" in directions:
            adjacency.setdefault(parent, set()).add(child)
    best = {}

    def walk(node, depth, on_path):
        if node not in best or depth < best[node]:
            best[node] = depth
        if depth == max_depth:
            return
        for nxt in adjacency.get(node, ()):
            if nxt not in on_path:
                walk(nxt, depth + 1, on_path | {nxt})

    walk(seed, 0, frozenset({seed}))
    return best


class TestExpandOracle:
    def test_random_dags_match_brute_force(self):
        rng = random.Random(7)
        for _ in range(60):
            store, nodes, edges = random_dag_store(rng)
            seed = rng.choice(nodes)
            relations = frozenset(rng.sample(["isA", "partOf"], rng.randint(1, 2)))
            directions = frozenset(rng.sample(["down", "up"], rng.randint(1, 2)))
            depth = rng.randint(0, 4)
            spec = ExpansionSpec(relations=relations, directions=directions, max_depth=depth)
            got = {
                (t.concept.iri, t.distance)
                for t in expand(store, ConceptRef(seed, "anatomy"), spec)
            }
            want = set(oracle_shortest(edges, seed, relations, directions, depth).items())
            assert got == want
