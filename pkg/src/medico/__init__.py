"""Semantic dialogue and retrieval engine for radiology reporting.

Subsystems: a set-semantics triple store with a conjunctive query language
(`triples`, `sparql`), ontology lookup and expansion over bundled anatomy /
imaging / disease vocabularies (`ontology`), DICOM header ingestion
(`dicom`), region annotations with provenance (`annotations`), concept-
expanded ranked search (`search`), typed feature structures and the
multimodal dialogue shell (`tfs`, `grammar`, `dialogue`), and the HTTP
service plus CLI (`server`, `cli`).
"""

from .triples import Iri, Literal, Triple, TripleStore, load, parse_triples, serialize, snapshot
from .sparql import Query, SolutionSet, evaluate, parse_query

__all__ = [
    "Iri",
    "Literal",
    "Triple",
    "TripleStore",
    "load",
    "parse_triples",
    "serialize",
    "snapshot",
    "Query",
    "SolutionSet",
    "evaluate",
    "parse_query",
]

__version__ = "0.1.0"
