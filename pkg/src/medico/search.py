"""Concept-expanded semantic search over annotations.

Scoring: a query term contributes, per patient, the best value of

    weight(dimension) * decay ** distance * confidence

over that patient's non-superseded annotations, where distance is the
undirected isA/partOf hop count between the query concept and an annotated
concept of the term's dimension (absent or beyond the depth cap scores
nothing). A patient's score is the sum over query terms. Results are sorted
by score, ties broken by patient IRI.
"""

import calendar
from dataclasses import dataclass, field
from datetime import date, timedelta

from . import vocab
from .annotations import AnnotationService
from .errors import EmptyQueryError, UnknownTimePhraseError, ValidationError
from .ontology import ConceptRef, concept_distance, concept_ref, lookup_concept
from .triples import Iri, Literal, TripleStore

_SOURCE_TO_DIMENSION = {"anatomy": "anatomy", "imaging": "imaging", "disease": "disease"}


@dataclass(frozen=True)
class SearchTerm:
    concept: ConceptRef
    dimension: str  # anatomy | imaging | disease


@dataclass
class SearchQuery:
    terms: list = field(default_factory=list)
    patient_scope: Iri | None = None
    date_range: tuple | None = None  # (start, end) YYYYMMDD inclusive
    exclude_region: Iri | None = None

    def __post_init__(self):
        if not self.terms and self.date_range is None:
            raise EmptyQueryError("query needs at least one term or a date range")
        if self.date_range is not None:
            for d in self.date_range:
                if len(d) != 8 or not d.isdigit():
                    raise ValidationError(f"dates must be YYYYMMDD, got {d!r}")


@dataclass
class RankParams:
    decay: float = 0.5
    max_depth: int = 2
    weights: dict = field(
        default_factory=lambda: {"anatomy": 1.0, "imaging": 1.0, "disease": 1.0}
    )

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ValidationError(f"decay must be in (0, 1], got {self.decay}")
        if not 0 <= self.max_depth <= 4:
            raise ValidationError("max_depth must be within 0..4")
        if any(w <= 0 for w in self.weights.values()):
            raise ValidationError("dimension weights must be positive")


@dataclass(frozen=True)
class Explanation:
    query_term: ConceptRef
    matched_concept: Iri
    distance: int
    contribution: float


@dataclass
class ScoredResult:
    patient: Iri
    best_region: Iri | None
    score: float
    explanations: list


def build_query(store: TripleStore, term_strings, patient_scope=None, date_range=None, exclude_region=None):
    """Resolve surface strings to concepts. Unresolved strings are returned,
    never dropped, so the dialogue can ask about them."""
    if not term_strings and date_range is None:
        raise EmptyQueryError("no search input given")
    terms = []
    unknown = []
    for surface in term_strings:
        refs = lookup_concept(store, surface)
        refs = [r for r in refs if r.source in _SOURCE_TO_DIMENSION]
        if not refs:
            unknown.append(surface)
            continue
        for ref in refs:
            term = SearchTerm(ref, _SOURCE_TO_DIMENSION[ref.source])
            if term not in terms:
                terms.append(term)
    if not terms and date_range is None:
        raise EmptyQueryError(
            f"no usable search terms (unknown: {', '.join(unknown)})", unknown_terms=unknown
        )
    query = SearchQuery(terms, patient_scope, date_range, exclude_region)
    return query, unknown


def _term_contribution(store, term: SearchTerm, record, params: RankParams):
    """Best (contribution, matched concept, distance) of one annotation for
    one query term; None when nothing in range."""
    if term.dimension == "anatomy":
        concepts = [record.anatomy] if record.anatomy else []
    elif term.dimension == "imaging":
        concepts = list(record.visual)
    else:
        concepts = [record.disease] if record.disease else []
    best = None
    for concept in concepts:
        d = concept_distance(store, term.concept.iri, concept)
        if d is None or d > params.max_depth:
            continue
        value = params.weights[term.dimension] * (params.decay ** d) * record.confidence
        if best is None or value > best[0]:
            best = (value, concept, d)
    return best


def score_annotation_set(store, term: SearchTerm, records, params: RankParams):
    """Best contribution of one query term over a set of annotations.

    Returns (contribution, Explanation | None); superseded annotations are
    ignored by the callers that assemble the record set.
    """
    best = None
    for record in records:
        hit = _term_contribution(store, term, record, params)
        if hit is None:
            continue
        if best is None or hit[0] > best[0]:
            best = hit
    if best is None:
        return 0.0, None
    value, concept, distance = best
    return value, Explanation(term.concept, concept, distance, value)


def _patient_of_region(store, region: Iri) -> Iri | None:
    targets = store.match(region, vocab.ON_TARGET, None)
    if not targets:
        return None
    node = targets[0].object
    if store.match(node, vocab.RDF_TYPE, vocab.IMAGE):
        parents = store.match(None, vocab.HAS_IMAGE, node)
        if not parents:
            return None
        node = parents[0].subject
    studies = store.match(None, vocab.HAS_SERIES, node)
    if not studies:
        return None
    owners = store.match(None, vocab.HAS_STUDY, studies[0].subject)
    return owners[0].subject if owners else None


def _study_dates(store, patient: Iri):
    out = []
    for st in store.match(patient, vocab.HAS_STUDY, None):
        for t in store.match(st.object, vocab.STUDY_DATE, None):
            if isinstance(t.object, Literal):
                out.append(t.object.value)
    return out


def _candidate_patients(store, query: SearchQuery):
    patients = sorted(t.subject for t in store.match(None, vocab.RDF_TYPE, vocab.PATIENT))
    if query.patient_scope is not None:
        patients = [p for p in patients if p == query.patient_scope]
    if query.date_range is not None:
        start, end = query.date_range
        patients = [
            p
            for p in patients
            if any(start <= d <= end for d in _study_dates(store, p))
        ]
    return patients


def semantic_search(store: TripleStore, query: SearchQuery, params: RankParams | None = None):
    """Rank candidate patients by summed best term contributions."""
    params = params or RankParams()
    service = AnnotationService(store)
    results = []
    for patient in _candidate_patients(store, query):
        records = [
            r
            for r in service.list_annotations(patient=patient)
            if query.exclude_region is None or r.region != query.exclude_region
        ]
        by_region = {}
        for r in records:
            by_region.setdefault(r.region, []).append(r)

        score = 0.0
        explanations = []
        best_region = None
        best_single = 0.0
        for term in query.terms:
            contribution, explanation = score_annotation_set(store, term, records, params)
            if explanation is None:
                continue
            score += contribution
            explanations.append(explanation)
            # region that carries this term's best annotation
            for region, region_records in sorted(by_region.items()):
                value, _ = score_annotation_set(store, term, region_records, params)
                if value == contribution and value > best_single:
                    best_single = value
                    best_region = region
                    break
        if score <= 0.0 and query.terms:
            continue
        if best_region is None and by_region:
            best_region = sorted(by_region)[0]
        results.append(ScoredResult(patient, best_region, score, explanations))
    results.sort(key=lambda r: (-r.score, r.patient))
    return results


def find_similar_lesions(store: TripleStore, region: Iri, extra_terms=(), params=None):
    """Search with the source region's own concepts plus extra terms,
    excluding the source region itself."""
    service = AnnotationService(store)
    service.get_region(region)  # not-found propagates
    records = [r for r in service.list_annotations(region=region)]
    if not records:
        raise ValidationError(f"region {region} has no annotations to search from")
    terms = []

    def add(concept_iri):
        ref = concept_ref(store, concept_iri)
        dimension = _SOURCE_TO_DIMENSION.get(ref.source)
        if dimension is None:
            return
        term = SearchTerm(ref, dimension)
        if term not in terms:
            terms.append(term)

    for record in records:
        if record.anatomy:
            add(record.anatomy)
        for v in record.visual:
            add(v)
        if record.disease:
            add(record.disease)
    unknown = []
    for extra in extra_terms:
        if isinstance(extra, ConceptRef):
            add(extra.iri)
            continue
        refs = lookup_concept(store, extra)
        if not refs:
            unknown.append(extra)
            continue
        for ref in refs:
            add(ref.iri)
    if unknown:
        raise ValidationError(f"unknown search terms: {', '.join(unknown)}")
    query = SearchQuery(terms, exclude_region=region)
    return semantic_search(store, query, params)


def resolve_time_phrase(phrase: str, reference: date):
    """Supported: 'this week', 'last week', 'today', 'this month'.
    Weeks are ISO weeks (Monday..Sunday); bounds inclusive, YYYYMMDD."""
    normalized = " ".join(phrase.lower().split())
    if normalized == "today":
        start = end = reference
    elif normalized == "this week":
        start = reference - timedelta(days=reference.isoweekday() - 1)
        end = start + timedelta(days=6)
    elif normalized == "last week":
        start = reference - timedelta(days=reference.isoweekday() - 1 + 7)
        end = start + timedelta(days=6)
    elif normalized == "this month":
        start = reference.replace(day=1)
        end = reference.replace(day=calendar.monthrange(reference.year, reference.month)[1])
    else:
        raise UnknownTimePhraseError(phrase)
    return start.strftime("%Y%m%d"), end.strftime("%Y%m%d")
