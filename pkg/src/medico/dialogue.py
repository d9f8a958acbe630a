"""Dialogue management: session state, speech+pointing fusion, and act
execution with presentation directives.

Fusion binds each unresolved deictic, in order, to the most recent pointing
gesture of the matching kind within the fusion window; remaining referents
fall back to the dialogue focus; anything still open downgrades the act to
a clarification question. Every directive payload entity carries its IRI so
the display never shows anything without a backing representation.
"""

from collections import deque
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources

from . import vocab
from .annotations import AnnotationPayload, AnnotationService, utc_now
from .errors import MedicoError, NotFoundError
from .grammar import Grammar, InterpretedAct, clarify, iter_concept_list
from .ontology import label_of, neighbors
from .search import (
    RankParams,
    SearchQuery,
    SearchTerm,
    find_similar_lesions,
    semantic_search,
)
from .ontology import ConceptRef
from .tfs import FSNode, atom, copy_fs, load_hierarchy
from .triples import Iri, Literal, TripleStore

FUSION_WINDOW_SECONDS = 5.0

PANELS = ("PatientSearch", "PatientFinding", "ImageAnnotation", "Browser", "Background")
ACTIONS = ("open", "rearrange", "highlight", "close")


@dataclass(frozen=True)
class PointingEvent:
    target_kind: str  # region | patient | image
    target_id: Iri
    timestamp: datetime


@dataclass
class DialogueState:
    session_id: str
    focus: dict = field(default_factory=dict)  # patient/image/region -> Iri
    last_acts: deque = field(default_factory=lambda: deque(maxlen=20))
    pending_clarification: tuple | None = None
    recent_gestures: deque = field(default_factory=lambda: deque(maxlen=10))


@dataclass
class SIEDirective:
    action: str
    panel: str
    payload: dict

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown directive action {self.action}")
        if self.panel not in PANELS:
            raise ValueError(f"unknown panel {self.panel}")

    def as_dict(self):
        return {"action": self.action, "panel": self.panel, "payload": self.payload}


@dataclass
class SystemResponse:
    speak_text: str
    directives: list = field(default_factory=list)

    def as_dict(self):
        return {
            "speakText": self.speak_text,
            "directives": [d.as_dict() for d in self.directives],
        }


def payload_iris(payload) -> set[str]:
    """Every IRI named anywhere in a directive payload."""
    out = set()

    def walk(value):
        if isinstance(value, dict):
            for key, inner in value.items():
                if key == "iri" and isinstance(inner, str):
                    out.add(inner)
                else:
                    walk(inner)
        elif isinstance(value, (list, tuple)):
            for inner in value:
                walk(inner)

    walk(payload)
    return out


def load_dialogue_hierarchy():
    text = resources.files("medico.data").joinpath("dialogue_types.txt").read_text()
    return load_hierarchy(text)


def _slot_iri(act: InterpretedAct, feature: str) -> Iri | None:
    node = act.feature(feature)
    if node is None:
        return None
    iri = node.features.get("IRI")
    return Iri(iri.atom) if iri is not None and iri.atom else None


def _slot_concepts(act: InterpretedAct, feature: str):
    """Concept nodes from a slot holding one concept or a concept list."""
    node = act.feature(feature)
    if node is None:
        return []
    if node.type.endswith("-concept"):
        return [node]
    return list(iter_concept_list(node))


def _concept_ref_of_node(node) -> ConceptRef:
    source = {"anatomy-concept": "anatomy", "imaging-concept": "imaging", "disease-concept": "disease"}[node.type]
    return ConceptRef(Iri(node.features["IRI"].atom), source)


class DialogueEngine:
    """Parse -> fuse -> execute for one store, shared across sessions."""

    def __init__(
        self,
        store: TripleStore,
        annotation_service: AnnotationService | None = None,
        grammar: Grammar | None = None,
        rank_params: RankParams | None = None,
        clock=utc_now,
        fusion_window=FUSION_WINDOW_SECONDS,
    ):
        self.store = store
        self.annotations = annotation_service or AnnotationService(store, clock=clock)
        self.grammar = grammar or Grammar.bundled()
        self.rank_params = rank_params or RankParams()
        self.clock = clock
        self.fusion_window = fusion_window
        self.hierarchy = load_dialogue_hierarchy()

    # -- pipeline stages --

    def parse_utterance(self, text: str):
        return self.grammar.parse_utterance(text, self.store, self.clock().date())

    def fuse(self, act: InterpretedAct, state: DialogueState, now: datetime) -> InterpretedAct:
        """Bind unresolved deictics to gestures, then to focus entries.

        A gesture binds at most one slot, ever: gestures used in a
        successful fusion are consumed from the session buffer so a stale
        pointing act cannot hijack a later utterance.
        """
        if not act.unresolved_deictics:
            return act
        fused = replace(act, slots=copy_fs(act.slots), unresolved_deictics=[])
        consumed = []
        for feature, kind in act.unresolved_deictics:
            chosen = None
            for gesture in sorted(state.recent_gestures, key=lambda g: g.timestamp, reverse=True):
                if gesture in consumed or gesture.target_kind != kind:
                    continue
                if abs((now - gesture.timestamp).total_seconds()) <= self.fusion_window:
                    chosen = gesture
                    break
            if chosen is not None:
                consumed.append(chosen)
                referent = chosen.target_id
            elif kind in state.focus:
                referent = state.focus[kind]
            else:
                return clarify(f"Which {kind} do you mean? Please point at it or name it.")
            fused.slots.features[feature].features["IRI"] = atom(referent.value)
        for gesture in consumed:
            state.recent_gestures.remove(gesture)
        return fused

    # -- execution --

    def execute(self, act: InterpretedAct, state: DialogueState):
        saved_focus = dict(state.focus)
        try:
            handler = {
                "ShowRecords": self._show_records,
                "OpenImages": self._open_images,
                "SelectRegion": self._select_region,
                "Annotate": self._annotate,
                "FindSimilar": self._find_similar,
                "GetFindings": self._get_findings,
                "NavigateConcept": self._navigate_concept,
                "Clarify": self._clarify,
            }[act.intent]
            response = handler(act, state)
        except MedicoError as exc:
            state.focus = saved_focus
            response = SystemResponse(f"Sorry, I could not do that: {exc}")
        state.last_acts.append(act)
        return state, response

    def turn(self, state: DialogueState, text: str, gestures=(), now=None):
        """Full pipeline for one user turn (text, pointing events, or both)."""
        now = now or self.clock()
        for gesture in gestures:
            self._validate_gesture(gesture)
            state.recent_gestures.append(gesture)
        if not text.strip():
            if gestures:
                return self._gesture_only(state, gestures[-1])
            return self.execute(clarify("I did not catch that. What would you like to do?"), state)
        act = self.parse_utterance(text)[0]
        act = self.fuse(act, state, now)
        return self.execute(act, state)

    def _validate_gesture(self, gesture: PointingEvent):
        types = {"region": vocab.REGION, "patient": vocab.PATIENT, "image": vocab.IMAGE}
        rdf_type = types.get(gesture.target_kind)
        if rdf_type is None:
            raise NotFoundError(f"unknown gesture target kind {gesture.target_kind!r}")
        if not self.store.match(gesture.target_id, vocab.RDF_TYPE, rdf_type):
            raise NotFoundError(f"gesture target {gesture.target_id} not in store")

    def _gesture_only(self, state: DialogueState, gesture: PointingEvent):
        if gesture in state.recent_gestures:
            state.recent_gestures.remove(gesture)
        if gesture.target_kind == "region":
            act = InterpretedAct(
                intent="SelectRegion",
                slots=FSNode(
                    "select-region-act",
                    {"REGION": FSNode("region-referent", {"IRI": atom(gesture.target_id.value)})},
                ),
            )
            return self.execute(act, state)
        state.focus[gesture.target_kind] = gesture.target_id
        label = self._display_name(gesture.target_id)
        return state, SystemResponse(f"Noted {gesture.target_kind} {label}.")

    # -- handlers --

    def _show_records(self, act, state):
        terms = []
        for node in _slot_concepts(act, "DISEASES"):
            ref = _concept_ref_of_node(node)
            terms.append(SearchTerm(ref, ref.source))
        time_node = act.feature("TIME")
        date_range = None
        if time_node is not None:
            date_range = (time_node.features["START"].atom, time_node.features["END"].atom)
        query = SearchQuery(terms, date_range=date_range)
        results = semantic_search(self.store, query, self.rank_params)
        rows = [self.result_row(r) for r in results]
        n = len(rows)
        speak = f"Showing {n} matching patient record{'s' if n != 1 else ''}."
        directive = SIEDirective("open", "PatientSearch", {"results": rows})
        return SystemResponse(speak, [directive])

    def _open_images(self, act, state):
        patient = _slot_iri(act, "PATIENT") or state.focus.get("patient")
        if patient is None:
            return SystemResponse("Which patient do you mean? Please point at a record.")
        if not self.store.match(patient, vocab.RDF_TYPE, vocab.PATIENT):
            raise NotFoundError(f"unknown patient {patient}")
        organs = _slot_concepts(act, "ORGANS")
        organ_labels = [n.features["LABEL"].atom for n in organs]
        series_payload = self.series_of_patient(patient, organ_labels)
        state.focus["patient"] = patient
        image_count = sum(len(s["images"]) for s in series_payload)
        name = self._display_name(patient)
        speak = f"Opening {image_count} images of {name}."
        if organ_labels:
            speak = (
                f"Opening {image_count} images of {name}: "
                + ", ".join(label.lower() for label in organ_labels)
                + "."
            )
        directives = [
            SIEDirective(
                "open",
                "ImageAnnotation",
                {
                    "patient": {"iri": patient.value, "name": name},
                    "organs": [
                        {"iri": n.features["IRI"].atom, "label": n.features["LABEL"].atom}
                        for n in organs
                    ],
                    "series": series_payload,
                },
            ),
            SIEDirective("rearrange", "Background", {"layout": "image-review"}),
        ]
        return SystemResponse(speak, directives)

    def _select_region(self, act, state):
        region = _slot_iri(act, "REGION")
        if region is None or not self.store.match(region, vocab.RDF_TYPE, vocab.REGION):
            raise NotFoundError(f"unknown region {region}")
        state.focus["region"] = region
        record = self.annotations.get_region(region)
        payload = {
            "focus": "region",
            "region": {
                "iri": region.value,
                "target": {"iri": record.target.value},
                "geometry": record.geometry.serialize(),
            },
        }
        return SystemResponse(
            "Focusing on the selected region.",
            [SIEDirective("rearrange", "ImageAnnotation", payload)],
        )

    def _annotate(self, act, state):
        region = _slot_iri(act, "REGION") or state.focus.get("region")
        if region is None:
            return SystemResponse("Which region should I annotate? Please point at one.")
        anatomy = None
        visual = []
        disease = None
        for node in _slot_concepts(act, "CONTEXT") + _slot_concepts(act, "FINDING"):
            iri = Iri(node.features["IRI"].atom)
            if node.type == "anatomy-concept" and anatomy is None:
                anatomy = iri
            elif node.type == "imaging-concept":
                visual.append(iri)
            elif node.type == "disease-concept" and disease is None:
                disease = iri
        payload = AnnotationPayload(anatomy=anatomy, visual=visual, disease=disease)
        record, confirmation = self.annotations.annotate(region, payload)
        chip = None
        if disease is not None:
            chip = {
                "iri": disease.value,
                "label": label_of(self.store, disease),
                "code": disease.value.rsplit(":", 1)[-1],
            }
        payload_out = {
            "region": {"iri": region.value},
            "annotation": {"iri": record.id.value, "confidence": record.confidence},
        }
        if chip:
            payload_out["label"] = chip
        state.focus["region"] = region
        return SystemResponse(
            confirmation, [SIEDirective("highlight", "ImageAnnotation", payload_out)]
        )

    def _find_similar(self, act, state):
        region = _slot_iri(act, "REGION") or state.focus.get("region")
        if region is None:
            return SystemResponse(
                "Which lesion should I compare? Select a region first."
            )
        extra = [_concept_ref_of_node(n) for n in _slot_concepts(act, "CHARACTERISTICS")]
        results = find_similar_lesions(self.store, region, extra, self.rank_params)
        rows = [self.result_row(r) for r in results]
        directives = [SIEDirective("open", "PatientSearch", {"results": rows, "comparison": True})]
        speak = f"Found {len(rows)} similar case{'s' if len(rows) != 1 else ''}."
        if rows:
            first = results[0]
            state.focus["patient"] = first.patient
            series_payload = self.series_of_patient(first.patient, [])
            directives.append(
                SIEDirective(
                    "open",
                    "ImageAnnotation",
                    {
                        "patient": {"iri": first.patient.value, "name": self._display_name(first.patient)},
                        "series": series_payload,
                        "comparison": True,
                    },
                )
            )
            speak = (
                f"Found {len(rows)} similar case{'s' if len(rows) != 1 else ''}; "
                f"best match {self._display_name(first.patient)}."
            )
        return SystemResponse(speak, directives)

    def _get_findings(self, act, state):
        patient = _slot_iri(act, "PATIENT") or state.focus.get("patient")
        if patient is None:
            return SystemResponse("Which patient do you mean?")
        payload = self.findings_of(patient)
        name = payload["patient"]["name"]
        return SystemResponse(
            f"Here are the findings of {name}.",
            [SIEDirective("open", "PatientFinding", payload)],
        )

    def findings_of(self, patient: Iri) -> dict:
        """Findings text plus the medical terms grouped per dimension."""
        if not self.store.match(patient, vocab.RDF_TYPE, vocab.PATIENT):
            raise NotFoundError(f"unknown patient {patient}")
        records = self.annotations.list_annotations(patient=patient)
        lines = []
        groups = {"anatomy": [], "imaging": [], "disease": []}

        def group_add(dimension, iri):
            entry = {"iri": iri.value, "label": label_of(self.store, iri)}
            if entry not in groups[dimension]:
                groups[dimension].append(entry)

        for record in records:
            parts = []
            if record.disease:
                parts.append(label_of(self.store, record.disease))
                group_add("disease", record.disease)
            for v in record.visual:
                parts.append(label_of(self.store, v))
                group_add("imaging", v)
            if record.free_text_value:
                parts.append(record.free_text_value)
            context = ""
            if record.anatomy:
                context = f" in {label_of(self.store, record.anatomy).lower()}"
                group_add("anatomy", record.anatomy)
            if parts or context:
                lines.append((", ".join(parts) + context).strip() + ".")
            if record.free_text_comment:
                lines.append(f"Comment: {record.free_text_comment}")
        text = "\n".join(lines) if lines else "No findings recorded."
        return {
            "patient": {"iri": patient.value, "name": self._display_name(patient)},
            "text": text,
            "termGroups": groups,
        }

    def _navigate_concept(self, act, state):
        node = act.feature("CONCEPT")
        if node is None:
            return SystemResponse("Which concept should I show?")
        iri = Iri(node.features["IRI"].atom)
        hood = neighbors(self.store, iri)

        def listing(pairs):
            return [{"iri": i.value, "label": label} for i, label in pairs]

        payload = {
            "concept": {"iri": iri.value, "label": label_of(self.store, iri)},
            "labels": hood.labels,
            "source": hood.concept.source,
            "parents": listing(hood.parents),
            "children": listing(hood.children),
            "wholes": listing(hood.wholes),
            "parts": listing(hood.parts),
        }
        return SystemResponse(
            f"Showing {label_of(self.store, iri)} in the concept browser.",
            [SIEDirective("open", "Browser", payload)],
        )

    def _clarify(self, act, state):
        question = act.question or "Could you rephrase that?"
        state.pending_clarification = (question, act.intent)
        return SystemResponse(question)

    # -- payload helpers --

    def _display_name(self, entity: Iri) -> str:
        for predicate in (vocab.PATIENT_NAME, vocab.PATIENT_ID, vocab.RDFS_LABEL):
            hits = self.store.match(entity, predicate, None)
            if hits and isinstance(hits[0].object, Literal):
                value = hits[0].object.value
                if predicate == vocab.PATIENT_NAME and "^" in value:
                    family, _, given = value.partition("^")
                    return f"{given} {family}".strip()
                return value
        return entity.value.rsplit(":", 1)[-1]

    def result_row(self, result) -> dict:
        row = {
            "iri": result.patient.value,
            "name": self._display_name(result.patient),
            "score": round(result.score, 6),
            "explanations": [
                {
                    "term": {"iri": e.query_term.iri.value},
                    "matched": {"iri": e.matched_concept.value, "label": label_of(self.store, e.matched_concept)},
                    "distance": e.distance,
                    "contribution": round(e.contribution, 6),
                }
                for e in result.explanations
            ],
        }
        if result.best_region is not None:
            row["bestRegion"] = {"iri": result.best_region.value}
        return row

    def _regions_on(self, target: Iri) -> list:
        rows = []
        for t in self.store.match(None, vocab.ON_TARGET, target):
            region = t.subject
            if not self.store.match(region, vocab.RDF_TYPE, vocab.REGION):
                continue
            geometry = self.store.match(region, vocab.GEOMETRY, None)[0].object.value
            rows.append({"iri": region.value, "geometry": geometry, "target": {"iri": target.value}})
        rows.sort(key=lambda r: r["iri"])
        return rows

    def series_of_patient(self, patient: Iri, organ_labels) -> list:
        series_rows = []
        for st in self.store.match(patient, vocab.HAS_STUDY, None):
            study = st.object
            dates = self.store.match(study, vocab.STUDY_DATE, None)
            study_date = dates[0].object.value if dates else ""
            for se in self.store.match(study, vocab.HAS_SERIES, None):
                series = se.object

                def literal(predicate):
                    hits = self.store.match(series, predicate, None)
                    return hits[0].object.value if hits else ""

                images = sorted(
                    t.object for t in self.store.match(series, vocab.HAS_IMAGE, None)
                )
                regions = self._regions_on(series)
                for image in images:
                    regions.extend(self._regions_on(image))
                series_rows.append(
                    {
                        "iri": series.value,
                        "studyDate": study_date,
                        "description": literal(vocab.SERIES_DESCRIPTION),
                        "bodyPart": literal(vocab.BODY_PART),
                        "modality": literal(vocab.MODALITY),
                        "images": [{"iri": img.value} for img in images],
                        "regions": regions,
                    }
                )

        def sort_key(row):
            rank = len(organ_labels)
            hay = (row["bodyPart"] + " " + row["description"]).lower()
            for idx, label in enumerate(organ_labels):
                if label.lower() in hay:
                    rank = idx
                    break
            return (rank, row["studyDate"], row["iri"])

        series_rows.sort(key=sort_key)
        return series_rows
