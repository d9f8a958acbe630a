"""Image-region annotations: geometry, three concept dimensions, confidence,
provenance, and supersession chains.

Annotations are append-only. Editing means superseding: the old annotation
stays queryable and gains a supersededBy edge. Every mutation is mirrored to
an optional append-only sink so a store can be reproduced by log replay.
"""

import math
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import vocab
from .errors import ConflictError, NotFoundError, ValidationError
from .triples import Iri, Literal, Triple, TripleStore

ORIGINS = ("manual", "automatic")

# the seven organs the mock volume parser segments
MOCK_ORGANS = (
    "urn:fma:LeftLung",
    "urn:fma:RightLung",
    "urn:fma:Liver",
    "urn:fma:Spleen",
    "urn:fma:LeftKidney",
    "urn:fma:RightKidney",
    "urn:fma:Heart",
)

# the nineteen body landmarks it detects
MOCK_LANDMARKS = (
    "urn:fma:Trachea",
    "urn:fma:Aorta",
    "urn:fma:Heart",
    "urn:fma:LeftLung",
    "urn:fma:RightLung",
    "urn:fma:Liver",
    "urn:fma:Spleen",
    "urn:fma:LeftKidney",
    "urn:fma:RightKidney",
    "urn:fma:Stomach",
    "urn:fma:Pancreas",
    "urn:fma:Colon",
    "urn:fma:SmallIntestine",
    "urn:fma:Esophagus",
    "urn:fma:VertebralColumn",
    "urn:fma:Mediastinum",
    "urn:fma:CoronaryArtery",
    "urn:fma:RightCoronaryArtery",
    "urn:fma:LeftCoronaryArtery",
)


def utc_now():
    return datetime.now(timezone.utc)


def _stamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --- geometry ----------------------------------------------------------------


@dataclass(frozen=True)
class Rectangle:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("rectangle extents must be strictly positive")

    def serialize(self):
        return f"rect:{_num(self.x)},{_num(self.y)},{_num(self.width)},{_num(self.height)}"

    def centroid(self):
        return (self.x + self.width / 2, self.y + self.height / 2, 0.0)


@dataclass(frozen=True)
class Polygon:
    vertices: tuple  # ((x, y), ...) at least three, all distinct

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValidationError("polygon needs at least three vertices")
        if len(set(self.vertices)) != len(self.vertices):
            raise ValidationError("polygon vertices must be distinct")

    def serialize(self):
        return "poly:" + ";".join(f"{_num(x)},{_num(y)}" for x, y in self.vertices)

    def centroid(self):
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return (sum(xs) / len(xs), sum(ys) / len(ys), 0.0)


@dataclass(frozen=True)
class Box3d:
    x: float
    y: float
    z: float
    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        if self.dx <= 0 or self.dy <= 0 or self.dz <= 0:
            raise ValidationError("box extents must be strictly positive")

    def serialize(self):
        return "box3d:" + ",".join(
            _num(v) for v in (self.x, self.y, self.z, self.dx, self.dy, self.dz)
        )

    def centroid(self):
        return (self.x + self.dx / 2, self.y + self.dy / 2, self.z + self.dz / 2)


def _num(v):
    return f"{int(v)}" if float(v).is_integer() else f"{v}"


def parse_geometry(text: str):
    kind, _, body = text.partition(":")
    try:
        if kind == "rect":
            return Rectangle(*(float(p) for p in body.split(",")))
        if kind == "poly":
            points = tuple(
                tuple(float(c) for c in pair.split(",")) for pair in body.split(";")
            )
            return Polygon(points)
        if kind == "box3d":
            return Box3d(*(float(p) for p in body.split(",")))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad geometry literal {text!r}: {exc}") from exc
    raise ValidationError(f"unknown geometry kind {kind!r}")


# --- records -------------------------------------------------------------------


@dataclass(frozen=True)
class ImageRegion:
    id: Iri
    target: Iri
    geometry: object


@dataclass(frozen=True)
class Provenance:
    user: str
    timestamp: str  # ISO-8601 UTC, seconds precision
    origin: str


@dataclass(frozen=True)
class ImageAnnotation:
    id: Iri
    region: Iri
    anatomy: Iri | None
    visual: tuple
    disease: Iri | None
    free_text_value: str | None
    free_text_comment: str | None
    confidence: float
    provenance: Provenance
    superseded_by: Iri | None = None


@dataclass(frozen=True)
class Landmark:
    id: Iri
    name: Iri  # anatomy concept
    position: tuple
    volume: Iri
    confidence: float


@dataclass
class AnnotationPayload:
    anatomy: Iri | None = None
    visual: list = field(default_factory=list)
    disease: Iri | None = None
    free_text_value: str | None = None
    free_text_comment: str | None = None
    confidence: float = 1.0
    origin: str = "manual"
    user: str | None = None


class AnnotationService:
    """All region/annotation/landmark mutations against one store.

    ``log`` is called with each batch of new triples; hand it a file
    appender to get the durable annotation log.
    """

    def __init__(self, store: TripleStore, minter=None, clock=utc_now, user="clinician", log=None):
        self.store = store
        self.minter = minter or vocab.Minter()
        self.clock = clock
        self.user = user
        self.log = log
        self._mutate = threading.Lock()

    # -- helpers --

    def _commit(self, triples):
        with self._mutate:
            self.store.insert_all(triples)
            if self.log is not None:
                self.log(triples)

    def _exists(self, iri, rdf_type):
        return bool(self.store.match(iri, vocab.RDF_TYPE, rdf_type))

    def _target_exists(self, iri):
        return self._exists(iri, vocab.IMAGE) or self._exists(iri, vocab.SERIES)

    def _check_dimension(self, iri, wanted, slot):
        from .ontology import concept_ref

        try:
            ref = concept_ref(self.store, iri)
        except NotFoundError as exc:
            raise ValidationError(f"{slot}: {exc}") from exc
        if ref.source != wanted:
            raise ValidationError(
                f"{slot} slot needs a {wanted} concept, got {ref.source} ({iri})"
            )

    # -- regions --

    def create_region(self, target: Iri, geometry) -> ImageRegion:
        """Store a region on an existing image or series."""
        if not isinstance(geometry, (Rectangle, Polygon, Box3d)):
            raise ValidationError(f"unsupported geometry {type(geometry).__name__}")
        is_volume = isinstance(geometry, Box3d)
        if is_volume:
            if not self._exists(target, vocab.SERIES):
                raise NotFoundError(f"3D regions need an existing series, not {target}")
        elif not self._target_exists(target):
            raise NotFoundError(f"unknown region target: {target}")
        region_id = self.minter.mint("region")
        triples = [
            Triple(region_id, vocab.RDF_TYPE, vocab.REGION),
            Triple(region_id, vocab.ON_TARGET, target),
            Triple(region_id, vocab.GEOMETRY, Literal(geometry.serialize())),
        ]
        if is_volume:
            triples.append(Triple(region_id, vocab.RDF_TYPE, vocab.VOLUME_REGION))
        self._commit(triples)
        return ImageRegion(region_id, target, geometry)

    def get_region(self, region_id: Iri) -> ImageRegion:
        if not self._exists(region_id, vocab.REGION):
            raise NotFoundError(f"unknown region: {region_id}")
        target = self.store.match(region_id, vocab.ON_TARGET, None)[0].object
        geom = parse_geometry(
            self.store.match(region_id, vocab.GEOMETRY, None)[0].object.value
        )
        return ImageRegion(region_id, target, geom)

    # -- annotations --

    def annotate(self, region_id: Iri, payload: AnnotationPayload):
        """Store an annotation; returns (record, confirmation text).

        The confirmation names the finding and its anatomical context:
        the annotation's own anatomy concept if given, else the anatomy of
        the nearest landmark or annotated region on the same target, else
        'unspecified location'.
        """
        region = self.get_region(region_id)
        if not 0.0 <= payload.confidence <= 1.0:
            raise ValidationError(f"confidence {payload.confidence} outside [0, 1]")
        if payload.origin not in ORIGINS:
            raise ValidationError(f"origin must be one of {ORIGINS}")
        has_content = (
            payload.anatomy
            or payload.visual
            or payload.disease
            or payload.free_text_value
            or payload.free_text_comment
        )
        if not has_content:
            raise ValidationError("annotation payload is empty")
        if payload.anatomy:
            self._check_dimension(payload.anatomy, "anatomy", "anatomy")
        for v in payload.visual:
            self._check_dimension(v, "imaging", "visual")
        if payload.disease:
            self._check_dimension(payload.disease, "disease", "disease")

        ann_id = self.minter.mint("annotation")
        stamp = _stamp(self.clock())
        user = payload.user or self.user
        triples = [
            Triple(ann_id, vocab.RDF_TYPE, vocab.ANNOTATION),
            Triple(ann_id, vocab.ON_REGION, region_id),
            Triple(ann_id, vocab.CONFIDENCE, Literal(str(float(payload.confidence)), vocab.XSD_DOUBLE)),
            Triple(ann_id, vocab.ANNOTATED_BY, Literal(user)),
            Triple(ann_id, vocab.ANNOTATED_AT, Literal(stamp, vocab.XSD_DATETIME)),
            Triple(ann_id, vocab.ORIGIN, Literal(payload.origin)),
        ]
        if payload.anatomy:
            triples.append(Triple(ann_id, vocab.ANATOMY, payload.anatomy))
        for v in payload.visual:
            triples.append(Triple(ann_id, vocab.VISUAL, v))
        if payload.disease:
            triples.append(Triple(ann_id, vocab.DISEASE, payload.disease))
        if payload.free_text_value:
            triples.append(Triple(ann_id, vocab.FREE_TEXT_VALUE, Literal(payload.free_text_value)))
        if payload.free_text_comment:
            triples.append(Triple(ann_id, vocab.FREE_TEXT_COMMENT, Literal(payload.free_text_comment)))
        self._commit(triples)

        record = self._annotation_record(ann_id)
        return record, self._confirmation(region, payload)

    def _confirmation(self, region: ImageRegion, payload: AnnotationPayload) -> str:
        from .ontology import label_of

        if payload.disease:
            finding = label_of(self.store, payload.disease)
        elif payload.visual:
            finding = label_of(self.store, payload.visual[0])
        elif payload.free_text_value:
            finding = payload.free_text_value
        else:
            finding = payload.free_text_comment
        if payload.anatomy:
            context = label_of(self.store, payload.anatomy).lower()
        else:
            anchor = self._nearest_anatomy(region)
            context = label_of(self.store, anchor).lower() if anchor else "unspecified location"
        return f"{finding} in {context}"

    def _nearest_anatomy(self, region: ImageRegion) -> Iri | None:
        """Anatomy of the closest landmark or anatomy-bearing region
        annotation sharing this region's target."""
        here = region.geometry.centroid()
        candidates = []  # (distance, id.n3(), anatomy iri)
        for lm in self.landmarks(volume=region.target):
            candidates.append((_dist(here, lm.position), lm.id.n3(), lm.name))
        for t in self.store.match(None, vocab.ON_TARGET, region.target):
            other_id = t.subject
            if other_id == region.id or not self._exists(other_id, vocab.REGION):
                continue
            other = self.get_region(other_id)
            for ann in self.store.match(None, vocab.ON_REGION, other_id):
                for a in self.store.match(ann.subject, vocab.ANATOMY, None):
                    candidates.append(
                        (_dist(here, other.geometry.centroid()), ann.subject.n3(), a.object)
                    )
        if not candidates:
            return None
        candidates.sort(key=lambda c: (c[0], c[1]))
        return candidates[0][2]

    def _annotation_record(self, ann_id: Iri) -> ImageAnnotation:
        def one(predicate):
            hits = self.store.match(ann_id, predicate, None)
            return hits[0].object if hits else None

        superseded = one(vocab.SUPERSEDED_BY)
        return ImageAnnotation(
            id=ann_id,
            region=one(vocab.ON_REGION),
            anatomy=one(vocab.ANATOMY),
            visual=tuple(t.object for t in self.store.match(ann_id, vocab.VISUAL, None)),
            disease=one(vocab.DISEASE),
            free_text_value=getattr(one(vocab.FREE_TEXT_VALUE), "value", None),
            free_text_comment=getattr(one(vocab.FREE_TEXT_COMMENT), "value", None),
            confidence=float(one(vocab.CONFIDENCE).value),
            provenance=Provenance(
                user=one(vocab.ANNOTATED_BY).value,
                timestamp=one(vocab.ANNOTATED_AT).value,
                origin=one(vocab.ORIGIN).value,
            ),
            superseded_by=superseded,
        )

    def supersede(self, old_id: Iri, payload: AnnotationPayload) -> ImageAnnotation:
        """Replace an annotation, keeping the old one queryable."""
        if not self._exists(old_id, vocab.ANNOTATION):
            raise NotFoundError(f"unknown annotation: {old_id}")
        if self.store.match(old_id, vocab.SUPERSEDED_BY, None):
            raise ConflictError(f"annotation {old_id} is already superseded")
        region_id = self.store.match(old_id, vocab.ON_REGION, None)[0].object
        record, _ = self.annotate(region_id, payload)
        self._commit([Triple(old_id, vocab.SUPERSEDED_BY, record.id)])
        return record

    def list_annotations(
        self,
        patient: Iri | None = None,
        study: Iri | None = None,
        region: Iri | None = None,
        origin: str | None = None,
        include_superseded: bool = False,
    ) -> list[ImageAnnotation]:
        """Annotations matching every given filter, ordered by timestamp
        then id. Patient/study filters resolve through the DICOM hierarchy."""
        out = []
        for t in self.store.match(None, vocab.RDF_TYPE, vocab.ANNOTATION):
            record = self._annotation_record(t.subject)
            if not include_superseded and record.superseded_by is not None:
                continue
            if region and record.region != region:
                continue
            if origin and record.provenance.origin != origin:
                continue
            if (patient or study) and not self._in_scope(record.region, patient, study):
                continue
            out.append(record)
        out.sort(key=lambda r: (r.provenance.timestamp, r.id))
        return out

    def _in_scope(self, region_id, patient, study) -> bool:
        target = self.store.match(region_id, vocab.ON_TARGET, None)
        if not target:
            return False
        node = target[0].object
        if self._exists(node, vocab.IMAGE):
            parents = self.store.match(None, vocab.HAS_IMAGE, node)
            if not parents:
                return False
            node = parents[0].subject
        found_study = self.store.match(None, vocab.HAS_SERIES, node)
        if not found_study:
            return False
        study_node = found_study[0].subject
        if study and study_node != study:
            return False
        if patient:
            owners = self.store.match(None, vocab.HAS_STUDY, study_node)
            if not owners or owners[0].subject != patient:
                return False
        return True

    # -- landmarks ---

    def add_landmark(self, volume: Iri, name: Iri, position, confidence) -> Landmark:
        if not self._exists(volume, vocab.SERIES):
            raise NotFoundError(f"unknown volume: {volume}")
        if not 0.0 <= confidence <= 1.0:
            raise ValidationError(f"confidence {confidence} outside [0, 1]")
        self._check_dimension(name, "anatomy", "landmark name")
        lm_id = self.minter.mint("landmark")
        x, y, z = position
        triples = [
            Triple(lm_id, vocab.RDF_TYPE, vocab.LANDMARK),
            Triple(lm_id, vocab.ON_TARGET, volume),
            Triple(lm_id, vocab.ANATOMY, name),
            Triple(lm_id, vocab.POSITION, Literal(f"{_num(x)},{_num(y)},{_num(z)}")),
            Triple(lm_id, vocab.CONFIDENCE, Literal(str(float(confidence)), vocab.XSD_DOUBLE)),
        ]
        self._commit(triples)
        return Landmark(lm_id, name, (x, y, z), volume, confidence)

    def landmarks(self, volume: Iri | None = None) -> list[Landmark]:
        out = []
        for t in self.store.match(None, vocab.RDF_TYPE, vocab.LANDMARK):
            lm_id = t.subject
            vol = self.store.match(lm_id, vocab.ON_TARGET, None)[0].object
            if volume and vol != volume:
                continue
            name = self.store.match(lm_id, vocab.ANATOMY, None)[0].object
            pos = tuple(
                float(c)
                for c in self.store.match(lm_id, vocab.POSITION, None)[0].object.value.split(",")
            )
            conf = float(self.store.match(lm_id, vocab.CONFIDENCE, None)[0].object.value)
            out.append(Landmark(lm_id, name, pos, vol, conf))
        out.sort(key=lambda lm: lm.id)
        return out

    # -- mock volume parser ---

    def mock_auto_annotate(self, volume: Iri, seed: int):
        """Deterministic stand-in for the trained volume parser: emits
        exactly 19 landmarks and 7 organ-level annotations, positions and
        confidences derived from the seed. Counts are the contract; no
        accuracy is claimed."""
        if not self._exists(volume, vocab.SERIES):
            raise NotFoundError(f"unknown volume: {volume}")
        rng = random.Random(seed)
        minter = vocab.Minter(rng)
        original_minter = self.minter
        self.minter = minter
        try:
            landmarks = []
            for name in MOCK_LANDMARKS:
                position = (rng.randrange(512), rng.randrange(512), rng.randrange(400))
                confidence = round(0.5 + rng.random() * 0.4999, 4)
                landmarks.append(self.add_landmark(volume, Iri(name), position, confidence))
            organ_annotations = []
            for organ in MOCK_ORGANS:
                box = Box3d(
                    rng.randrange(400),
                    rng.randrange(400),
                    rng.randrange(300),
                    rng.randrange(20, 112),
                    rng.randrange(20, 112),
                    rng.randrange(20, 100),
                )
                region = self.create_region(volume, box)
                payload = AnnotationPayload(
                    anatomy=Iri(organ),
                    confidence=round(0.5 + rng.random() * 0.4999, 4),
                    origin="automatic",
                    user="volume-parser",
                )
                record, _ = self.annotate(region.id, payload)
                organ_annotations.append(record)
        finally:
            self.minter = original_minter
        return {"landmarks": landmarks, "organAnnotations": organ_annotations}


def _dist(a, b):
    return math.sqrt(sum((ai - bi) ** 2 for ai, bi in zip(a, b)))


def file_log(path):
    """Append-only triple-line sink; flushes and fsyncs per batch."""
    import os

    def append(triples):
        with open(path, "a", encoding="utf-8") as fh:
            for t in sorted(triples, key=Triple.n3):
                fh.write(t.n3() + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    return append
