"""Process entry point: persistence wiring, HTTP/JSON API, sessions, and
the one-way event stream that pushes display directives to the UI.

Mutations are durable through two channels: annotation-layer operations are
appended to ``annotations.log`` as triple lines, and DICOM ingests rewrite
``snapshot.ttl``. Start-up loads ontologies + snapshot, then replays the
log; set semantics make the replay idempotent.
"""

import json
import queue
import threading
import time
import uuid
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import vocab
from .annotations import AnnotationPayload, AnnotationService, file_log, parse_geometry, utc_now
from .config import Config
from .dialogue import DialogueEngine, DialogueState, PointingEvent
from .dicom import ingest_directory
from .errors import ConflictError, MedicoError, NotFoundError, ParseError
from .ontology import load_bundled, neighbors, label_of
from .search import RankParams, build_query, semantic_search
from .seed import seed_demo
from .triples import Iri, Literal, TripleStore, load, snapshot

SNAPSHOT_FILE = "snapshot.ttl"
LOG_FILE = "annotations.log"
ONTOLOGY_DIR = "ontologies"


class Session:
    def __init__(self, session_id):
        self.id = session_id
        self.state = DialogueState(session_id)
        self.subscribers: list[queue.Queue] = []
        self.last_active = time.monotonic()
        self.lock = threading.Lock()  # turns within a session run serially

    def publish(self, event: dict):
        for q in list(self.subscribers):
            q.put_nowait(event)


class SessionManager:
    def __init__(self, ttl_seconds: float):
        self.ttl = ttl_seconds
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def get_or_create(self, session_id: str | None) -> Session:
        with self._lock:
            self._expire()
            if not session_id:
                session_id = uuid.uuid4().hex
            session = self._sessions.get(session_id)
            if session is None:
                session = Session(session_id)
                self._sessions[session_id] = session
            session.last_active = time.monotonic()
            return session

    def _expire(self):
        deadline = time.monotonic() - self.ttl
        for sid in [s for s, sess in self._sessions.items() if sess.last_active < deadline]:
            del self._sessions[sid]


class Application:
    """Store + services + sessions behind the HTTP surface."""

    def __init__(self, config: Config, clock=utc_now):
        self.config = config
        self.clock = clock
        self.store = TripleStore()
        data_dir = config.data_dir
        try:
            data_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise MedicoError(
                f"data dir {data_dir} is not creatable ({exc}); "
                "point data_dir at a writable location"
            ) from exc

        ontology_dir = data_dir / ONTOLOGY_DIR
        if ontology_dir.is_dir() and any(ontology_dir.glob("*.ttl")):
            for path in sorted(ontology_dir.glob("*.ttl")):
                load(path, self.store)
        else:
            load_bundled(self.store)

        snapshot_path = data_dir / SNAPSHOT_FILE
        log_path = data_dir / LOG_FILE
        fresh = not snapshot_path.exists()
        if not fresh:
            load(snapshot_path, self.store)
        self.seeded_refs = None
        log_sink = file_log(log_path)
        if fresh and config.demo_seed is not None:
            self.seeded_refs = seed_demo(
                self.store,
                demo_seed=config.demo_seed,
                log=log_sink,
                reference_date=self.clock().date(),
            )
            snapshot(self.store, snapshot_path)
        if log_path.exists():
            load(log_path, self.store)

        self.annotations = AnnotationService(
            self.store, clock=self.clock, user=config.user, log=log_sink
        )
        self.rank_params = RankParams(decay=config.decay, max_depth=config.expansion_depth)
        self.engine = DialogueEngine(
            self.store,
            annotation_service=self.annotations,
            rank_params=self.rank_params,
            clock=self.clock,
            fusion_window=config.fusion_window_seconds,
        )
        self.sessions = SessionManager(config.session_ttl_seconds)
        self._snapshot_path = snapshot_path

    def rewrite_snapshot(self):
        snapshot(self.store, self._snapshot_path)

    def resolve_patient(self, key: str) -> Iri:
        if key.startswith("urn:"):
            iri = Iri(key)
        else:
            iri = vocab.entity_iri("patient", key)
        if not self.store.match(iri, vocab.RDF_TYPE, vocab.PATIENT):
            raise NotFoundError(f"unknown patient {key!r}")
        return iri

    def patients_payload(self):
        rows = []
        for t in sorted(self.store.match(None, vocab.RDF_TYPE, vocab.PATIENT)):
            patient = t.subject
            def literal(predicate):
                hits = self.store.match(patient, predicate, None)
                return hits[0].object.value if hits else None

            rows.append(
                {
                    "iri": patient.value,
                    "patientId": literal(vocab.PATIENT_ID),
                    "name": self.engine._display_name(patient),
                    "studies": len(self.store.match(patient, vocab.HAS_STUDY, None)),
                }
            )
        return rows


# --- wire models -----------------------------------------------------------


class PointingIn(BaseModel):
    targetKind: str
    targetId: str
    timestamp: str | None = None


class TurnRequest(BaseModel):
    sessionId: str | None = None
    text: str = ""
    pointing: list[PointingIn] = Field(default_factory=list)


class RegionRequest(BaseModel):
    target: str
    geometry: str  # micro-format: rect:x,y,w,h | poly:x,y;... | box3d:...


class AnnotationRequest(BaseModel):
    region: str
    anatomy: str | None = None
    visual: list[str] = Field(default_factory=list)
    disease: str | None = None
    freeTextValue: str | None = None
    freeTextComment: str | None = None
    confidence: float = 1.0
    user: str | None = None


class IngestRequest(BaseModel):
    path: str


def _parse_timestamp(value: str | None, fallback: datetime) -> datetime:
    if not value:
        return fallback
    text = value.replace("Z", "+00:00")
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ParseError(f"bad timestamp {value!r}: {exc}") from exc
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed


def _annotation_json(record):
    return {
        "iri": record.id.value,
        "region": {"iri": record.region.value},
        "anatomy": record.anatomy.value if record.anatomy else None,
        "visual": [v.value for v in record.visual],
        "disease": record.disease.value if record.disease else None,
        "freeTextValue": record.free_text_value,
        "freeTextComment": record.free_text_comment,
        "confidence": record.confidence,
        "provenance": {
            "user": record.provenance.user,
            "timestamp": record.provenance.timestamp,
            "origin": record.provenance.origin,
        },
        "supersededBy": record.superseded_by.value if record.superseded_by else None,
    }


def create_app(config: Config | None = None, clock=utc_now) -> FastAPI:
    config = config or Config()
    application = Application(config, clock=clock)
    app = FastAPI(title="medico", version="0.1.0")
    app.state.medico = application
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(MedicoError)
    async def medico_handler(request: Request, exc: MedicoError):
        status = 400
        if isinstance(exc, NotFoundError):
            status = 404
        elif isinstance(exc, ConflictError):
            status = 409
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "triples": len(application.store)}

    @app.get("/patients")
    def patients():
        return application.patients_payload()

    @app.get("/patients/{key}/findings")
    def patient_findings(key: str):
        patient = application.resolve_patient(key)
        return application.engine.findings_of(patient)

    @app.get("/patients/{key}/images")
    def patient_images(key: str):
        patient = application.resolve_patient(key)
        return {
            "patient": {"iri": patient.value, "name": application.engine._display_name(patient)},
            "series": application.engine.series_of_patient(patient, []),
        }

    @app.post("/regions")
    def create_region(body: RegionRequest):
        geometry = parse_geometry(body.geometry)
        region = application.annotations.create_region(Iri(body.target), geometry)
        return {
            "iri": region.id.value,
            "target": {"iri": region.target.value},
            "geometry": region.geometry.serialize(),
        }

    @app.post("/annotations")
    def create_annotation(body: AnnotationRequest):
        payload = AnnotationPayload(
            anatomy=Iri(body.anatomy) if body.anatomy else None,
            visual=[Iri(v) for v in body.visual],
            disease=Iri(body.disease) if body.disease else None,
            free_text_value=body.freeTextValue,
            free_text_comment=body.freeTextComment,
            confidence=body.confidence,
            user=body.user,
        )
        record, confirmation = application.annotations.annotate(Iri(body.region), payload)
        return {"annotation": _annotation_json(record), "confirmation": confirmation}

    @app.get("/annotations")
    def list_annotations(
        patient: str | None = None,
        region: str | None = None,
        origin: str | None = None,
        includeSuperseded: bool = False,
    ):
        records = application.annotations.list_annotations(
            patient=application.resolve_patient(patient) if patient else None,
            region=Iri(region) if region else None,
            origin=origin,
            include_superseded=includeSuperseded,
        )
        return [_annotation_json(r) for r in records]

    @app.get("/search")
    def search(
        terms: str = "",
        from_: str | None = Query(None, alias="from"),
        to: str | None = None,
    ):
        term_list = [t for t in terms.split(",") if t.strip()]
        date_range = None
        if from_ or to:
            date_range = (from_ or "00000101", to or "99991231")
        query, unknown = build_query(application.store, term_list, date_range=date_range)
        results = semantic_search(application.store, query, application.rank_params)
        return {
            "results": [application.engine.result_row(r) for r in results],
            "unknownTerms": unknown,
        }

    @app.get("/ontology/{iri}/neighbors")
    def ontology_neighbors(iri: str):
        hood = neighbors(application.store, Iri(iri))

        def listing(pairs):
            return [{"iri": i.value, "label": label} for i, label in pairs]

        return {
            "concept": {"iri": hood.concept.iri.value, "source": hood.concept.source},
            "labels": hood.labels,
            "parents": listing(hood.parents),
            "children": listing(hood.children),
            "wholes": listing(hood.wholes),
            "parts": listing(hood.parts),
        }

    @app.post("/ingest")
    def ingest(body: IngestRequest):
        report = ingest_directory(body.path, application.store)
        application.rewrite_snapshot()
        return {
            "filesSeen": report.files_seen,
            "accepted": report.accepted,
            "rejected": [{"path": p, "reason": r} for p, r in report.rejected],
            "patients": report.patients,
            "studies": report.studies,
            "series": report.series,
            "images": report.images,
        }

    @app.post("/dialogue/turn")
    def dialogue_turn(body: TurnRequest):
        session = application.sessions.get_or_create(body.sessionId)
        now = application.clock()
        gestures = [
            PointingEvent(
                target_kind=p.targetKind,
                target_id=Iri(p.targetId),
                timestamp=_parse_timestamp(p.timestamp, now),
            )
            for p in body.pointing
        ]
        try:
            with session.lock:
                _, response = application.engine.turn(session.state, body.text, gestures, now=now)
        except MedicoError:
            raise
        except Exception:  # noqa: BLE001 - surface as apologetic response
            return JSONResponse(
                status_code=500,
                content={
                    "sessionId": session.id,
                    "speakText": "Sorry, something went wrong while processing that turn.",
                    "directives": [],
                },
            )
        payload = {"sessionId": session.id, **response.as_dict()}
        for directive in payload["directives"]:
            session.publish({"event": "directive", **directive})
        session.publish({"event": "speak", "text": response.speak_text})
        return payload

    @app.get("/events/{session_id}")
    def events(session_id: str):
        session = application.sessions.get_or_create(session_id)
        q: queue.Queue = queue.Queue()
        session.subscribers.append(q)

        def stream():
            try:
                yield json.dumps({"event": "connected", "sessionId": session_id}) + "\n"
                while True:
                    try:
                        event = q.get(timeout=15.0)
                    except queue.Empty:
                        yield json.dumps({"event": "ping"}) + "\n"
                        continue
                    yield json.dumps(event) + "\n"
            finally:
                if q in session.subscribers:
                    session.subscribers.remove(q)

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    return app


def serve(config: Config):
    """Blocking entry point used by the CLI."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
