"""Command line: serve, ingest, query, demo-script."""

import argparse
import difflib
import random
import sys
import tempfile
from datetime import timedelta
from pathlib import Path

from . import vocab
from .config import Config, load_config
from .dialogue import PointingEvent
from .errors import MedicoError, UnsupportedFeatureError
from .seed import DEMO_REFERENCE
from .sparql import evaluate, parse_query
from .triples import Iri


_KEEP = object()


def _build_config(args, demo_seed=_KEEP) -> Config:
    config = load_config(args.config) if getattr(args, "config", None) else Config()
    if getattr(args, "data_dir", None):
        config.data_dir = Path(args.data_dir)
    if getattr(args, "port", None):
        config.port = args.port
    if demo_seed is not _KEEP:
        config.demo_seed = demo_seed
    return config


def cmd_serve(args) -> int:
    from .server import serve

    config = _build_config(args)
    try:
        serve(config)
    except MedicoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_ingest(args) -> int:
    from .dicom import ingest_directory
    from .server import Application

    config = _build_config(args, demo_seed=None)
    try:
        application = Application(config)
        report = ingest_directory(args.path, application.store)
        application.rewrite_snapshot()
    except MedicoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(report.summary())
    return 0


def cmd_query(args) -> int:
    from .server import Application

    config = _build_config(args, demo_seed=None)
    try:
        text = Path(args.file).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.file}: {exc}", file=sys.stderr)
        return 1
    try:
        application = Application(config)
        query = parse_query(text, application.store.prefixes)
        solutions = evaluate(application.store, query)
    except UnsupportedFeatureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MedicoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print("\t".join(f"?{v}" for v in solutions.variables))
    for binding in solutions.bindings:
        print("\t".join(binding[v].n3() for v in solutions.variables))
    return 0


# --- demo script -----------------------------------------------------------

# Reference dialogue transcript the demo must reproduce exactly: the five
# spoken clinician turns plus the region click between turns 2 and 3.
EXPECTED_TRANSCRIPT = """\
== turn 1 ==
R: Show me my patient records, lymphoma cases, for this week.
[intent] ShowRecords
S: Showing 1 matching patient record.
[directives] open/PatientSearch
[results] Anna Schmidt
== turn 2 ==
R: (points at the record of Anna Schmidt) Open the images, internal organs: lungs, liver, then spleen and colon of this patient.
[intent] OpenImages
[referent] patient=Anna Schmidt
S: Opening 15 images of Anna Schmidt: lung, liver, spleen, colon.
[directives] open/ImageAnnotation, rearrange/Background
== turn 3 ==
R: (clicks the region on the fifth image)
[intent] SelectRegion
[referent] region=rect:210,140,42,36
S: Focusing on the selected region.
[directives] rearrange/ImageAnnotation
== turn 4 ==
R: (points at the region) This lymph node here, annotate Hodgkin-Lymphoma.
[intent] Annotate
[referent] region=rect:210,140,42,36
S: Hodgkin lymphoma in lymph node
[directives] highlight/ImageAnnotation
[label] Hodgkin lymphoma (C81)
[stored] C81 annotations on the clicked region: 1
== turn 5 ==
R: Find similar lesions with characteristics: hyper-intense and/or coarse texture.
[intent] FindSimilar
S: Found 3 similar cases; best match Peter Maier.
[directives] open/PatientSearch, open/ImageAnnotation
[results] Peter Maier, Anna Schmidt, Hans Huber
== turn 6 ==
R: Get the findings of this patient
[intent] GetFindings
[referent] patient=Peter Maier
S: Here are the findings of Peter Maier.
[directives] open/PatientFinding
[terms:anatomy] Lymph node
[terms:imaging] coarse texture, hyper-intense
[terms:disease] Hodgkin lymphoma
[findings] Hodgkin lymphoma, coarse texture, hyper-intense in lymph node.
"""


def run_demo_script(data_dir=None, demo_seed=2010, out=print) -> str:
    """Execute the five scripted turns headlessly; returns the transcript."""
    from .server import Application

    if data_dir is None:
        data_dir = Path(tempfile.mkdtemp(prefix="medico-demo-"))
    config = Config(data_dir=Path(data_dir), demo_seed=demo_seed)
    clock = lambda: DEMO_REFERENCE  # noqa: E731 - injected demo clock
    application = Application(config, clock=clock)
    if application.seeded_refs is None:
        raise MedicoError(
            f"data dir {data_dir} already holds a store; demo-script needs a fresh one"
        )
    # deterministic minting for annotations created during the script
    application.annotations.minter = vocab.Minter(random.Random(demo_seed + 1))
    refs = application.seeded_refs
    engine = application.engine
    session = application.sessions.get_or_create("demo")
    state = session.state
    lines = []

    def emit(text):
        lines.append(text)
        out(text)

    def describe_referent(kind, iri_value):
        iri = Iri(iri_value)
        if kind == "patient":
            return engine._display_name(iri)
        if kind == "region":
            return engine.annotations.get_region(iri).geometry.serialize()
        return iri_value

    turn_no = 0

    def run_turn(text, gestures=(), note=None):
        nonlocal turn_no, state
        turn_no += 1
        now = DEMO_REFERENCE + timedelta(seconds=30.0 * turn_no)
        events = [
            PointingEvent(kind, refs[ref_key], now + timedelta(seconds=offset))
            for kind, ref_key, offset in gestures
        ]
        emit(f"== turn {turn_no} ==")
        prefix = f"({note}) " if note else ""
        emit(f"R: {prefix}{text}".rstrip())
        state, response = engine.turn(state, text, events, now=now)
        act = state.last_acts[-1]
        emit(f"[intent] {act.intent}")
        for feature in sorted(act.slots.features):
            node = act.slots.features[feature]
            if node.type.endswith("-referent"):
                iri_node = node.features.get("IRI")
                if iri_node is not None:
                    kind = node.type.removesuffix("-referent")
                    emit(f"[referent] {feature.lower()}={describe_referent(kind, iri_node.atom)}")
        emit(f"S: {response.speak_text}")
        if response.directives:
            emit("[directives] " + ", ".join(f"{d.action}/{d.panel}" for d in response.directives))
        for directive in response.directives:
            payload = directive.payload
            if "results" in payload:
                names = ", ".join(row["name"] for row in payload["results"])
                emit(f"[results] {names or '(none)'}")
            if "label" in payload:
                chip = payload["label"]
                emit(f"[label] {chip['label']} ({chip['code']})")
            if "termGroups" in payload:
                groups = payload["termGroups"]
                for dimension in ("anatomy", "imaging", "disease"):
                    labels = ", ".join(g["label"] for g in groups[dimension])
                    emit(f"[terms:{dimension}] {labels}")
                emit("[findings] " + " / ".join(payload["text"].split("\n")))
        return response

    run_turn("Show me my patient records, lymphoma cases, for this week.")
    run_turn(
        "Open the images, internal organs: lungs, liver, then spleen and colon of this patient.",
        gestures=[("patient", "patientA", -1.0)],
        note="points at the record of Anna Schmidt",
    )
    run_turn("", gestures=[("region", "lymphRegion", -0.5)], note="clicks the region on the fifth image")
    run_turn(
        "This lymph node here, annotate Hodgkin-Lymphoma.",
        gestures=[("region", "lymphRegion", -0.2)],
        note="points at the region",
    )
    # assert the annotation the script created
    annotations = engine.annotations.list_annotations(region=refs["lymphRegion"])
    created = [a for a in annotations if a.disease == Iri("urn:icd10:C81")]
    emit(f"[stored] C81 annotations on the clicked region: {len(created)}")
    run_turn("Find similar lesions with characteristics: hyper-intense and/or coarse texture.")
    run_turn("Get the findings of this patient")
    return "\n".join(lines) + "\n"


def cmd_demo_script(args) -> int:
    captured = []
    try:
        transcript = run_demo_script(
            data_dir=args.data_dir, demo_seed=args.seed, out=captured.append
        )
    except MedicoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(transcript, end="")
    if transcript != EXPECTED_TRANSCRIPT:
        print("\ntranscript mismatch:", file=sys.stderr)
        diff = difflib.unified_diff(
            EXPECTED_TRANSCRIPT.splitlines(keepends=True),
            transcript.splitlines(keepends=True),
            fromfile="expected",
            tofile="actual",
        )
        sys.stderr.writelines(diff)
        return 1
    print("demo-script: transcript matches the reference dialogue")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="medico",
        description="Semantic dialogue and retrieval engine for radiology reporting",
    )
    sub = parser.add_subparsers(dest="command")

    serve_p = sub.add_parser("serve", help="run the HTTP/JSON service")
    serve_p.add_argument("--config", help="path to key = value config file")
    serve_p.add_argument("--data-dir", help="data directory override")
    serve_p.add_argument("--port", type=int, help="TCP port override")
    serve_p.set_defaults(func=cmd_serve)

    ingest_p = sub.add_parser("ingest", help="ingest a directory of DICOM files")
    ingest_p.add_argument("path")
    ingest_p.add_argument("--config")
    ingest_p.add_argument("--data-dir")
    ingest_p.set_defaults(func=cmd_ingest)

    query_p = sub.add_parser("query", help="evaluate a query file, print TSV bindings")
    query_p.add_argument("file")
    query_p.add_argument("--config")
    query_p.add_argument("--data-dir")
    query_p.set_defaults(func=cmd_query)

    demo_p = sub.add_parser("demo-script", help="replay the reference dialogue headlessly")
    demo_p.add_argument("--data-dir", help="fresh data directory (default: temp dir)")
    demo_p.add_argument("--seed", type=int, default=2010)
    demo_p.set_defaults(func=cmd_demo_script)

    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
