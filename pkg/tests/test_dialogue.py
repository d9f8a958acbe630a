from datetime import timedelta

import pytest

from medico import vocab
from medico.annotations import AnnotationPayload, AnnotationService, Rectangle
from medico.dialogue import (
    DialogueEngine,
    DialogueState,
    PointingEvent,
    SIEDirective,
    payload_iris,
)
from medico.grammar import clarify
from medico.ontology import load_bundled
from medico.seed import DEMO_REFERENCE, seed_demo
from medico.triples import Iri


@pytest.fixture
def engine():
    store = load_bundled()
    refs = seed_demo(store)
    eng = DialogueEngine(store, clock=lambda: DEMO_REFERENCE)
    eng.annotations.clock = lambda: DEMO_REFERENCE
    eng.refs = refs
    return eng


def fresh_state():
    return DialogueState(session_id="s1")


def gesture(kind, iri, dt=0.0):
    return PointingEvent(kind, iri, DEMO_REFERENCE + timedelta(seconds=dt))


def assert_resolvable(engine, response):
    for directive in response.directives:
        for iri in payload_iris(directive.payload):
            node = Iri(iri)
            assert engine.store.match(node, None, None) or engine.store.match(
                None, None, node
            ), f"directive references unknown IRI {iri}"


class TestFuse:
    def test_gesture_binds_region(self, engine):
        state = fresh_state()
        state.recent_gestures.append(gesture("region", engine.refs["lymphRegion"], -1))
        act = engine.parse_utterance("This lymph node here, annotate Hodgkin-Lymphoma.")[0]
        fused = engine.fuse(act, state, DEMO_REFERENCE)
        assert fused.intent == "Annotate"
        assert fused.unresolved_deictics == []
        assert fused.slots.features["REGION"].features["IRI"].atom == engine.refs["lymphRegion"].value

    def test_act_without_deictics_unchanged(self, engine):
        state = fresh_state()
        state.recent_gestures.append(gesture("region", engine.refs["lymphRegion"], -1))
        act = engine.parse_utterance("Find similar lesions with characteristics: hyper-intense.")[0]
        fused = engine.fuse(act, state, DEMO_REFERENCE)
        assert fused is act

    def test_latest_gesture_wins(self, engine):
        state = fresh_state()
        other_region = engine.refs["maierRegion"]
        state.recent_gestures.append(gesture("region", other_region, -4))
        state.recent_gestures.append(gesture("region", engine.refs["lymphRegion"], -1))
        act = engine.parse_utterance("This lymph node here, annotate Hodgkin-Lymphoma.")[0]
        fused = engine.fuse(act, state, DEMO_REFERENCE)
        assert fused.slots.features["REGION"].features["IRI"].atom == engine.refs["lymphRegion"].value

    def test_gesture_outside_window_ignored(self, engine):
        state = fresh_state()
        state.recent_gestures.append(gesture("region", engine.refs["lymphRegion"], -30))
        act = engine.parse_utterance("This lymph node here, annotate Hodgkin-Lymphoma.")[0]
        fused = engine.fuse(act, state, DEMO_REFERENCE)
        assert fused.intent == "Clarify"
        assert "region" in fused.question

    def test_focus_fallback(self, engine):
        state = fresh_state()
        state.focus["patient"] = engine.refs["patientA"]
        act = engine.parse_utterance("Get the findings of this patient")[0]
        fused = engine.fuse(act, state, DEMO_REFERENCE)
        assert fused.slots.features["PATIENT"].features["IRI"].atom == engine.refs["patientA"].value

    def test_kind_mismatch_not_bound(self, engine):
        state = fresh_state()
        state.recent_gestures.append(gesture("region", engine.refs["lymphRegion"], -1))
        act = engine.parse_utterance("Get the findings of this patient")[0]
        fused = engine.fuse(act, state, DEMO_REFERENCE)
        assert fused.intent == "Clarify"


class TestExecute:
    def test_clarify_changes_nothing(self, engine):
        state = fresh_state()
        before = dict(state.focus)
        state2, response = engine.execute(clarify("Which region?"), state)
        assert response.speak_text == "Which region?"
        assert response.directives == []
        assert state2.focus == before

    def test_execute_deterministic(self, engine):
        outputs = []
        for _ in range(2):
            state = fresh_state()
            act = engine.parse_utterance("Show me my patient records, lymphoma cases, for this week.")[0]
            _, response = engine.execute(act, state)
            outputs.append(response.as_dict())
        assert outputs[0] == outputs[1]

    def test_backend_error_is_apologetic(self, engine):
        state = fresh_state()
        act = engine.parse_utterance("annotate Hodgkin-Lymphoma")[0]
        # no focus region and no gesture -> handler path without referent
        _, response = engine.execute(act, state)
        assert response.directives == []
        assert "region" in response.speak_text.lower()

    def test_gesture_only_turn_selects_region(self, engine):
        state = fresh_state()
        state2, response = engine.turn(
            state, "", [gesture("region", engine.refs["lymphRegion"], -0.5)]
        )
        assert state2.focus["region"] == engine.refs["lymphRegion"]
        assert any(d.action == "rearrange" for d in response.directives)
        assert_resolvable(engine, response)

    def test_stenosis_context_echo(self, engine):
        """Pointing at a spot and dictating an observation with no anatomy
        slot inherits the nearest landmark's anatomical context."""
        svc = engine.annotations
        series = engine.refs["chestSeries"]
        svc.add_landmark(series, Iri("urn:fma:ProximalSegmentOfRightCoronaryArtery"), (150, 150, 60), 0.98)
        from medico.annotations import Box3d

        region = svc.create_region(series, Box3d(145, 145, 55, 10, 10, 10))
        state = fresh_state()
        state, _ = engine.turn(state, "", [gesture("region", region.id, -1)])
        _, response = engine.turn(state, "annotate moderate stenosis", [])
        assert "moderate stenosis in proximal segment of the right coronary artery" in response.speak_text


class TestFiveTurnScript:
    def test_reference_dialogue(self, engine):
        """Turns advance in time; each turn's gestures land just before it,
        so stale pointing never leaks into later fusions."""
        state = fresh_state()
        refs = engine.refs
        clock = {"t": 0.0}

        def turn(text, gestures=()):
            clock["t"] += 30.0
            now = DEMO_REFERENCE + timedelta(seconds=clock["t"])
            events = [
                PointingEvent(kind, iri, now + timedelta(seconds=dt))
                for kind, iri, dt in gestures
            ]
            return engine.turn(state, text, events, now=now)

        # turn 1: date-scoped disease listing
        state, r1 = turn("Show me my patient records, lymphoma cases, for this week.")
        assert state.last_acts[-1].intent == "ShowRecords"
        assert len(r1.directives) == 1
        d1 = r1.directives[0]
        assert (d1.action, d1.panel) == ("open", "PatientSearch")
        rows = d1.payload["results"]
        assert [row["iri"] for row in rows] == [refs["patientA"].value]
        assert rows[0]["name"] == "Anna Schmidt"
        assert_resolvable(engine, r1)

        # turn 2: open images of the pointed-at patient
        state, r2 = turn(
            "Open the images, internal organs: lungs, liver, then spleen and colon of this patient.",
            [("patient", refs["patientA"], -1)],
        )
        assert state.last_acts[-1].intent == "OpenImages"
        assert state.focus["patient"] == refs["patientA"]
        d2 = r2.directives[0]
        assert (d2.action, d2.panel) == ("open", "ImageAnnotation")
        # series ordered by requested organs: lungs, liver, spleen, colon
        descriptions = [s["description"] for s in d2.payload["series"] if s["studyDate"] == "20100310"]
        assert descriptions[0].startswith("Thorax lungs")
        assert "Liver" in descriptions[1]
        assert "Spleen" in descriptions[2]
        assert "Colon" in descriptions[3]
        assert_resolvable(engine, r2)

        # turn 3a: click on the region of the fifth image (gesture only)
        state, r3a = turn("", [("region", refs["lymphRegion"], -0.2)])
        assert state.focus["region"] == refs["lymphRegion"]
        assert r3a.directives[0].action == "rearrange"

        # turn 3b: speech + pointing annotate
        state, r3 = turn(
            "This lymph node here, annotate Hodgkin-Lymphoma.",
            [("region", refs["lymphRegion"], -0.1)],
        )
        assert state.last_acts[-1].intent == "Annotate"
        assert r3.speak_text == "Hodgkin lymphoma in lymph node"
        d3 = r3.directives[0]
        assert (d3.action, d3.panel) == ("highlight", "ImageAnnotation")
        assert d3.payload["label"]["code"] == "C81"
        annotations = engine.annotations.list_annotations(region=refs["lymphRegion"])
        assert len(annotations) == 1
        assert annotations[0].disease == Iri("urn:icd10:C81")
        assert_resolvable(engine, r3)

        # turn 4: similar lesions; Peter Maier must rank first
        state, r4 = turn(
            "Find similar lesions with characteristics: hyper-intense and/or coarse texture.",
        )
        assert state.last_acts[-1].intent == "FindSimilar"
        results = r4.directives[0].payload["results"]
        assert results[0]["iri"] == refs["patientB"].value
        assert results[0]["name"] == "Peter Maier"
        assert len(r4.directives) == 2
        assert r4.directives[1].panel == "ImageAnnotation"
        assert state.focus["patient"] == refs["patientB"]
        assert_resolvable(engine, r4)

        # turn 5: findings of the newly opened comparison patient
        state, r5 = turn("Get the findings of this patient")
        assert state.last_acts[-1].intent == "GetFindings"
        d5 = r5.directives[0]
        assert (d5.action, d5.panel) == ("open", "PatientFinding")
        assert d5.payload["patient"]["iri"] == refs["patientB"].value
        groups = d5.payload["termGroups"]
        assert [g["label"] for g in groups["disease"]] == ["Hodgkin lymphoma"]
        assert {g["label"] for g in groups["imaging"]} == {"hyper-intense", "coarse texture"}
        assert [g["label"] for g in groups["anatomy"]] == ["Lymph node"]
        assert "Hodgkin lymphoma" in d5.payload["text"]
        assert_resolvable(engine, r5)


class TestSessionIsolation:
    def test_two_sessions_do_not_share_focus(self, engine):
        s1, s2 = DialogueState("a"), DialogueState("b")
        engine.turn(s1, "", [gesture("patient", engine.refs["patientA"], 0)])
        assert "patient" not in s2.focus
        engine.turn(s2, "", [gesture("patient", engine.refs["patientB"], 0)])
        assert s1.focus["patient"] == engine.refs["patientA"]
        assert s2.focus["patient"] == engine.refs["patientB"]


class TestDirectiveInvariants:
    def test_every_directive_payload_resolves(self, engine):
        state = fresh_state()
        turns = [
            ("Show me my patient records, lymphoma cases, for this week.", []),
            ("Open the images, internal organs: lungs, liver, then spleen and colon of this patient.",
             [gesture("patient", engine.refs["patientA"], -1)]),
            ("", [gesture("region", engine.refs["lymphRegion"], -0.5)]),
            ("This lymph node here, annotate Hodgkin-Lymphoma.",
             [gesture("region", engine.refs["lymphRegion"], -0.2)]),
            ("Find similar lesions with characteristics: hyper-intense and/or coarse texture.", []),
            ("Get the findings of this patient", []),
            ("Navigate to lymph node", []),
        ]
        for text, gestures in turns:
            state, response = engine.turn(state, text, gestures)
            assert_resolvable(engine, response)
            for directive in response.directives:
                assert directive.action in ("open", "rearrange", "highlight", "close")
                assert directive.panel in ("PatientSearch", "PatientFinding", "ImageAnnotation", "Browser", "Background")
