"""Deterministic demo cohort.

Seeds a lymphoma follow-up patient (current chest/liver/spleen/colon study
plus an older annotated study), a second patient Peter Maier whose lymph
node is annotated hyper-intense + coarse texture, and a distractor case, so
the scripted clinician dialogue has reproducible search results. The chest
volume also gets the mock auto-annotator output (19 landmarks, 7 organs).
"""

import random
from datetime import datetime, timedelta, timezone

from . import vocab
from .annotations import AnnotationPayload, AnnotationService, Rectangle
from .dicom import to_triples
from .triples import Iri, TripleStore

DEMO_REFERENCE = datetime(2010, 3, 10, 10, 0, 0, tzinfo=timezone.utc)

_UID = "1.2.840.99999.2010"

HYPER = Iri("urn:radlex:HyperIntense")
COARSE = Iri("urn:radlex:CoarseTexture")
ENLARGED = Iri("urn:radlex:Enlarged")
CALCIFIED = Iri("urn:radlex:Calcified")
LYMPH_NODE = Iri("urn:fma:LymphNode")
LIVER = Iri("urn:fma:Liver")
C81 = Iri("urn:icd10:C81")
C81_9 = Iri("urn:icd10:C81.9")


def _series(store, pid, name, study_no, study_date, series_no, modality, body_part, description, n_images):
    images = []
    for i in range(1, n_images + 1):
        md = {
            "PatientID": pid,
            "PatientName": name,
            "StudyInstanceUID": f"{_UID}.{study_no}",
            "StudyDate": study_date,
            "SeriesInstanceUID": f"{_UID}.{study_no}.{series_no}",
            "Modality": modality,
            "BodyPartExamined": body_part,
            "SeriesDescription": description,
            "SOPInstanceUID": f"{_UID}.{study_no}.{series_no}.{i}",
        }
        store.insert_all(to_triples(md))
        images.append(vocab.entity_iri("image", md["SOPInstanceUID"]))
    return vocab.entity_iri("series", f"{_UID}.{study_no}.{series_no}"), images


def seed_demo(store: TripleStore, demo_seed: int = 2010, log=None, clock=None, reference_date=None) -> dict:
    """Populate the store; returns the entity references the script uses.

    Study dates are derived from reference_date so "this week" catches the
    follow-up visit whenever the demo is run.
    """
    clock = clock or (lambda: DEMO_REFERENCE)
    reference = reference_date or DEMO_REFERENCE.date()
    current = reference.strftime("%Y%m%d")
    monday = reference - timedelta(days=reference.isoweekday() - 1)
    same_week = monday.strftime("%Y%m%d")
    prior = (reference - timedelta(days=28)).strftime("%Y%m%d")
    maier_date = (reference - timedelta(days=15)).strftime("%Y%m%d")
    svc = AnnotationService(
        store,
        minter=vocab.Minter(random.Random(demo_seed)),
        clock=clock,
        user="dr.demo",
        log=log,
    )

    # patient A: lymphoma follow-up; visits within the reference week
    prior_series, prior_images = _series(
        store, "P001", "Schmidt^Anna", 11, prior, 1, "CT", "ABDOMEN", "Liver follow-up", 2
    )
    prior_region = svc.create_region(prior_images[0], Rectangle(120, 80, 60, 44))
    svc.annotate(
        prior_region.id,
        AnnotationPayload(
            anatomy=LIVER, visual=[ENLARGED], disease=C81_9, confidence=0.8
        ),
    )
    chest_series, chest_images = _series(
        store, "P001", "Schmidt^Anna", 12, current, 1, "CT", "CHEST", "Thorax lungs native", 6
    )
    _series(store, "P001", "Schmidt^Anna", 12, current, 2, "CT", "ABDOMEN", "Liver portal venous", 3)
    _series(store, "P001", "Schmidt^Anna", 12, current, 3, "CT", "ABDOMEN", "Spleen", 2)
    _series(store, "P001", "Schmidt^Anna", 12, current, 4, "CT", "ABDOMEN", "Colon", 2)
    # the region the clinician clicks on the fifth image
    lymph_region = svc.create_region(chest_images[4], Rectangle(210, 140, 42, 36))
    svc.mock_auto_annotate(chest_series, seed=demo_seed)

    # patient B: Peter Maier, the intended best match for similar lesions
    maier_series, maier_images = _series(
        store, "P002", "Maier^Peter", 21, maier_date, 1, "CT", "NECK", "Cervical lymph nodes", 3
    )
    maier_region = svc.create_region(maier_images[0], Rectangle(180, 150, 40, 40))
    svc.annotate(
        maier_region.id,
        AnnotationPayload(
            anatomy=LYMPH_NODE,
            visual=[HYPER, COARSE],
            disease=C81,
            confidence=1.0,
        ),
    )

    # patient C: unrelated distractor within the reference week
    huber_series, huber_images = _series(
        store, "P003", "Huber^Hans", 31, same_week, 1, "CT", "ABDOMEN", "Abdomen native", 2
    )
    huber_region = svc.create_region(huber_images[0], Rectangle(90, 200, 30, 25))
    svc.annotate(
        huber_region.id,
        AnnotationPayload(anatomy=LIVER, visual=[CALCIFIED], confidence=0.9),
    )

    return {
        "patientA": vocab.entity_iri("patient", "P001"),
        "patientB": vocab.entity_iri("patient", "P002"),
        "patientC": vocab.entity_iri("patient", "P003"),
        "chestSeries": chest_series,
        "chestImages": chest_images,
        "lymphRegion": lymph_region.id,
        "maierRegion": maier_region.id,
    }
