"""IRI vocabulary used by every module that reads or writes the store."""

import uuid
from urllib.parse import quote

from .triples import Iri

RDF_TYPE = Iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")
RDFS_LABEL = Iri("http://www.w3.org/2000/01/rdf-schema#label")

XSD = "http://www.w3.org/2001/XMLSchema#"
XSD_DOUBLE = XSD + "double"
XSD_DATETIME = XSD + "dateTime"

MEDICO = "urn:medico:"

# concept layer
CONCEPT = Iri(MEDICO + "Concept")
SYNONYM = Iri(MEDICO + "synonym")
IS_A = Iri(MEDICO + "isA")
PART_OF = Iri(MEDICO + "partOf")
SOURCE = Iri(MEDICO + "source")

# patient record hierarchy
PATIENT = Iri(MEDICO + "Patient")
STUDY = Iri(MEDICO + "Study")
SERIES = Iri(MEDICO + "Series")
IMAGE = Iri(MEDICO + "Image")
HAS_STUDY = Iri(MEDICO + "hasStudy")
HAS_SERIES = Iri(MEDICO + "hasSeries")
HAS_IMAGE = Iri(MEDICO + "hasImage")
PATIENT_ID = Iri(MEDICO + "patientId")
PATIENT_NAME = Iri(MEDICO + "patientName")
STUDY_DATE = Iri(MEDICO + "studyDate")
STUDY_UID = Iri(MEDICO + "studyInstanceUid")
SERIES_UID = Iri(MEDICO + "seriesInstanceUid")
SOP_UID = Iri(MEDICO + "sopInstanceUid")
MODALITY = Iri(MEDICO + "modality")
SERIES_DESCRIPTION = Iri(MEDICO + "seriesDescription")
BODY_PART = Iri(MEDICO + "bodyPartExamined")

# regions, annotations, landmarks
REGION = Iri(MEDICO + "Region")
VOLUME_REGION = Iri(MEDICO + "VolumeRegion")
ANNOTATION = Iri(MEDICO + "Annotation")
LANDMARK = Iri(MEDICO + "Landmark")
ON_TARGET = Iri(MEDICO + "onTarget")
GEOMETRY = Iri(MEDICO + "geometry")
ON_REGION = Iri(MEDICO + "onRegion")
ANATOMY = Iri(MEDICO + "anatomy")
VISUAL = Iri(MEDICO + "visual")
DISEASE = Iri(MEDICO + "disease")
FREE_TEXT_VALUE = Iri(MEDICO + "freeTextValue")
FREE_TEXT_COMMENT = Iri(MEDICO + "hasFreetextComment")
CONFIDENCE = Iri(MEDICO + "confidence")
ANNOTATED_BY = Iri(MEDICO + "annotatedBy")
ANNOTATED_AT = Iri(MEDICO + "annotatedAt")
ORIGIN = Iri(MEDICO + "origin")
SUPERSEDED_BY = Iri(MEDICO + "supersededBy")
POSITION = Iri(MEDICO + "position")

SOURCES = ("anatomy", "imaging", "disease", "dicom", "dialogue")


def entity_iri(kind: str, key: str) -> Iri:
    """Deterministic IRI for an entity keyed by an external identifier."""
    return Iri(f"{MEDICO}{kind}:{quote(key, safe='.-_~')}")


class Minter:
    """Mints `urn:medico:<kind>:<uuid>` IRIs.

    By default uses random UUIDs; hand a seeded ``random.Random`` to make
    minting reproducible (demo seeding, deterministic tests).
    """

    def __init__(self, rng=None):
        self._rng = rng

    def mint(self, kind: str) -> Iri:
        if self._rng is None:
            u = uuid.uuid4()
        else:
            u = uuid.UUID(int=self._rng.getrandbits(128), version=4)
        return Iri(f"{MEDICO}{kind}:{u}")
