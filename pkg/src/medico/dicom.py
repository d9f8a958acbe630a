"""Metadata-only reader and fixture writer for DICOM part-10 files.

Only Explicit VR Little Endian (1.2.840.10008.1.2.1) datasets are read;
anything else is rejected up front. Parsing stops before pixel data and
skips sequence values, because retrieval here works on header semantics,
not pixels.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

from . import vocab
from .errors import (
    DicomFormatError,
    DicomTruncationError,
    MedicoError,
    UnsupportedTransferSyntaxError,
    ValidationError,
)
from .triples import Iri, Literal, Triple, TripleStore

EXPLICIT_VR_LITTLE_ENDIAN = "1.2.840.10008.1.2.1"
_SOP_CLASS_CT = "1.2.840.10008.5.1.4.1.1.2"
_IMPLEMENTATION_UID = "1.2.840.99999.1"

PIXEL_DATA = (0x7FE0, 0x0010)
_ITEM = (0xFFFE, 0xE000)
_SEQ_DELIMITER_BYTES = struct.pack("<HHI", 0xFFFE, 0xE0DD, 0)

# VRs whose explicit encoding uses a 2-byte reserved field + 32-bit length
_LONG_VRS = {"OB", "OW", "OF", "SQ", "UT", "UN"}
_STRING_VRS = {
    "AE", "AS", "CS", "DA", "DS", "DT", "IS", "LO", "LT",
    "PN", "SH", "ST", "TM", "UC", "UI", "UR", "UT",
}

# keyword -> (group, element, VR); tag numbers checked against the public
# DICOM data dictionary
EXTRACTION_KEYWORDS = {
    "PatientID": (0x0010, 0x0020, "LO"),
    "PatientName": (0x0010, 0x0010, "PN"),
    "StudyInstanceUID": (0x0020, 0x000D, "UI"),
    "SeriesInstanceUID": (0x0020, 0x000E, "UI"),
    "SOPInstanceUID": (0x0008, 0x0018, "UI"),
    "Modality": (0x0008, 0x0060, "CS"),
    "StudyDate": (0x0008, 0x0020, "DA"),
    "SeriesDescription": (0x0008, 0x103E, "LO"),
    "BodyPartExamined": (0x0018, 0x0015, "CS"),
}

REQUIRED_UIDS = ("StudyInstanceUID", "SeriesInstanceUID", "SOPInstanceUID")


@dataclass(frozen=True, order=True)
class DicomTag:
    group: int
    element: int

    def __str__(self):
        return f"({self.group:04X},{self.element:04X})"


@dataclass
class DicomElement:
    tag: DicomTag
    vr: str
    length: int
    raw: bytes
    text: str | None  # decoded value for string VRs, padding stripped


@dataclass
class DicomDataset:
    elements: list[DicomElement]
    source: str | None = None
    warnings: list[str] = field(default_factory=list)

    def get(self, group, element) -> DicomElement | None:
        for el in self.elements:
            if el.tag.group == group and el.tag.element == element:
                return el
        return None


class _Reader:
    def __init__(self, data: bytes, pos=0):
        self.data = data
        self.pos = pos

    def remaining(self):
        return len(self.data) - self.pos

    def take(self, n, what):
        if self.remaining() < n:
            raise DicomTruncationError(f"truncated while reading {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def _decode_text(raw: bytes) -> str:
    return raw.decode("latin-1").rstrip(" \x00")


def _read_element(reader: _Reader) -> DicomElement:
    start = reader.pos
    group = reader.u16("tag group")
    element = reader.u16("tag element")
    tag = DicomTag(group, element)
    vr_bytes = reader.take(2, f"VR of {tag}")
    vr = vr_bytes.decode("latin-1")
    if not (vr.isalpha() and vr.isupper() and vr.isascii()):
        raise DicomFormatError(f"invalid VR {vr_bytes!r} for {tag} at offset {start}")
    if vr in _LONG_VRS:
        reader.take(2, f"reserved bytes of {tag}")
        length = reader.u32(f"length of {tag}")
    else:
        length = reader.u16(f"length of {tag}")

    if vr == "SQ" or length == 0xFFFFFFFF:
        # sequences are skipped: by declared length when defined, by a
        # delimiter scan when undefined
        if length == 0xFFFFFFFF:
            idx = reader.data.find(_SEQ_DELIMITER_BYTES, reader.pos)
            if idx < 0:
                raise DicomTruncationError(
                    f"undefined-length sequence {tag} has no delimiter", reader.pos
                )
            reader.pos = idx + len(_SEQ_DELIMITER_BYTES)
        else:
            reader.take(length, f"sequence value of {tag}")
        return DicomElement(tag, vr, 0, b"", None)

    raw = reader.take(length, f"value of {tag}")
    text = _decode_text(raw) if vr in _STRING_VRS else None
    return DicomElement(tag, vr, length, raw, text)


def parse_file(data: bytes, source: str | None = None) -> DicomDataset:
    """Parse the header of a DICOM part-10 byte stream.

    Stops before pixel data (7FE0,0010). Raises DicomFormatError /
    DicomTruncationError / UnsupportedTransferSyntaxError.
    """
    if len(data) < 132:
        raise DicomFormatError(f"file too short ({len(data)} bytes) to be DICOM")
    if data[128:132] != b"DICM":
        raise DicomFormatError("missing DICM magic after 128-byte preamble")

    reader = _Reader(data, 132)
    # file meta group: explicit VR little endian by definition
    first = _read_element(reader)
    if first.tag != DicomTag(0x0002, 0x0000) or first.vr != "UL":
        raise DicomFormatError(f"expected file meta group length, found {first.tag}")
    if first.length != 4:
        raise DicomFormatError("file meta group length must be 4 bytes")
    meta_length = struct.unpack("<I", first.raw)[0]
    meta_end = reader.pos + meta_length
    if meta_end > len(data):
        raise DicomTruncationError("file meta group extends past end of file", reader.pos)

    transfer_syntax = None
    while reader.pos < meta_end:
        el = _read_element(reader)
        if el.tag.group != 0x0002:
            raise DicomFormatError(f"non-meta element {el.tag} inside file meta group")
        if el.tag == DicomTag(0x0002, 0x0010):
            transfer_syntax = el.text
    if transfer_syntax is None:
        raise DicomFormatError("file meta group lacks a transfer syntax UID")
    if transfer_syntax != EXPLICIT_VR_LITTLE_ENDIAN:
        raise UnsupportedTransferSyntaxError(transfer_syntax)

    elements = []
    warnings = []
    previous = None
    while reader.remaining() > 0:
        peek_group, peek_element = struct.unpack(
            "<HH", reader.data[reader.pos : reader.pos + 4].ljust(4, b"\x00")
        )
        if reader.remaining() < 4:
            raise DicomTruncationError("dangling bytes after last element", reader.pos)
        if (peek_group, peek_element) == PIXEL_DATA:
            break
        el = _read_element(reader)
        if previous is not None and (el.tag.group, el.tag.element) < previous:
            warnings.append(f"out-of-order tag {el.tag}")
        previous = (el.tag.group, el.tag.element)
        elements.append(el)
    return DicomDataset(elements, source=source, warnings=warnings)


def _validate_value(keyword: str, vr: str, value: str) -> None:
    if not value.isascii():
        raise ValidationError(f"{keyword}: non-ASCII value {value!r}")
    if any(ord(c) < 0x20 for c in value):
        raise ValidationError(f"{keyword}: control characters in value")
    if vr == "UI":
        if len(value) > 64:
            raise ValidationError(f"{keyword}: UID longer than 64 chars")
        if not all(c.isdigit() or c == "." for c in value):
            raise ValidationError(f"{keyword}: UID may contain only digits and dots")
    elif vr == "DA":
        if len(value) != 8 or not value.isdigit():
            raise ValidationError(f"{keyword}: dates must be YYYYMMDD")
    elif vr == "CS":
        if len(value) > 16:
            raise ValidationError(f"{keyword}: CS value longer than 16 chars")
        if not all(c.isupper() or c.isdigit() or c in " _" for c in value):
            raise ValidationError(f"{keyword}: CS allows A-Z 0-9 space underscore")
    else:  # LO, PN
        if len(value) > 64:
            raise ValidationError(f"{keyword}: value longer than 64 chars")


def _encode_element(group, element, vr, raw: bytes) -> bytes:
    if len(raw) % 2:
        raw += b"\x00" if vr == "UI" else b" "
    head = struct.pack("<HH", group, element) + vr.encode("ascii")
    if vr in _LONG_VRS:
        return head + b"\x00\x00" + struct.pack("<I", len(raw)) + raw
    if len(raw) > 0xFFFF:
        raise ValidationError(f"value too long for VR {vr}")
    return head + struct.pack("<H", len(raw)) + raw


def write_fixture(metadata: dict) -> bytes:
    """Build a minimal Explicit-VR-Little-Endian file carrying the given
    extraction keywords. Empty-string values are omitted entirely."""
    unknown = set(metadata) - set(EXTRACTION_KEYWORDS)
    if unknown:
        raise ValidationError(f"unknown metadata keywords: {sorted(unknown)}")

    dataset = b""
    items = []
    for keyword, value in metadata.items():
        if value == "":
            continue
        group, element, vr = EXTRACTION_KEYWORDS[keyword]
        _validate_value(keyword, vr, value)
        items.append((group, element, vr, value))
    for group, element, vr, value in sorted(items):
        dataset += _encode_element(group, element, vr, value.encode("ascii"))

    sop_instance = metadata.get("SOPInstanceUID") or "1.2.840.99999.0"
    meta = b""
    meta += _encode_element(0x0002, 0x0001, "OB", b"\x00\x01")
    meta += _encode_element(0x0002, 0x0002, "UI", _SOP_CLASS_CT.encode("ascii"))
    meta += _encode_element(0x0002, 0x0003, "UI", sop_instance.encode("ascii"))
    meta += _encode_element(0x0002, 0x0010, "UI", EXPLICIT_VR_LITTLE_ENDIAN.encode("ascii"))
    meta += _encode_element(0x0002, 0x0012, "UI", _IMPLEMENTATION_UID.encode("ascii"))
    group_length = _encode_element(0x0002, 0x0000, "UL", struct.pack("<I", len(meta)))

    return b"\x00" * 128 + b"DICM" + group_length + meta + dataset


def extract_metadata(dataset: DicomDataset) -> dict:
    """Keyword map for the extraction tag set; absent tags stay absent.

    Raises ValidationError when any of the instance UIDs that link the
    record into the study/series/image hierarchy is missing.
    """
    out = {}
    for keyword, (group, element, _vr) in EXTRACTION_KEYWORDS.items():
        el = dataset.get(group, element)
        if el is not None and el.text:
            out[keyword] = el.text
    missing = [k for k in REQUIRED_UIDS if k not in out]
    if missing:
        raise ValidationError(
            f"record unlinkable: missing {', '.join(missing)}"
            + (f" in {dataset.source}" if dataset.source else "")
        )
    return out


def to_triples(metadata: dict) -> list[Triple]:
    """DICOM ontology triples: typed nodes, hierarchy edges, literal
    properties. IRIs are minted deterministically from the UIDs so repeat
    conversion is idempotent under set semantics."""
    missing = [k for k in REQUIRED_UIDS if not metadata.get(k)]
    if missing:
        raise ValidationError(f"record unlinkable: missing {', '.join(missing)}")

    patient_key = metadata.get("PatientID") or f"unidentified-{metadata['StudyInstanceUID']}"
    patient = vocab.entity_iri("patient", patient_key)
    study = vocab.entity_iri("study", metadata["StudyInstanceUID"])
    series = vocab.entity_iri("series", metadata["SeriesInstanceUID"])
    image = vocab.entity_iri("image", metadata["SOPInstanceUID"])

    triples = [
        Triple(patient, vocab.RDF_TYPE, vocab.PATIENT),
        Triple(patient, vocab.PATIENT_ID, Literal(patient_key)),
        Triple(study, vocab.RDF_TYPE, vocab.STUDY),
        Triple(patient, vocab.HAS_STUDY, study),
        Triple(study, vocab.STUDY_UID, Literal(metadata["StudyInstanceUID"])),
        Triple(series, vocab.RDF_TYPE, vocab.SERIES),
        Triple(study, vocab.HAS_SERIES, series),
        Triple(series, vocab.SERIES_UID, Literal(metadata["SeriesInstanceUID"])),
        Triple(image, vocab.RDF_TYPE, vocab.IMAGE),
        Triple(series, vocab.HAS_IMAGE, image),
        Triple(image, vocab.SOP_UID, Literal(metadata["SOPInstanceUID"])),
    ]
    optional = [
        (patient, vocab.PATIENT_NAME, "PatientName"),
        (study, vocab.STUDY_DATE, "StudyDate"),
        (series, vocab.MODALITY, "Modality"),
        (series, vocab.SERIES_DESCRIPTION, "SeriesDescription"),
        (series, vocab.BODY_PART, "BodyPartExamined"),
    ]
    for node, predicate, keyword in optional:
        value = metadata.get(keyword)
        if value:
            triples.append(Triple(node, predicate, Literal(value)))
    return triples


@dataclass
class IngestReport:
    files_seen: int = 0
    accepted: int = 0
    rejected: list = field(default_factory=list)  # (path, reason)
    patients: int = 0
    studies: int = 0
    series: int = 0
    images: int = 0

    def summary(self) -> str:
        lines = [
            f"files seen: {self.files_seen}",
            f"accepted:   {self.accepted}",
            f"rejected:   {len(self.rejected)}",
            f"patients:   {self.patients}",
            f"studies:    {self.studies}",
            f"series:     {self.series}",
            f"images:     {self.images}",
        ]
        lines += [f"  {path}: {reason}" for path, reason in self.rejected]
        return "\n".join(lines)


def ingest_directory(path, store: TripleStore) -> IngestReport:
    """Convert and insert every parseable file under path (recursively).

    Per-file failures are collected in the report, never abort the batch.
    Re-running over the same directory leaves the store unchanged.
    """
    root = Path(path)
    if not root.is_dir():
        raise MedicoError(f"not a readable directory: {root}")
    report = IngestReport()
    seen = {"patient": set(), "study": set(), "series": set(), "image": set()}
    for file_path in sorted(p for p in root.rglob("*") if p.is_file()):
        report.files_seen += 1
        try:
            dataset = parse_file(file_path.read_bytes(), source=str(file_path))
            metadata = extract_metadata(dataset)
            triples = to_triples(metadata)
        except MedicoError as exc:
            report.rejected.append((str(file_path), str(exc)))
            continue
        store.insert_all(triples)
        report.accepted += 1
        for t in triples:
            for kind, bucket in seen.items():
                if t.subject.value.startswith(f"{vocab.MEDICO}{kind}:"):
                    bucket.add(t.subject)
    report.patients = len(seen["patient"])
    report.studies = len(seen["study"])
    report.series = len(seen["series"])
    report.images = len(seen["image"])
    return report
