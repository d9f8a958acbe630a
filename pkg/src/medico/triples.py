"""Set-semantics triple store with permutation indexes and a line-oriented
load format.

The load format is one statement per line::

    <urn:a> <urn:p> <urn:b> .
    <urn:a> <urn:p> "a literal"^^<urn:xsd:string> .
    @prefix fma: <urn:fma:> .
    # comments and blank lines are skipped
    fma:Liver fma:partOf fma:Abdomen .

Prefixed names are expanded at parse time; nothing prefixed survives into
storage. Literals support the escapes \\" \\\\ \\n \\r \\t.
"""

import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import MedicoError, ParseError


@dataclass(frozen=True, order=True)
class Iri:
    """An absolute IRI. Never empty, never contains whitespace."""

    value: str

    def __post_init__(self):
        if not self.value or any(c.isspace() for c in self.value):
            raise ValueError(f"invalid IRI: {self.value!r}")

    def n3(self):
        return f"<{self.value}>"

    def __str__(self):
        return self.value


@dataclass(frozen=True, order=True)
class Literal:
    """A UTF-8 string value with an optional datatype IRI."""

    value: str
    datatype: str | None = None

    def n3(self):
        escaped = (
            self.value.replace("\\", "\\\\")
            .replace('"', '\\"')
            .replace("\n", "\\n")
            .replace("\r", "\\r")
            .replace("\t", "\\t")
        )
        if self.datatype:
            return f'"{escaped}"^^<{self.datatype}>'
        return f'"{escaped}"'

    def __str__(self):
        return self.value


# A Term is either an Iri or a Literal.
Term = Iri | Literal


@dataclass(frozen=True, order=True)
class Triple:
    subject: Iri
    predicate: Iri
    object: Term

    def __post_init__(self):
        if not isinstance(self.subject, Iri):
            raise ValueError("triple subject must be an IRI")
        if not isinstance(self.predicate, Iri):
            raise ValueError("triple predicate must be an IRI")
        if not isinstance(self.object, (Iri, Literal)):
            raise ValueError("triple object must be an IRI or literal")

    def n3(self):
        return f"{self.subject.n3()} {self.predicate.n3()} {self.object.n3()} ."


class _ReadWriteLock:
    """Many concurrent readers, one writer; writers exclude readers."""

    def __init__(self):
        self._readers = 0
        self._readers_lock = threading.Lock()
        self._writer_lock = threading.Lock()

    def acquire_read(self):
        with self._readers_lock:
            self._readers += 1
            if self._readers == 1:
                self._writer_lock.acquire()

    def release_read(self):
        with self._readers_lock:
            self._readers -= 1
            if self._readers == 0:
                self._writer_lock.release()

    def acquire_write(self):
        self._writer_lock.acquire()

    def release_write(self):
        self._writer_lock.release()


class TripleStore:
    """In-memory triple set with full subject/predicate/object indexes.

    Mutations are serialized behind a write lock; reads take a shared read
    lock, so a loaded store is safe to share across threads.
    """

    def __init__(self):
        self._triples: set[Triple] = set()
        self._by_s: dict[Iri, set[Triple]] = {}
        self._by_p: dict[Iri, set[Triple]] = {}
        self._by_o: dict[Term, set[Triple]] = {}
        self.prefixes: dict[str, str] = {}
        self._lock = _ReadWriteLock()

    def __len__(self):
        return len(self._triples)

    def __contains__(self, triple):
        self._lock.acquire_read()
        try:
            return triple in self._triples
        finally:
            self._lock.release_read()

    def insert(self, triple: Triple) -> bool:
        """Add a triple. Returns False if it was already present."""
        self._lock.acquire_write()
        try:
            if triple in self._triples:
                return False
            self._triples.add(triple)
            self._by_s.setdefault(triple.subject, set()).add(triple)
            self._by_p.setdefault(triple.predicate, set()).add(triple)
            self._by_o.setdefault(triple.object, set()).add(triple)
            return True
        finally:
            self._lock.release_write()

    def insert_all(self, triples) -> int:
        """Insert many triples; returns how many were new."""
        return sum(1 for t in triples if self.insert(t))

    def remove(self, triple: Triple) -> bool:
        """Remove a triple. Removing an absent triple is a no-op."""
        self._lock.acquire_write()
        try:
            if triple not in self._triples:
                return False
            self._triples.discard(triple)
            for index, key in (
                (self._by_s, triple.subject),
                (self._by_p, triple.predicate),
                (self._by_o, triple.object),
            ):
                bucket = index[key]
                bucket.discard(triple)
                if not bucket:
                    del index[key]
            return True
        finally:
            self._lock.release_write()

    def match(self, subject=None, predicate=None, object=None) -> list[Triple]:
        """All stored triples consistent with the bound positions.

        Uses the most selective index among the bound positions; results are
        sorted for deterministic output.
        """
        self._lock.acquire_read()
        try:
            candidates = None
            for index, key in (
                (self._by_s, subject),
                (self._by_p, predicate),
                (self._by_o, object),
            ):
                if key is None:
                    continue
                bucket = index.get(key, set())
                if candidates is None or len(bucket) < len(candidates):
                    candidates = bucket
            if candidates is None:
                candidates = self._triples
            out = [
                t
                for t in candidates
                if (subject is None or t.subject == subject)
                and (predicate is None or t.predicate == predicate)
                and (object is None or t.object == object)
            ]
        finally:
            self._lock.release_read()
        out.sort(key=Triple.n3)
        return out

    def triples(self) -> list[Triple]:
        """Stable sorted copy of every stored triple."""
        self._lock.acquire_read()
        try:
            out = list(self._triples)
        finally:
            self._lock.release_read()
        out.sort(key=Triple.n3)
        return out

    def as_set(self) -> frozenset[Triple]:
        self._lock.acquire_read()
        try:
            return frozenset(self._triples)
        finally:
            self._lock.release_read()


# --- line format -----------------------------------------------------------


def _err(message, lineno, column):
    return ParseError(message, line=lineno, column=column + 1)


def _parse_term(line, pos, prefixes, lineno):
    """Parse one term starting at pos; returns (term, next_pos)."""
    n = len(line)
    while pos < n and line[pos].isspace():
        pos += 1
    if pos >= n:
        raise _err("unexpected end of statement", lineno, pos)
    c = line[pos]
    if c == "<":
        end = line.find(">", pos + 1)
        if end < 0:
            raise _err("unterminated IRI", lineno, pos)
        value = line[pos + 1 : end]
        if not value or any(ch.isspace() for ch in value):
            raise _err(f"invalid IRI {value!r}", lineno, pos)
        return Iri(value), end + 1
    if c == '"':
        chars = []
        i = pos + 1
        while i < n:
            ch = line[i]
            if ch == "\\":
                if i + 1 >= n:
                    raise _err("dangling escape in literal", lineno, i)
                esc = line[i + 1]
                mapped = {"n": "\n", "r": "\r", "t": "\t", '"': '"', "\\": "\\"}.get(esc)
                if mapped is None:
                    raise _err(f"unknown escape \\{esc}", lineno, i)
                chars.append(mapped)
                i += 2
                continue
            if ch == '"':
                break
            chars.append(ch)
            i += 1
        else:
            raise _err("unterminated literal", lineno, pos)
        value = "".join(chars)
        i += 1
        datatype = None
        if line.startswith("^^", i):
            if i + 2 >= n or line[i + 2] != "<":
                raise _err("expected <IRI> after ^^", lineno, i)
            end = line.find(">", i + 3)
            if end < 0:
                raise _err("unterminated datatype IRI", lineno, i)
            datatype = line[i + 3 : end]
            i = end + 1
        return Literal(value, datatype), i
    # prefixed name: name:local, neither part may contain whitespace
    end = pos
    while end < n and not line[end].isspace():
        end += 1
    token = line[pos:end]
    if token == "." or ":" not in token:
        raise _err(f"expected term, found {token!r}", lineno, pos)
    name, _, local = token.partition(":")
    if name not in prefixes:
        raise _err(f"unknown prefix {name!r}", lineno, pos)
    return Iri(prefixes[name] + local), end


def parse_triples(text, prefixes=None):
    """Parse a document in the triple line format.

    Returns (triples, prefixes). A caller-provided prefix map is extended by
    any @prefix directives in the document.
    """
    prefixes = dict(prefixes or {})
    triples = []
    # split on '\n' only: literals may legally contain other Unicode
    # line-break characters, which must not terminate a statement
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip(" \t\r")
        if not line or line.startswith("#"):
            continue
        if line.startswith("@prefix"):
            rest = line[len("@prefix") :].strip()
            name, sep, tail = rest.partition(":")
            if not sep or not name or any(c.isspace() for c in name):
                raise ParseError("malformed @prefix directive", line=lineno)
            tail = tail.strip()
            if not (tail.startswith("<") and tail.rstrip(" .").endswith(">")):
                raise ParseError("malformed @prefix directive", line=lineno)
            base = tail.rstrip(" .")[1:-1]
            if not base or any(c.isspace() for c in base):
                raise ParseError(f"invalid prefix IRI {base!r}", line=lineno)
            prefixes[name] = base
            continue
        subject, pos = _parse_term(line, 0, prefixes, lineno)
        predicate, pos = _parse_term(line, pos, prefixes, lineno)
        obj, pos = _parse_term(line, pos, prefixes, lineno)
        tail = line[pos:].strip()
        if tail != ".":
            raise ParseError("statement must end with ' .'", line=lineno, column=pos + 1)
        if not isinstance(subject, Iri):
            raise ParseError("subject must be an IRI", line=lineno)
        if not isinstance(predicate, Iri):
            raise ParseError("predicate must be an IRI", line=lineno)
        triples.append(Triple(subject, predicate, obj))
    return triples, prefixes


def serialize(triples) -> str:
    """Render triples in the line format, sorted, one statement per line."""
    return "".join(t.n3() + "\n" for t in sorted(triples, key=Triple.n3))


def snapshot(store: TripleStore, sink) -> None:
    """Write the store's triples to a writable text sink or a path."""
    text = serialize(store.triples())
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        try:
            Path(sink).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise MedicoError(f"cannot write {sink}: {exc}") from exc


def load(source, store: TripleStore | None = None) -> TripleStore:
    """Read a triple-format document (path or file-like) into a store."""
    if hasattr(source, "read"):
        text = source.read()
        name = getattr(source, "name", None)
    else:
        name = str(source)
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise MedicoError(f"cannot read {name}: {exc}") from exc
    store = store if store is not None else TripleStore()
    try:
        parsed, prefixes = parse_triples(text, store.prefixes)
    except ParseError as exc:
        if name:
            raise ParseError(exc.reason, line=exc.line, column=exc.column, source=name) from exc
        raise
    store.prefixes.update(prefixes)
    store.insert_all(parsed)
    return store
