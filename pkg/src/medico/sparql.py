"""Parser and evaluator for the supported query subset.

Supported: PREFIX declarations, SELECT (variable list or *) with DISTINCT
semantics always applied, WHERE with conjunctive triple patterns, FILTER
equality on a variable, LIMIT. Anything else raises an unsupported-feature
error naming the keyword.
"""

import re
from dataclasses import dataclass, field

from .errors import ParseError, UnsupportedFeatureError
from .triples import Iri, Literal, Term, TripleStore

# SPARQL keywords we recognise but do not support; seeing one of these
# must produce a distinct error instead of a generic syntax failure.
_UNSUPPORTED = {
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES",
    "ORDER", "GROUP", "HAVING", "OFFSET", "ASK", "CONSTRUCT", "DESCRIBE",
    "INSERT", "DELETE", "FROM", "NOT", "EXISTS", "REDUCED", "REGEX",
}

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<iri><[^<>\s]*>)
    | (?P<var>\?[A-Za-z_][A-Za-z0-9_]*)
    | (?P<lit>"(?:[^"\\]|\\.)*")
    | (?P<punct>[{}().=*,;])
    | (?P<word>[^\s{}().=*,;"<>?]+)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Var:
    name: str


Pattern = tuple  # (s, p, o), each position a Term or Var


@dataclass
class Query:
    variables: list[str]          # selected variables, ?-stripped
    select_all: bool
    patterns: list[Pattern]
    filters: list[tuple[str, Term]] = field(default_factory=list)
    limit: int | None = None

    def pattern_variables(self) -> list[str]:
        seen = []
        for pat in self.patterns:
            for pos in pat:
                if isinstance(pos, Var) and pos.name not in seen:
                    seen.append(pos.name)
        return seen


@dataclass
class SolutionSet:
    variables: list[str]
    bindings: list[dict[str, Term]]

    def __len__(self):
        return len(self.bindings)

    def __iter__(self):
        return iter(self.bindings)


class _Tokens:
    def __init__(self, text):
        self.items = []  # (kind, value, offset)
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise ParseError(f"cannot tokenize near {text[pos:pos+12]!r}", column=pos + 1)
            pos = m.end()
            kind = m.lastgroup
            if kind == "ws":
                continue
            self.items.append((kind, m.group(), m.start()))
        self.i = 0

    def peek(self):
        return self.items[self.i] if self.i < len(self.items) else (None, None, -1)

    def next(self, expected=None):
        kind, value, off = self.peek()
        if kind is None:
            raise ParseError("unexpected end of query")
        if expected and value != expected:
            raise ParseError(f"expected {expected!r}, found {value!r}", column=off + 1)
        self.i += 1
        return kind, value, off

    def take_keyword(self):
        """Consume a word token, normalized to upper case; None otherwise."""
        kind, value, _ = self.peek()
        if kind == "word":
            self.i += 1
            return value.upper()
        return None


def _check_unsupported(word, offset):
    if word and word.upper() in _UNSUPPORTED:
        raise UnsupportedFeatureError(word.upper(), column=offset + 1)


def _parse_term(tokens, prefixes):
    kind, value, off = tokens.next()
    if kind == "iri":
        body = value[1:-1]
        if not body:
            raise ParseError("empty IRI", column=off + 1)
        return Iri(body)
    if kind == "var":
        return Var(value[1:])
    if kind == "lit":
        raw = value[1:-1]
        text = re.sub(
            r"\\(.)",
            lambda m: {"n": "\n", "r": "\r", "t": "\t", '"': '"', "\\": "\\"}.get(
                m.group(1), m.group(1)
            ),
            raw,
        )
        datatype = None
        kind2, value2, _ = tokens.peek()
        # ^^<iri> arrives as word '^^' fused? our tokenizer: '^^' matches word
        if kind2 == "word" and value2.startswith("^^"):
            tokens.next()
            if value2 == "^^":
                kind3, value3, off3 = tokens.next()
                if kind3 != "iri":
                    raise ParseError("expected datatype IRI after ^^", column=off3 + 1)
                datatype = value3[1:-1]
            else:
                raise ParseError("malformed datatype suffix", column=off + 1)
        return Literal(text, datatype)
    if kind == "word":
        _check_unsupported(value, off)
        if ":" in value:
            name, _, local = value.partition(":")
            if name not in prefixes:
                raise ParseError(f"unknown prefix {name!r}", column=off + 1)
            return Iri(prefixes[name] + local)
    raise ParseError(f"expected term, found {value!r}", column=off + 1)


def parse_query(text, prefixes=None) -> Query:
    """Parse the query subset; raises ParseError / UnsupportedFeatureError."""
    prefixes = dict(prefixes or {})
    tokens = _Tokens(text)

    while True:
        kind, value, off = tokens.peek()
        if kind == "word" and value.upper() == "PREFIX":
            tokens.next()
            kind, value, off = tokens.next()
            if kind != "word" or not value.endswith(":"):
                raise ParseError("expected prefix name ending in ':'", column=off + 1)
            name = value[:-1]
            kind, iri, off = tokens.next()
            if kind != "iri":
                raise ParseError("expected <IRI> in PREFIX", column=off + 1)
            prefixes[name] = iri[1:-1]
            continue
        break

    kind, value, off = tokens.next()
    if kind != "word" or value.upper() != "SELECT":
        _check_unsupported(value, off)
        raise ParseError(f"expected SELECT, found {value!r}", column=off + 1)

    select_all = False
    variables: list[str] = []
    kind, value, off = tokens.peek()
    if kind == "word" and value.upper() == "DISTINCT":
        tokens.next()  # DISTINCT is the only semantics we have anyway
        kind, value, off = tokens.peek()
    if kind == "punct" and value == "*":
        tokens.next()
    else:
        while True:
            kind, value, off = tokens.peek()
            if kind == "var":
                tokens.next()
                variables.append(value[1:])
            else:
                break
        if not variables:
            raise ParseError("SELECT needs variables or *", column=off + 1)
    if not variables:
        select_all = True

    kind, value, off = tokens.next()
    if kind != "word" or value.upper() != "WHERE":
        _check_unsupported(value, off)
        raise ParseError(f"expected WHERE, found {value!r}", column=off + 1)
    tokens.next("{")

    patterns: list[Pattern] = []
    filters: list[tuple[str, Term]] = []
    while True:
        kind, value, off = tokens.peek()
        if kind is None:
            raise ParseError("unterminated WHERE block")
        if kind == "punct" and value == "}":
            tokens.next()
            break
        if kind == "punct" and value == "{":
            raise UnsupportedFeatureError("GROUP", column=off + 1)
        if kind == "word" and value.upper() == "FILTER":
            tokens.next()
            tokens.next("(")
            kind, value, off = tokens.next()
            if kind != "var":
                raise ParseError("FILTER must test a variable", column=off + 1)
            fvar = value[1:]
            kind, op, off = tokens.next()
            nk, nv, _ = tokens.peek()
            if op in ("!", "<", ">") and nk == "punct" and nv == "=":
                tokens.next()
                op += "="
            if op != "=":
                raise UnsupportedFeatureError(f"FILTER {op}", column=off + 1)
            fterm = _parse_term(tokens, prefixes)
            if isinstance(fterm, Var):
                raise UnsupportedFeatureError("FILTER ?var = ?var", column=off + 1)
            tokens.next(")")
            kind, value, _ = tokens.peek()
            if kind == "punct" and value == ".":
                tokens.next()
            filters.append((fvar, fterm))
            continue
        if kind == "word":
            _check_unsupported(value, off)
        s = _parse_term(tokens, prefixes)
        p = _parse_term(tokens, prefixes)
        o = _parse_term(tokens, prefixes)
        if isinstance(s, Literal):
            raise ParseError("literal subjects are not allowed", column=off + 1)
        if isinstance(p, Literal):
            raise ParseError("literal predicates are not allowed", column=off + 1)
        tokens.next(".")
        patterns.append((s, p, o))

    limit = None
    kind, value, off = tokens.peek()
    if kind == "word":
        if value.upper() == "LIMIT":
            tokens.next()
            kind, value, off = tokens.next()
            if kind != "word" or not value.isdigit() or int(value) <= 0:
                raise ParseError("LIMIT needs a positive integer", column=off + 1)
            limit = int(value)
        else:
            _check_unsupported(value, off)
    kind, value, off = tokens.peek()
    if kind is not None:
        _check_unsupported(value if kind == "word" else None, off)
        raise ParseError(f"trailing content {value!r}", column=off + 1)

    if not patterns:
        raise ParseError("WHERE block needs at least one triple pattern")
    query = Query(variables, select_all, patterns, filters, limit)
    in_patterns = set(query.pattern_variables())
    for v in variables:
        if v not in in_patterns:
            raise ParseError(f"selected variable ?{v} not used in any pattern")
    for v, _ in filters:
        if v not in in_patterns:
            raise ParseError(f"filtered variable ?{v} not used in any pattern")
    if query.select_all:
        query.variables = query.pattern_variables()
    return query


def _bind(position, binding):
    if isinstance(position, Var):
        return binding.get(position.name)
    return position


def binding_key(binding) -> str:
    """Canonical serialization of one solution, used for ordering."""
    return "|".join(f"?{v}={binding[v].n3()}" for v in sorted(binding))


def evaluate(store: TripleStore, query: Query) -> SolutionSet:
    """Join the patterns left to right, then filter, project, dedupe, sort."""
    bindings = [{}]
    for s, p, o in query.patterns:
        next_bindings = []
        for binding in bindings:
            bs, bp, bo = _bind(s, binding), _bind(p, binding), _bind(o, binding)
            for triple in store.match(bs, bp, bo):
                new = dict(binding)
                ok = True
                for position, value in ((s, triple.subject), (p, triple.predicate), (o, triple.object)):
                    if isinstance(position, Var):
                        bound = new.get(position.name)
                        if bound is None:
                            new[position.name] = value
                        elif bound != value:
                            ok = False
                            break
                if ok:
                    next_bindings.append(new)
        bindings = next_bindings
        if not bindings:
            break

    for fvar, fterm in query.filters:
        bindings = [b for b in bindings if b.get(fvar) == fterm]

    projected = [{v: b[v] for v in query.variables} for b in bindings]
    unique = {binding_key(b): b for b in projected}
    out = [unique[k] for k in sorted(unique)]
    if query.limit is not None:
        out = out[: query.limit]
    return SolutionSet(list(query.variables), out)
