"""Ordered pattern rules turning utterances into interpreted acts.

Rules come from a plain-text file (see data/grammar.txt for the format).
Concept spans are resolved against the ontologies, time spans against the
supported time phrases; deictic markers leave unresolved referents for the
fusion step. An utterance matching no rule yields a single Clarify act.
"""

import re
from dataclasses import dataclass, field
from importlib import resources

from .errors import ParseError, UnknownTimePhraseError
from .ontology import lookup_concept, label_of
from .search import resolve_time_phrase
from .tfs import FSNode, atom

INTENTS = (
    "ShowRecords",
    "OpenImages",
    "SelectRegion",
    "Annotate",
    "FindSimilar",
    "GetFindings",
    "NavigateConcept",
    "Clarify",
)

ACT_TYPES = {
    "ShowRecords": "show-records-act",
    "OpenImages": "open-images-act",
    "SelectRegion": "select-region-act",
    "Annotate": "annotate-act",
    "FindSimilar": "find-similar-act",
    "GetFindings": "get-findings-act",
    "NavigateConcept": "navigate-concept-act",
    "Clarify": "clarify-act",
}

_DIMENSION_TYPES = {"anatomy": "anatomy-concept", "imaging": "imaging-concept", "disease": "disease-concept"}

_DEICTIC_RE = {
    "patient": r"(?:this|that)\s+patient|this\s+one|him|her|them",
    "region": r"(?:this|that)\s+region|here|(?:this|that)",
    "image": r"(?:this|that)\s+image",
}

_SEP = r"[\s,:;]+"
_LIST_SPLIT = re.compile(r"\s*(?:,|;|:|\band/or\b|\band\b|\bor\b|\bthen\b)\s*")
_PLACEHOLDER = re.compile(r"\{(concepts?|time|deictic):([a-z]+)(?::([a-z]+))?\}")


@dataclass(frozen=True)
class Slot:
    name: str           # capture name from the rule
    kind: str           # concept | concepts | time | deictic
    deictic_kind: str | None = None


@dataclass
class Rule:
    pattern: str
    intent: str
    args: dict          # slot feature name (upper) -> capture name
    regex: re.Pattern
    slots: dict         # capture name -> Slot
    group_names: dict   # capture name -> regex group name


@dataclass
class InterpretedAct:
    intent: str
    slots: FSNode
    unresolved_deictics: list = field(default_factory=list)  # (feature, kind)
    unknown_terms: list = field(default_factory=list)
    question: str | None = None  # set on Clarify acts
    rule: str | None = None

    def feature(self, name):
        return self.slots.features.get(name)


def clarify(question, unknown_terms=()):
    return InterpretedAct(
        intent="Clarify",
        slots=FSNode(ACT_TYPES["Clarify"]),
        unknown_terms=list(unknown_terms),
        question=question,
    )


def concept_node(store, ref) -> FSNode:
    return FSNode(
        _DIMENSION_TYPES.get(ref.source, "concept"),
        {
            "IRI": atom(ref.iri.value),
            "LABEL": atom(label_of(store, ref.iri)),
        },
    )


def concept_list_node(nodes) -> FSNode:
    out = FSNode("empty-list")
    for node in reversed(nodes):
        out = FSNode("concept-list", {"FIRST": node, "REST": out})
    return out


def iter_concept_list(node):
    while node is not None and node.type == "concept-list":
        yield node.features["FIRST"]
        node = node.features.get("REST")


def _compile_rule(pattern: str, lineno: int):
    """Translate a rule pattern into a regex; literal words are joined by
    runs of whitespace/punctuation."""
    parts = []
    slots = {}
    pos = 0
    group_index = 0
    pieces = []
    for m in _PLACEHOLDER.finditer(pattern):
        literal = pattern[pos : m.start()].strip()
        if literal:
            pieces.append(("lit", literal))
        kind = m.group(1)
        if kind == "deictic":
            deictic_kind, name = m.group(2), m.group(3)
            if deictic_kind not in _DEICTIC_RE or not name:
                raise ParseError(f"bad deictic placeholder {m.group(0)}", line=lineno)
            pieces.append(("slot", Slot(name, "deictic", deictic_kind)))
        else:
            name = m.group(2)
            pieces.append(("slot", Slot(name, kind)))
        pos = m.end()
    tail = pattern[pos:].strip()
    if tail:
        pieces.append(("lit", tail))

    for i, (what, payload) in enumerate(pieces):
        if i > 0:
            parts.append(_SEP)
        if what == "lit":
            words = payload.split()
            parts.append(_SEP.join(re.escape(w) for w in words))
        else:
            slot = payload
            if slot.name in slots:
                raise ParseError(f"duplicate capture {slot.name}", line=lineno)
            slots[slot.name] = slot
            group_index += 1
            if slot.kind == "deictic":
                parts.append(f"(?P<c{group_index}>{_DEICTIC_RE[slot.deictic_kind]})")
            else:
                parts.append(f"(?P<c{group_index}>.+?)")
    regex = re.compile("^" + "".join(parts) + "$", re.IGNORECASE)
    # map capture name -> regex group name
    group_names = {}
    idx = 0
    for what, payload in pieces:
        if what == "slot":
            idx += 1
            group_names[payload.name] = f"c{idx}"
    return regex, slots, group_names


class Grammar:
    def __init__(self, rules):
        self.rules = rules

    @classmethod
    def from_text(cls, text) -> "Grammar":
        rules = []
        for lineno, raw in enumerate(text.split("\n"), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=>" not in line:
                raise ParseError("rule needs 'pattern => Intent(...)'", line=lineno)
            pattern, _, action = line.partition("=>")
            pattern = pattern.strip()
            action = action.strip()
            m = re.fullmatch(r"(\w+)\((.*)\)", action)
            if not m or m.group(1) not in INTENTS:
                raise ParseError(f"bad action {action!r}", line=lineno)
            intent = m.group(1)
            args = {}
            if m.group(2).strip():
                for part in m.group(2).split(","):
                    name, _, capture = part.strip().partition("=")
                    if not capture:
                        raise ParseError(f"bad slot binding {part!r}", line=lineno)
                    args[name.strip().upper()] = capture.strip()
            regex, slots, group_names = _compile_rule(pattern, lineno)
            for capture in args.values():
                if capture not in slots:
                    raise ParseError(f"unknown capture {capture!r}", line=lineno)
            rules.append(Rule(pattern, intent, args, regex, slots, group_names))
        return cls(rules)

    @classmethod
    def bundled(cls) -> "Grammar":
        text = resources.files("medico.data").joinpath("grammar.txt").read_text()
        return cls.from_text(text)

    def parse_utterance(self, text, store, reference_date) -> list:
        """First matching rule wins; no match yields a single Clarify act."""
        normalized = " ".join(text.strip().rstrip(".!?").split()).lower()
        if not normalized:
            return [clarify("I did not catch that. What would you like to do?")]
        for rule in self.rules:
            m = rule.regex.match(normalized)
            if not m:
                continue
            act = self._build_act(rule, m, store, reference_date, text)
            if act is not None:
                return [act]
        return [clarify(f"I did not understand: {text!r}. Could you rephrase?")]

    def _build_act(self, rule, m, store, reference_date, original_text):
        slots_fs = FSNode(ACT_TYPES[rule.intent])
        unresolved = []
        unknown = []
        for feature, capture in rule.args.items():
            slot = rule.slots[capture]
            span = m.group(rule.group_names[capture]).strip()
            if slot.kind == "deictic":
                slots_fs.features[feature] = FSNode(f"{slot.deictic_kind}-referent")
                unresolved.append((feature, slot.deictic_kind))
            elif slot.kind == "time":
                try:
                    start, end = resolve_time_phrase(span, reference_date)
                except UnknownTimePhraseError:
                    return clarify(
                        f"I cannot resolve the time phrase {span!r}. "
                        "Try 'today', 'this week', 'last week' or 'this month'."
                    )
                slots_fs.features[feature] = FSNode(
                    "time-range", {"START": atom(start), "END": atom(end)}
                )
            elif slot.kind == "concept":
                refs = lookup_concept(store, span)
                if not refs:
                    return clarify(f"I do not know the term {span!r}.", unknown_terms=[span])
                slots_fs.features[feature] = concept_node(store, refs[0])
            else:  # concepts
                nodes = []
                for piece in _LIST_SPLIT.split(span):
                    piece = piece.strip()
                    if not piece:
                        continue
                    refs = lookup_concept(store, piece)
                    if refs:
                        nodes.append(concept_node(store, refs[0]))
                    else:
                        unknown.append(piece)
                if not nodes:
                    return clarify(
                        f"I do not know the term{'s' if len(unknown) != 1 else ''} "
                        f"{', '.join(repr(u) for u in unknown)}.",
                        unknown_terms=unknown,
                    )
                slots_fs.features[feature] = concept_list_node(nodes)
        return InterpretedAct(
            intent=rule.intent,
            slots=slots_fs,
            unresolved_deictics=unresolved,
            unknown_terms=unknown,
            rule=rule.pattern,
        )
