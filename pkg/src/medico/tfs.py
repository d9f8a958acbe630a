"""Typed feature structures with reentrancy, unification, and subsumption.

A structure is a rooted directed graph. Each node has a type from a
hierarchy, a feature map to child nodes, and optionally an atomic value
(atoms have no features). Shared nodes express reentrancy and are preserved
by unification, which merges two structures into their most specific
common instance or fails.

Hierarchy text format: one ``subtype <child> <parent>`` line per edge;
``#`` comments. Every type is below ``top``. Meets must be unique, checked
at load time.
"""

from .errors import NotFoundError, ParseError, ValidationError

TOP = "top"


class TypeHierarchy:
    def __init__(self, edges=()):
        """edges: iterable of (child, parent) pairs."""
        self._parents = {TOP: set()}
        for child, parent in edges:
            self.add(child, parent)
        self.validate()

    def add(self, child, parent):
        self._parents.setdefault(parent, set())
        self._parents.setdefault(child, set()).add(parent)

    @property
    def types(self):
        return set(self._parents)

    def __contains__(self, name):
        return name in self._parents

    def ancestors(self, name):
        """Reflexive transitive closure upward (every type is below top)."""
        if name not in self._parents:
            raise NotFoundError(f"undeclared type: {name}")
        out = {name, TOP}
        frontier = [name]
        while frontier:
            node = frontier.pop()
            for parent in self._parents[node]:
                if parent not in out:
                    out.add(parent)
                    frontier.append(parent)
        return out

    def descendants(self, name):
        if name not in self._parents:
            raise NotFoundError(f"undeclared type: {name}")
        out = {name}
        changed = True
        while changed:
            changed = False
            for t, parents in self._parents.items():
                if t not in out and parents & out:
                    out.add(t)
                    changed = True
        return out

    def subsumes_type(self, general, specific):
        return general in self.ancestors(specific)

    def meet(self, a, b):
        """Greatest lower bound, or None when the types are incompatible."""
        if a not in self._parents:
            raise NotFoundError(f"undeclared type: {a}")
        if b not in self._parents:
            raise NotFoundError(f"undeclared type: {b}")
        if self.subsumes_type(a, b):
            return b
        if self.subsumes_type(b, a):
            return a
        common = self.descendants(a) & self.descendants(b)
        if not common:
            return None
        maximal = [
            t
            for t in common
            if not any(o != t and t in self.descendants(o) for o in common)
        ]
        if len(maximal) != 1:  # excluded by validate(), kept as a guard
            raise ValidationError(f"ambiguous meet of {a} and {b}: {sorted(maximal)}")
        return maximal[0]

    def validate(self):
        # acyclicity: ancestors() terminating for all types with no type
        # being its own proper ancestor
        for t in self._parents:
            stack, seen = [t], set()
            while stack:
                node = stack.pop()
                for parent in self._parents[node]:
                    if parent == t:
                        raise ValidationError(f"subtype cycle through {t}")
                    if parent not in seen:
                        seen.add(parent)
                        stack.append(parent)
        # unique greatest lower bounds
        types = sorted(self._parents)
        down = {t: self.descendants(t) for t in types}
        for i, a in enumerate(types):
            for b in types[i + 1 :]:
                common = down[a] & down[b]
                maximal = [
                    t
                    for t in common
                    if not any(o != t and t in down[o] for o in common)
                ]
                if len(maximal) > 1:
                    raise ValidationError(
                        f"types {a} and {b} have multiple maximal common subtypes: {sorted(maximal)}"
                    )


def load_hierarchy(text) -> TypeHierarchy:
    edges = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] != "subtype":
            raise ParseError("expected 'subtype <child> <parent>'", line=lineno)
        edges.append((parts[1], parts[2]))
    return TypeHierarchy(edges)


class FSNode:
    """One node of a feature structure. Atoms carry a value and no features."""

    __slots__ = ("type", "features", "atom")

    def __init__(self, type=TOP, features=None, atom=None):
        self.type = type
        self.features = dict(features or {})
        self.atom = atom
        if self.atom is not None and self.features:
            raise ValidationError("atoms cannot have features")

    def __repr__(self):
        return f"FSNode({serialize(self)})"


def atom(value, type=TOP):
    return FSNode(type=type, atom=value)


def _reachable(root):
    seen = []
    stack = [root]
    marked = {id(root)}
    while stack:
        node = stack.pop()
        seen.append(node)
        for child in node.features.values():
            if id(child) not in marked:
                marked.add(id(child))
                stack.append(child)
    return seen


def serialize(root: FSNode) -> str:
    """Canonical text form; equal strings iff structures are isomorphic
    (including reentrancy). Node tags are assigned in traversal order over
    sorted feature names."""
    ids = {}

    def walk(node):
        if id(node) in ids:
            return f"#{ids[id(node)]}"
        ids[id(node)] = len(ids)
        tag = f"#{ids[id(node)]}="
        if node.atom is not None:
            value = node.atom.replace("\\", "\\\\").replace('"', '\\"')
            body = f'"{value}"' if node.type == TOP else f'{node.type} "{value}"'
            return f"{tag}[{body}]"
        inner = " ".join(
            f"{name}:{walk(node.features[name])}" for name in sorted(node.features)
        )
        return f"{tag}[{node.type}{(' ' + inner) if inner else ''}]"

    return walk(root)


def isomorphic(a: FSNode, b: FSNode) -> bool:
    return serialize(a) == serialize(b)


def parse_fs(text: str) -> FSNode:
    """Parse the serialization format: ``[type F:"atom" G:#1=[...] H:#1]``."""
    pos = 0
    tagged = {}

    def skip_ws():
        nonlocal pos
        while pos < len(text) and text[pos].isspace():
            pos += 1

    def fail(msg):
        raise ParseError(f"{msg} (at {pos})", column=pos + 1)

    def parse_node():
        nonlocal pos
        skip_ws()
        tag = None
        if pos < len(text) and text[pos] == "#":
            end = pos + 1
            while end < len(text) and text[end].isdigit():
                end += 1
            tag = text[pos + 1 : end]
            if not tag:
                fail("empty node tag")
            pos = end
            if pos < len(text) and text[pos] == "=":
                pos += 1
            else:
                if tag not in tagged:
                    fail(f"undefined back-reference #{tag}")
                return tagged[tag]
        skip_ws()
        if pos >= len(text) or text[pos] != "[":
            fail("expected '['")
        pos += 1
        skip_ws()
        node = FSNode()
        if tag is not None:
            tagged[tag] = node
        # optional type name
        start = pos
        while pos < len(text) and (text[pos].isalnum() or text[pos] in "_-"):
            pos += 1
        type_name = text[start:pos] or TOP
        node.type = type_name
        skip_ws()
        if pos < len(text) and text[pos] == '"':
            node.atom = parse_string()
            skip_ws()
            if pos >= len(text) or text[pos] != "]":
                fail("atom node cannot have features")
            pos += 1
            return node
        while pos < len(text) and text[pos] != "]":
            start = pos
            while pos < len(text) and (text[pos].isalnum() or text[pos] in "_-"):
                pos += 1
            name = text[start:pos]
            if not name:
                fail("expected feature name")
            skip_ws()
            if pos >= len(text) or text[pos] != ":":
                fail("expected ':' after feature name")
            pos += 1
            skip_ws()
            if text[pos] == '"':
                child = FSNode(atom=parse_string())
            else:
                child = parse_node()
            if name in node.features:
                fail(f"duplicate feature {name}")
            node.features[name] = child
            skip_ws()
        if pos >= len(text):
            fail("unterminated structure")
        pos += 1
        return node

    def parse_string():
        nonlocal pos
        pos += 1  # opening quote
        out = []
        while pos < len(text):
            c = text[pos]
            if c == "\\":
                if pos + 1 >= len(text):
                    fail("dangling escape")
                out.append(text[pos + 1])
                pos += 2
                continue
            if c == '"':
                pos += 1
                return "".join(out)
            out.append(c)
            pos += 1
        fail("unterminated string")

    node = parse_node()
    skip_ws()
    if pos != len(text):
        fail("trailing content")
    return node


class UnificationFailure(Exception):
    """Internal signal; unify() returns None instead of raising."""


def unify(hierarchy: TypeHierarchy, a: FSNode, b: FSNode) -> FSNode | None:
    """Most general structure subsumed by both inputs, or None.

    Inputs are never mutated; the result is a fresh graph. Reentrancies of
    both inputs are preserved and merged via union-find over node classes.
    """
    parent = {}
    info = {}  # representative id -> [type, atom, features dict]

    def find(node):
        path = []
        while id(node) in parent:
            path.append(node)
            node = parent[id(node)]
        for p in path:
            parent[id(p)] = node
        return node

    def get_info(node):
        if id(node) not in info:
            info[id(node)] = [node.type, node.atom, dict(node.features)]
        return info[id(node)]

    def union(n1, n2):
        r1, r2 = find(n1), find(n2)
        if r1 is r2:
            return
        i1, i2 = get_info(r1), get_info(r2)
        met = hierarchy.meet(i1[0], i2[0])
        if met is None:
            raise UnificationFailure(f"type clash {i1[0]} / {i2[0]}")
        if i1[1] is not None and i2[1] is not None and i1[1] != i2[1]:
            raise UnificationFailure(f"atom clash {i1[1]!r} / {i2[1]!r}")
        merged_atom = i1[1] if i1[1] is not None else i2[1]
        if merged_atom is not None and (i1[2] or i2[2]):
            raise UnificationFailure("atom unified against structure with features")
        parent[id(r2)] = r1
        i1[0] = met
        i1[1] = merged_atom
        shared = []
        for name, child2 in i2[2].items():
            if name in i1[2]:
                shared.append((i1[2][name], child2))
            else:
                i1[2][name] = child2
        info.pop(id(r2), None)
        for c1, c2 in shared:
            union(c1, c2)

    try:
        union(a, b)
    except UnificationFailure:
        return None

    # rebuild a fresh graph over the equivalence classes
    rebuilt = {}

    def build(node):
        rep = find(node)
        if id(rep) in rebuilt:
            return rebuilt[id(rep)]
        node_type, node_atom, features = get_info(rep)
        fresh = FSNode(type=node_type, atom=node_atom)
        rebuilt[id(rep)] = fresh
        for name, child in features.items():
            fresh.features[name] = build(child)
        return fresh

    return build(a)


def subsumes(hierarchy: TypeHierarchy, general: FSNode, specific: FSNode) -> bool:
    """True iff a structure/reentrancy-preserving mapping sends `general`
    into `specific` with every mapped type a supertype-or-equal."""
    mapping = {}

    def walk(g, s):
        if id(g) in mapping:
            return mapping[id(g)] is s
        mapping[id(g)] = s
        if not hierarchy.subsumes_type(g.type, s.type):
            return False
        if g.atom is not None:
            return s.atom == g.atom
        for name, child in g.features.items():
            if name not in s.features:
                return False
            if not walk(child, s.features[name]):
                return False
        return True

    return walk(general, specific)


def copy_fs(root: FSNode) -> FSNode:
    """Structure-preserving deep copy (shared nodes stay shared)."""
    copies = {}

    def walk(node):
        if id(node) in copies:
            return copies[id(node)]
        fresh = FSNode(type=node.type, atom=node.atom)
        copies[id(node)] = fresh
        for name, child in node.features.items():
            fresh.features[name] = walk(child)
        return fresh

    return walk(root)
