"""Typed interface-DSL constructs, program (de)serialization, binding
validation, and the hierarchical joint probability over constructs.

A designer-side program is a set of part declarations plus relationships,
with an ordered list of construct edits ("deltas") recording how the
program evolved.  All values are immutable; operations are pure.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Optional, Union

from .errors import (
    DanglingRelationEndpoint,
    MalformedJson,
    MissingFactor,
    MissingSection,
    UnknownDomain,
)

SCHEMA_VERSION = "v1"

SUBPART_RE = re.compile(r"^(?P<base>[A-Za-z][A-Za-z0-9_]*?)_(?P<index>\d+)$")
RELATION_KEY_RE = re.compile(r"^(?P<a>\S+) <-> (?P<b>\S+)$")

# Operations that assign a property value directly.  Everything else is a
# second-order adjustment and carries a magnitude instead of a value.
FIRST_ORDER_OPERATIONS = frozenset({"assign", "set"})


def is_first_order(operation: str) -> bool:
    return operation in FIRST_ORDER_OPERATIONS


def subpart_base(subpart: str) -> str:
    """'cylinder_0' -> 'cylinder'. Raises ValueError on bad identifiers."""
    m = SUBPART_RE.match(subpart)
    if not m:
        raise ValueError(f"subpart identifier {subpart!r} must match name_index")
    return m.group("base")


def value_token(value: Any) -> str:
    """Canonical categorical token for a value (used as a table outcome key)."""
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(value_token(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class PartConstruct:
    """One part-level DSL unit: a part, one of its physical subparts, a
    property of that subpart, and the operation applied to it.

    First-order operations carry ``value``; second-order operations carry
    ``delta`` (the extent of the adjustment, direction lives in the
    operation name).
    """

    part: str
    subpart: str
    property: str
    operation: str
    value: Any = None
    delta: Optional[float] = None

    def __post_init__(self):
        subpart_base(self.subpart)  # validates the name_index pattern
        if is_first_order(self.operation):
            if self.value is None:
                raise ValueError(
                    f"first-order operation {self.operation!r} requires a value"
                )
            if self.delta is not None:
                raise ValueError("first-order constructs must not carry a delta")
        else:
            if self.delta is None:
                raise ValueError(
                    f"second-order operation {self.operation!r} requires a delta"
                )
            if self.value is not None:
                raise ValueError("second-order constructs must not carry a value")
        if isinstance(self.value, (int, float)) and not isinstance(self.value, bool):
            if self.value < 0:
                raise ValueError("numeric property values must be >= 0")

    @property
    def attribute(self) -> str:
        """The (subpart, property) pair as a single table key."""
        return f"{self.subpart}.{self.property}"

    def key(self) -> str:
        return f"p:{self.part}/{self.subpart}/{self.property}/{self.operation}"

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "kind": "part",
            "part": self.part,
            "subpart": self.subpart,
            "property": self.property,
            "operation": self.operation,
        }
        if self.value is not None:
            out["value"] = self.value
        if self.delta is not None:
            out["delta"] = self.delta
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PartConstruct":
        return cls(
            part=d["part"],
            subpart=d["subpart"],
            property=d["property"],
            operation=d["operation"],
            value=d.get("value"),
            delta=d.get("delta"),
        )


@dataclass(frozen=True)
class RelationConstruct:
    """One relation-level DSL unit: a relationship between two parts, the
    joint descriptor slot it concerns, and the combinatorial operation.

    ``value`` assigns descriptor tokens; ``delta`` is a pair of adjustment
    magnitudes (one per endpoint).
    """

    endpoints: tuple[str, str]
    descriptor: tuple[str, ...]
    operation: str
    value: tuple[str, ...] = ()
    delta: Optional[tuple[float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "endpoints", tuple(self.endpoints))
        object.__setattr__(self, "descriptor", tuple(self.descriptor))
        object.__setattr__(self, "value", tuple(self.value))
        if self.delta is not None:
            object.__setattr__(self, "delta", tuple(self.delta))
            if len(self.delta) != 2:
                raise ValueError("relation delta must be a pair of magnitudes")
        if len(self.endpoints) != 2:
            raise ValueError("relation constructs connect exactly two parts")
        if is_first_order(self.operation):
            if not self.value:
                raise ValueError("first-order relation constructs assign descriptors")
        # second-order relation ops may carry value tokens too (e.g. "attach"
        # introduces descriptors while being an adjustment); only the pairing
        # rule for delta is enforced.

    @property
    def relation(self) -> str:
        return f"{self.endpoints[0]} <-> {self.endpoints[1]}"

    @property
    def attribute(self) -> str:
        return ".".join(self.descriptor) if self.descriptor else "placement"

    def key(self) -> str:
        return f"r:{self.relation}/{self.attribute}/{self.operation}"

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "kind": "relation",
            "endpoints": list(self.endpoints),
            "descriptor": list(self.descriptor),
            "operation": self.operation,
        }
        if self.value:
            out["value"] = list(self.value)
        if self.delta is not None:
            out["delta"] = list(self.delta)
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RelationConstruct":
        delta = d.get("delta")
        return cls(
            endpoints=tuple(d["endpoints"]),
            descriptor=tuple(d.get("descriptor", ())),
            operation=d["operation"],
            value=tuple(d.get("value", ())),
            delta=tuple(delta) if delta is not None else None,
        )


Construct = Union[PartConstruct, RelationConstruct]


def construct_from_dict(d: Mapping[str, Any]) -> Construct:
    kind = d.get("kind")
    if kind == "part":
        return PartConstruct.from_dict(d)
    if kind == "relation":
        return RelationConstruct.from_dict(d)
    raise MalformedJson(f"unknown construct kind {kind!r}")


class InstructionKind(str, Enum):
    GLOBAL = "GLOBAL"
    PART = "PART"
    MIXED = "MIXED"


# Verbs / markers that signal configuration of layout and relationships
# rather than an individual part's property.
_GLOBAL_MARKERS = (
    "attach", "align", "aligned", "opposite", "symmetric", "symmetrical",
    "between", "beneath", "under", "above", "beside", "around", "surround",
    "arrange", "position", "place", "keep", "connect", "apart", "space",
)
_PART_MARKERS = (
    "narrower", "wider", "shorter", "taller", "longer", "thicker", "thinner",
    "larger", "smaller", "bigger", "flatten", "flat", "round", "rounded",
    "curved", "sharp", "smooth", "make", "shape", "form", "create", "extend",
    "recess", "elevate", "radius", "height", "width", "length", "diameter",
)


@dataclass(frozen=True)
class Instruction:
    """A raw designer instruction with its inferred intent kind."""

    text: str
    kind: InstructionKind

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("instruction text must be non-empty")

    @classmethod
    def infer(cls, text: str, part_names: Iterable[str] = ()) -> "Instruction":
        low = text.lower()
        words = set(re.findall(r"[a-z0-9_]+", low))
        mentions = sum(1 for p in part_names if p.lower() in words)
        global_hit = any(m in low for m in _GLOBAL_MARKERS) or mentions >= 2
        part_hit = any(m in low for m in _PART_MARKERS) or mentions == 1
        if global_hit and part_hit:
            kind = InstructionKind.MIXED
        elif global_hit:
            kind = InstructionKind.GLOBAL
        else:
            kind = InstructionKind.PART
        return cls(text=text, kind=kind)


# ---------------------------------------------------------------------------
# DslProgram
# ---------------------------------------------------------------------------

_TOP_LEVEL_KEYS = {"Parts", "Relationships", "Deltas"}


@dataclass
class DslProgram:
    """A designer-side program: part/subpart/property declarations,
    relationships with descriptor lists, and the ordered edit history.

    Declaration order is significant and preserved by serialization.
    """

    parts: dict[str, dict[str, list[str]]] = field(default_factory=dict)
    relationships: dict[str, list[str]] = field(default_factory=dict)
    deltas: list[Construct] = field(default_factory=list)

    def validate(self) -> None:
        for part, subparts in self.parts.items():
            for subpart in subparts:
                subpart_base(subpart)
        for key in self.relationships:
            m = RELATION_KEY_RE.match(key)
            if not m:
                raise MalformedJson(f"relationship key {key!r} must be 'A <-> B'")
            for end in (m.group("a"), m.group("b")):
                if end not in self.parts:
                    raise DanglingRelationEndpoint(end, key)

    def part_count(self) -> int:
        return len(self.parts)

    def relationship_count(self) -> int:
        return len(self.relationships)

    def copy(self) -> "DslProgram":
        return DslProgram(
            parts={p: {s: list(props) for s, props in subs.items()}
                   for p, subs in self.parts.items()},
            relationships={k: list(v) for k, v in self.relationships.items()},
            deltas=list(self.deltas),
        )

    # -- edits ---------------------------------------------------------------

    def declare_part(self, part: str, subpart: str, properties: Iterable[str] = ()):
        subs = self.parts.setdefault(part, {})
        props = subs.setdefault(subpart, [])
        for prop in properties:
            if prop not in props:
                props.append(prop)

    def declare_relationship(self, a: str, b: str, descriptors: Iterable[str] = ()):
        key = f"{a} <-> {b}"
        tokens = self.relationships.setdefault(key, [])
        for tok in descriptors:
            if tok not in tokens:
                tokens.append(tok)

    def apply_delta(self, constructs: Iterable[Construct]) -> "DslProgram":
        """Return a new program with the edits applied and recorded."""
        out = self.copy()
        for c in constructs:
            if isinstance(c, PartConstruct):
                out.declare_part(c.part, c.subpart, [c.property])
            else:
                a, b = c.endpoints
                out.declare_relationship(a, b, c.value or c.descriptor)
            out.deltas.append(c)
        out.validate()
        return out


def parse_program(json_text: str) -> DslProgram:
    """Parse the Parts/Relationships JSON format into a DslProgram.

    Unknown top-level keys are rejected; relationship endpoints must be
    declared parts.
    """
    try:
        raw = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise MalformedJson(f"invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise MalformedJson("program must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise MalformedJson(f"unknown top-level keys: {sorted(unknown)}")
    for section in ("Parts", "Relationships"):
        if section not in raw:
            raise MissingSection(section)

    parts_raw = raw["Parts"]
    rel_raw = raw["Relationships"]
    if not isinstance(parts_raw, dict) or not isinstance(rel_raw, dict):
        raise MalformedJson("'Parts' and 'Relationships' must be objects")

    program = DslProgram()
    for part, subparts in parts_raw.items():
        if not isinstance(subparts, dict):
            raise MalformedJson(f"part {part!r} must map subparts to property lists")
        program.parts[part] = {}
        for subpart, props in subparts.items():
            if not isinstance(props, list) or not all(isinstance(p, str) for p in props):
                raise MalformedJson(
                    f"properties of {part}.{subpart} must be a list of strings"
                )
            try:
                subpart_base(subpart)
            except ValueError as e:
                raise MalformedJson(str(e)) from e
            program.parts[part][subpart] = list(props)

    for key, tokens in rel_raw.items():
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise MalformedJson(f"descriptors of {key!r} must be a list of strings")
        m = RELATION_KEY_RE.match(key)
        if not m:
            raise MalformedJson(f"relationship key {key!r} must be 'A <-> B'")
        program.relationships[key] = list(tokens)

    for construct_raw in raw.get("Deltas", []):
        if not isinstance(construct_raw, dict):
            raise MalformedJson("each delta must be an object")
        program.deltas.append(construct_from_dict(construct_raw))

    program.validate()
    return program


def serialize_program(program: DslProgram) -> str:
    """Canonical JSON: UTF-8, two-space indent, declaration-order keys.

    Byte-deterministic for equal programs; the Deltas section is only
    emitted when edits are present (the plain declaration format matches
    the designer-facing listings).
    """
    doc: dict[str, Any] = {
        "Parts": program.parts,
        "Relationships": program.relationships,
    }
    if program.deltas:
        doc["Deltas"] = [c.to_dict() for c in program.deltas]
    return json.dumps(doc, indent=2, ensure_ascii=False)


def canonical_json(json_text: str) -> str:
    """Re-emit arbitrary JSON in the same canonical form serialize uses."""
    try:
        raw = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise MalformedJson(f"invalid JSON: {e}") from e
    return json.dumps(raw, indent=2, ensure_ascii=False)


# ---------------------------------------------------------------------------
# ConceptTree
# ---------------------------------------------------------------------------

TREE_LEVELS = ("domain", "ident", "subpart", "property", "operation")


@dataclass
class ConceptNode:
    name: str
    level: str
    children: dict[str, "ConceptNode"] = field(default_factory=dict)
    members: list[str] = field(default_factory=list)
    feasibility: Optional[str] = None
    clusters: list[int] = field(default_factory=list)

    def child(self, name: str, level: str) -> "ConceptNode":
        node = self.children.get(name)
        if node is None:
            node = ConceptNode(name=name, level=level)
            self.children[name] = node
        return node

    def walk(self):
        yield self
        for c in self.children.values():
            yield from c.walk()

    def leaves(self):
        if not self.children:
            yield self
        else:
            for c in self.children.values():
                yield from c.leaves()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "level": self.level,
            "members": list(self.members),
            "feasibility": self.feasibility,
            "clusters": list(self.clusters),
            "children": [c.to_dict() for c in self.children.values()],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ConceptNode":
        node = cls(
            name=d["name"],
            level=d["level"],
            members=list(d.get("members", [])),
            feasibility=d.get("feasibility"),
            clusters=list(d.get("clusters", [])),
        )
        for child in d.get("children", []):
            node.children[child["name"]] = cls.from_dict(child)
        return node


@dataclass
class ConceptTree:
    """Hierarchy from macro concepts down to operations: root is the
    domain, then part/relation identifiers, subparts, properties,
    operations."""

    root: ConceptNode

    def depth1_names(self) -> list[str]:
        return list(self.root.children)

    def leaf_count(self) -> int:
        return sum(1 for _ in self.root.leaves() if self.root.children)

    def excerpt(self, max_depth: int = 2) -> dict:
        """A trimmed serialization used as knowledge-query context."""

        def trim(node: ConceptNode, depth: int) -> dict:
            out: dict[str, Any] = {"name": node.name}
            if depth < max_depth and node.children:
                out["children"] = [trim(c, depth + 1) for c in node.children.values()]
            return out

        return trim(self.root, 0)

    def to_dict(self) -> dict:
        return self.root.to_dict()

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ConceptTree":
        return cls(root=ConceptNode.from_dict(d))


# ---------------------------------------------------------------------------
# DomainInterface
# ---------------------------------------------------------------------------

FACTORS = (
    "part_delta_given_op",        # p(v_part' | o_part)
    "relation_delta_given_op",    # p(v_rel'  | o_rel)
    "part_value_given_attr",      # p(v_part  | attr)
    "part_op_given_attr",         # p(o_part  | attr)
    "relation_value_given_attr",  # p(v_rel   | descriptor)
    "relation_op_given_attr",     # p(o_rel   | descriptor)
    "attr_given_ident",           # p(attr    | part-or-relation)
    "ident_given_intent",         # p(part-or-relation | intent kind)
)

CondTables = dict[str, dict[str, dict[str, float]]]

_ROW_SUM_TOL = 1e-9


@dataclass
class BindingViolation:
    concept: str
    operation: str
    reason: str

    def to_dict(self) -> dict:
        return {"concept": self.concept, "operation": self.operation,
                "reason": self.reason}


@dataclass
class ValidationReport:
    violations: list[BindingViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, concept: str, operation: str, reason: str):
        self.violations.append(BindingViolation(concept, operation, reason))

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


@dataclass
class DomainInterface:
    """The adapted interface DSL for one product domain.

    ``parts`` binds each (part, subpart, property) concept to its
    permissible operations; ``relation_vocab`` is the allowed descriptor
    token set; ``relation_ops`` binds descriptor slots to combinatorial
    operations.  ``cond_tables`` holds the conditional probability tables
    of the hierarchical construct model.
    """

    domain: str
    parts: dict[str, dict[str, dict[str, list[str]]]] = field(default_factory=dict)
    relation_vocab: list[str] = field(default_factory=list)
    relation_ops: dict[str, list[str]] = field(default_factory=dict)
    relation_templates: list[dict] = field(default_factory=list)
    bindings: dict[str, str] = field(default_factory=dict)  # construct key -> command id
    cond_tables: CondTables = field(default_factory=dict)
    concept_tree: Optional[ConceptTree] = None
    value_stats: dict[str, list[float]] = field(default_factory=dict)

    # -- queries -------------------------------------------------------------

    def part_names(self) -> list[str]:
        return list(self.parts)

    def subparts_of(self, part: str) -> list[str]:
        return list(self.parts.get(part, {}))

    def properties_of(self, part: str, subpart: str) -> list[str]:
        return list(self.parts.get(part, {}).get(subpart, {}))

    def operations_for(self, part: str, subpart: str, prop: str) -> list[str]:
        return list(self.parts.get(part, {}).get(subpart, {}).get(prop, []))

    def has_concepts(self) -> bool:
        return bool(self.parts) or bool(self.relation_vocab)

    def exclusive_dependents(self, part: str) -> list[tuple[str, list[str]]]:
        """Parts that, per the adapted relation templates, only ever relate
        to ``part`` (e.g. a knob exists only on its lid).  Creating the
        host implies these should come along; returns (dependent,
        descriptor tokens) in template order."""
        partners: dict[str, set[str]] = {}
        tokens: dict[str, list[str]] = {}
        for t in self.relation_templates:
            a, b = t["endpoints"]
            partners.setdefault(b, set()).add(a)
            if b not in tokens:
                tokens[b] = list(t.get("value", []))
            partners.setdefault(a, set()).add(b)
        out = []
        for t in self.relation_templates:
            a, b = t["endpoints"]
            if a == part and partners.get(b) == {part}:
                if all(b != d for d, _ in out):
                    out.append((b, list(t.get("value", []))))
        return out

    def bind(self, part: str, subpart: str, prop: str, operations: Iterable[str]):
        slot = self.parts.setdefault(part, {}).setdefault(subpart, {})
        ops = slot.setdefault(prop, [])
        for op in operations:
            if op not in ops:
                ops.append(op)

    # -- validation ------------------------------------------------------------

    def check_tables(self) -> None:
        for factor, rows in self.cond_tables.items():
            for context, row in rows.items():
                total = sum(row.values())
                if abs(total - 1.0) > _ROW_SUM_TOL:
                    raise ValueError(
                        f"table {factor!r} row {context!r} sums to {total!r}"
                    )

    # -- persistence -------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "domain": self.domain,
            "parts": self.parts,
            "relation_vocab": self.relation_vocab,
            "relation_ops": self.relation_ops,
            "relation_templates": self.relation_templates,
            "bindings": self.bindings,
            "cond_tables": self.cond_tables,
            "concept_tree": self.concept_tree.to_dict() if self.concept_tree else None,
            "value_stats": self.value_stats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DomainInterface":
        if d.get("version") != SCHEMA_VERSION:
            raise MalformedJson(
                f"unsupported interface schema version {d.get('version')!r}"
            )
        tree = d.get("concept_tree")
        iface = cls(
            domain=d["domain"],
            parts={p: {s: {pr: list(ops) for pr, ops in props.items()}
                       for s, props in subs.items()}
                   for p, subs in d.get("parts", {}).items()},
            relation_vocab=list(d.get("relation_vocab", [])),
            relation_ops={k: list(v) for k, v in d.get("relation_ops", {}).items()},
            relation_templates=[dict(t) for t in d.get("relation_templates", [])],
            bindings=dict(d.get("bindings", {})),
            cond_tables={f: {c: dict(row) for c, row in rows.items()}
                         for f, rows in d.get("cond_tables", {}).items()},
            concept_tree=ConceptTree.from_dict(tree) if tree else None,
            value_stats={k: list(v) for k, v in d.get("value_stats", {}).items()},
        )
        iface.check_tables()
        return iface

    @classmethod
    def from_json(cls, text: str) -> "DomainInterface":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise MalformedJson(f"invalid interface JSON: {e}") from e
        return cls.from_dict(raw)

    @classmethod
    def bootstrap(
        cls,
        domain: str,
        programs: Iterable[DslProgram],
        default_ops: Iterable[str] = ("assign", "increase", "decrease"),
    ) -> "DomainInterface":
        """Build a minimal interface covering the given example programs.

        Every declared concept is bound to the default operation set and
        every descriptor token enters the relation vocabulary; probability
        tables are uniform over what was observed.  Useful for seeding a
        domain from collected programs without running adaptation.
        """
        iface = cls(domain=domain)
        ops = list(default_ops)
        rel_tokens: list[str] = []
        for prog in programs:
            for part, subs in prog.parts.items():
                for subpart, props in subs.items():
                    for prop in props:
                        iface.bind(part, subpart, prop, ops)
            for key, tokens in prog.relationships.items():
                for tok in tokens:
                    if tok not in rel_tokens:
                        rel_tokens.append(tok)
                a, b = key.split(" <-> ")
                iface.relation_templates.append(
                    {"endpoints": [a, b], "operation": "attach", "value": list(tokens)}
                )
        iface.relation_vocab = rel_tokens
        iface.relation_ops = {"placement": ["assign", "attach", "align", "adjust"]}
        return iface


def validate_bindings(program: DslProgram, iface: DomainInterface) -> ValidationReport:
    """List every (concept, operation) pair in the program that falls
    outside the interface's permissible set.  Empty report iff the program
    is fully bound."""
    if not iface.has_concepts():
        raise UnknownDomain(f"interface for {iface.domain!r} has no adapted concepts")
    report = ValidationReport()

    vocab = set(iface.relation_vocab)
    for part, subs in program.parts.items():
        if part not in iface.parts:
            report.add(part, "declare", "part not in domain interface")
            continue
        for subpart, props in subs.items():
            for prop in props:
                if prop not in iface.parts[part].get(subpart, {}):
                    report.add(f"{part}.{subpart}.{prop}", "declare",
                               "concept not in domain interface")

    for key, tokens in program.relationships.items():
        for tok in tokens:
            if tok not in vocab:
                report.add(key, tok, "descriptor not in relation vocabulary")

    for c in program.deltas:
        if isinstance(c, PartConstruct):
            ops = iface.operations_for(c.part, c.subpart, c.property)
            if not ops:
                report.add(f"{c.part}.{c.subpart}.{c.property}", c.operation,
                           "concept not in domain interface")
            elif c.operation not in ops:
                report.add(f"{c.part}.{c.subpart}.{c.property}", c.operation,
                           "operation not permissible for concept")
        else:
            slot = c.attribute
            ops = iface.relation_ops.get(slot, iface.relation_ops.get("placement", []))
            if c.operation not in ops:
                report.add(c.relation, c.operation,
                           "operation not permissible for relation")
            for tok in c.value:
                if tok not in vocab:
                    report.add(c.relation, tok,
                               "descriptor not in relation vocabulary")
    return report


# ---------------------------------------------------------------------------
# Joint probability (hierarchical construct model)
# ---------------------------------------------------------------------------

def _lookup(tables: CondTables, factor: str, context: str, outcome: str) -> float:
    rows = tables.get(factor)
    if rows is None:
        raise MissingFactor(factor, context, outcome)
    row = rows.get(context)
    if row is None:
        raise MissingFactor(factor, context, outcome)
    p = row.get(outcome)
    if p is None:
        raise MissingFactor(factor, context, outcome)
    return p


def construct_log_prob(
    instruction: Instruction, construct: Construct, iface: DomainInterface
) -> float:
    """Sum of log factors for one construct under the hierarchical model."""
    t = iface.cond_tables
    kind = instruction.kind.value
    total = 0.0
    if isinstance(construct, PartConstruct):
        attr = construct.attribute
        total += math.log(_lookup(t, "ident_given_intent", kind, construct.part))
        total += math.log(_lookup(t, "attr_given_ident", construct.part, attr))
        total += math.log(_lookup(t, "part_op_given_attr", attr, construct.operation))
        if construct.value is not None:
            total += math.log(
                _lookup(t, "part_value_given_attr", attr, value_token(construct.value))
            )
        if construct.delta is not None:
            total += math.log(
                _lookup(t, "part_delta_given_op", construct.operation,
                        value_token(construct.delta))
            )
    else:
        attr = construct.attribute
        rel = construct.relation
        total += math.log(_lookup(t, "ident_given_intent", kind, rel))
        total += math.log(_lookup(t, "attr_given_ident", rel, attr))
        total += math.log(_lookup(t, "relation_op_given_attr", attr,
                                  construct.operation))
        if construct.value:
            total += math.log(
                _lookup(t, "relation_value_given_attr", attr,
                        value_token(construct.value))
            )
        if construct.delta is not None:
            total += math.log(
                _lookup(t, "relation_delta_given_op", construct.operation,
                        value_token(construct.delta))
            )
    return total


def joint_log_prob(
    instruction: Instruction, program: DslProgram, iface: DomainInterface
) -> float:
    """Natural-log joint probability of a program's constructs under the
    interface's hierarchical tables.  Additive over constructs; 0.0 for a
    program with no edits."""
    return sum(
        construct_log_prob(instruction, c, iface) for c in program.deltas
    )
