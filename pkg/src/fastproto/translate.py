"""The two mappings of the pipeline: grounding a designer instruction into
a program delta against the domain interface, and compiling a program into
the neutral CSG command dialect.

Both directions are deterministic: grounding is lexicon-driven with fuzzy
reference resolution (normalized edit distance, ties broken by the
hierarchical construct model), and compilation is a pure fold over the
program in declaration order.  Relation placements are expressed relative
to the host solid so that a delta touching one part can never perturb
commands originating elsewhere.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from . import geometry
from .catalog import Catalog
from .constructs import (
    Construct,
    DomainInterface,
    DslProgram,
    Instruction,
    PartConstruct,
    RelationConstruct,
    construct_log_prob,
    is_first_order,
    subpart_base,
)
from .errors import (
    MissingFactor,
    UnboundOperation,
    UnknownCommand,
    UnknownDescriptor,
    UnknownQuantifier,
    UnresolvableReference,
)
from .geometry import SceneStats, evaluate_commands, scene_export

# ---------------------------------------------------------------------------
# Neutral dialect plumbing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelingCommand:
    command_id: str
    arguments: dict[str, Any]
    target: str

    def to_dict(self) -> dict:
        return {"cmd": self.command_id, "args": self.arguments, "target": self.target}


@dataclass
class ModelingProgram:
    commands: list[ModelingCommand] = field(default_factory=list)
    provenance: dict[int, str] = field(default_factory=dict)

    def append(self, cmd: ModelingCommand, origin: str):
        self.provenance[len(self.commands)] = origin
        self.commands.append(cmd)

    def __len__(self) -> int:
        return len(self.commands)


def serialize_modeling(program: ModelingProgram) -> str:
    """JSON-lines wire format, one command per line; byte-deterministic."""
    return "\n".join(
        json.dumps(c.to_dict(), sort_keys=True) for c in program.commands
    ) + ("\n" if program.commands else "")


def parse_modeling(text: str) -> ModelingProgram:
    program = ModelingProgram()
    for line in text.splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        program.append(
            ModelingCommand(
                command_id=raw["cmd"], arguments=dict(raw["args"]), target=raw["target"]
            ),
            origin=raw.get("origin", ""),
        )
    return program


# Subpart base names -> dialect primitive plus parameter overrides.
SHAPE_ALIASES: dict[str, tuple[str, dict[str, float]]] = {
    "box": ("box", {}),
    "cube": ("box", {}),
    "cuboid": ("box", {}),
    "rectangle": ("box", {"height": 0.1}),
    "thin_box": ("box", {"depth": 0.12}),
    "vertical_thin_box": ("box", {"width": 0.12, "height": 1.4}),
    "slightly_elevated_box": ("box", {"height": 0.25}),
    "rounded_box": ("box", {}),
    "curved_flat_handle": ("box", {"depth": 0.3, "height": 0.18}),
    "u_shape_frame": ("torus", {"radius_ring": 0.9, "radius_tube": 0.08}),
    "ring": ("torus", {"radius_ring": 0.5, "radius_tube": 0.06}),
    "sphere": ("sphere", {}),
    "ball": ("sphere", {}),
    "dome": ("sphere", {}),
    "cylinder": ("cylinder", {}),
    "tube": ("cylinder", {}),
    "cone": ("cone", {}),
    "torus": ("torus", {}),
}

# property -> (primitive parameter, multiplier) per primitive
PROPERTY_PARAMS: dict[str, dict[str, tuple[str, float]]] = {
    "sphere": {
        "radius": ("radius", 1.0),
        "diameter": ("radius", 0.5),
        "height": ("radius", 0.5),
        "width": ("radius", 0.5),
        "length": ("radius", 0.5),
    },
    "cylinder": {
        "radius": ("radius", 1.0),
        "diameter": ("radius", 0.5),
        "height": ("height", 1.0),
        "length": ("height", 1.0),
        "width": ("radius", 0.5),
    },
    "cone": {
        "radius": ("radius_bottom", 1.0),
        "diameter": ("radius_bottom", 0.5),
        "tip_radius": ("radius_top", 1.0),
        "height": ("height", 1.0),
        "length": ("height", 1.0),
    },
    "torus": {
        "radius": ("radius_ring", 1.0),
        "diameter": ("radius_ring", 0.5),
        "length": ("radius_ring", 0.5),
        "height": ("radius_tube", 0.5),
        "thickness": ("radius_tube", 1.0),
        "width": ("radius_ring", 0.5),
    },
    "box": {
        "width": ("width", 1.0),
        "length": ("depth", 1.0),
        "depth": ("depth", 1.0),
        "height": ("height", 1.0),
        "radius": ("width", 0.5),  # loose dimensional alias for box-ish shapes
        "diameter": ("width", 1.0),
    },
}

# properties realized as transforms / modifiers rather than primitive params
TILT_PROPERTIES = frozenset({"angle"})
FILLET_PROPERTIES = frozenset({"edge_radius", "smoothness"})
HOLLOW_PROPERTIES = frozenset({"cavity_depth", "wall_thickness"})

PART_OPERATIONS = frozenset(
    {
        "assign", "set", "increase", "decrease", "flatten", "widen", "narrow",
        "elongate", "elevate", "tilt", "smooth", "hollow",
    }
)
RELATION_OPERATIONS = frozenset(
    {"assign", "attach", "align", "adjust", "keep", "fuse", "intersect"}
)
SUPPORTED_OPERATIONS = PART_OPERATIONS | RELATION_OPERATIONS

AZIMUTH_SLOTS = (0.0, 90.0, 180.0, 270.0)

# descriptor -> placement effect kind (resolved in _relation_commands)
_RADIAL_DESCRIPTORS = frozenset(
    {"side", "beside", "extend_from", "connected", "attached_to_rear",
     "behind_front_edge", "symmetrical"}
)
_NOOP_DESCRIPTORS = frozenset({"contrast", "seamless", "vertical", "fused"})

POSE_DESCRIPTORS = frozenset(
    {
        "top center", "top", "flush", "beneath", "underneath", "below",
        "aligned", "aligned_horizontal", "higher", "lower", "rear_higher",
        "surround", "around", "through", "recessed", "slide_outward",
        "tilted_upward", "sloped_downward", "horizontal", "front",
        "front_bottom_corner", "rear", "opposite", "side", "beside",
        "extend_from", "connected", "attached_to_rear", "behind_front_edge",
        "symmetrical",
    }
) | _NOOP_DESCRIPTORS


def descriptor_known(token: str) -> bool:
    return token in POSE_DESCRIPTORS or token.startswith("opposite_")


# ---------------------------------------------------------------------------
# Quantifier grounding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantifierRule:
    kind: str  # "mult" | "add" | "percentile" | "identity"
    factor: float = 1.0
    amount: float = 0.0
    q: float = 50.0


# Comparatives move values +-20% by default; "slightly" halves the
# deviation; absolute descriptors land on the domain value distribution's
# 25th/75th percentile.
DEFAULT_QUANTIFIERS: dict[str, QuantifierRule] = {
    "narrower": QuantifierRule("mult", factor=0.8),
    "thinner": QuantifierRule("mult", factor=0.8),
    "smaller": QuantifierRule("mult", factor=0.8),
    "shorter": QuantifierRule("mult", factor=0.8),
    "lower": QuantifierRule("mult", factor=0.8),
    "flatter": QuantifierRule("mult", factor=0.8),
    "wider": QuantifierRule("mult", factor=1.2),
    "thicker": QuantifierRule("mult", factor=1.2),
    "larger": QuantifierRule("mult", factor=1.2),
    "bigger": QuantifierRule("mult", factor=1.2),
    "taller": QuantifierRule("mult", factor=1.2),
    "longer": QuantifierRule("mult", factor=1.2),
    "higher": QuantifierRule("mult", factor=1.2),
    "deeper": QuantifierRule("mult", factor=1.2),
    "curved": QuantifierRule("add", amount=20.0),
    "short": QuantifierRule("percentile", q=25.0),
    "small": QuantifierRule("percentile", q=25.0),
    "thin": QuantifierRule("percentile", q=25.0),
    "shallow": QuantifierRule("percentile", q=25.0),
    "tall": QuantifierRule("percentile", q=75.0),
    "long": QuantifierRule("percentile", q=75.0),
    "wide": QuantifierRule("percentile", q=75.0),
    "deep": QuantifierRule("percentile", q=75.0),
    "same": QuantifierRule("identity"),
    "keep": QuantifierRule("identity"),
    # second-order operation tokens themselves ground to default extents so
    # every operation bound in an interface has a magnitude rule
    "increase": QuantifierRule("mult", factor=1.2),
    "decrease": QuantifierRule("mult", factor=0.8),
    "widen": QuantifierRule("mult", factor=1.2),
    "narrow": QuantifierRule("mult", factor=0.8),
    "elongate": QuantifierRule("mult", factor=1.2),
    "flatten": QuantifierRule("mult", factor=0.8),
    "elevate": QuantifierRule("add", amount=0.2),
    "tilt": QuantifierRule("add", amount=20.0),
    "smooth": QuantifierRule("add", amount=0.1),
    "hollow": QuantifierRule("add", amount=0.5),
    "attach": QuantifierRule("identity"),
    "align": QuantifierRule("identity"),
    "adjust": QuantifierRule("identity"),
    "fuse": QuantifierRule("identity"),
    "intersect": QuantifierRule("identity"),
}


def uncovered_operations(qt: "QuantifierTable", iface: DomainInterface) -> list[str]:
    """Second-order operation tokens bound in the interface that lack a
    quantifier rule (must be empty for a well-formed pairing)."""
    bound: set[str] = set()
    for subs in iface.parts.values():
        for props in subs.values():
            for ops in props.values():
                bound.update(op for op in ops if not is_first_order(op))
    for ops in iface.relation_ops.values():
        bound.update(op for op in ops if not is_first_order(op))
    return sorted(op for op in bound if op not in qt.rules)

SOFTENERS = {"slightly": 0.5, "a_bit": 0.5, "subtly": 0.5}
AMPLIFIERS = {"much": 1.5, "significantly": 1.5, "very": 1.5}


@dataclass
class QuantifierTable:
    rules: dict[str, QuantifierRule] = field(default_factory=lambda: dict(DEFAULT_QUANTIFIERS))
    value_stats: dict[str, list[float]] = field(default_factory=dict)

    @classmethod
    def for_interface(cls, iface: DomainInterface) -> "QuantifierTable":
        return cls(value_stats=dict(iface.value_stats))

    def rule(self, token: str) -> QuantifierRule:
        r = self.rules.get(token)
        if r is None:
            raise UnknownQuantifier(f"no rule for quantifier token {token!r}")
        return r


def _percentile(values: Sequence[float], q: float) -> float:
    ordered = sorted(values)
    if not ordered:
        raise ValueError("empty value distribution")
    pos = (len(ordered) - 1) * q / 100.0
    lo = int(math.floor(pos))
    hi = int(math.ceil(pos))
    frac = pos - lo
    return ordered[lo] * (1 - frac) + ordered[hi] * frac


def apply_quantifier(
    value: float,
    token: str,
    qt: QuantifierTable,
    prop: Optional[str] = None,
    bounds: Optional[tuple[float, float]] = None,
) -> float:
    """Apply a (possibly softened) subjective quantifier to a value.

    ``token`` may be a compound like "slightly wider": softeners and
    amplifiers scale the rule's deviation from identity.  Percentile
    rules consult the domain value distribution for ``prop`` and fall
    back to +-25% when no distribution is known.
    """
    words = token.replace("-", "_").split()
    strength = 1.0
    core: Optional[str] = None
    for w in words:
        if w in SOFTENERS:
            strength *= SOFTENERS[w]
        elif w in AMPLIFIERS:
            strength *= AMPLIFIERS[w]
        elif core is None:
            core = w
        else:
            raise UnknownQuantifier(f"cannot parse quantifier phrase {token!r}")
    if core is None:
        raise UnknownQuantifier(f"quantifier phrase {token!r} has no core token")
    rule = qt.rule(core)

    if rule.kind == "identity":
        out = value
    elif rule.kind == "mult":
        out = value * (1.0 + (rule.factor - 1.0) * strength)
    elif rule.kind == "add":
        out = value + rule.amount * strength
    elif rule.kind == "percentile":
        stats = qt.value_stats.get(prop or "", [])
        if stats:
            out = _percentile(stats, rule.q)
        else:
            out = value * (0.75 if rule.q <= 50 else 1.25)
    else:  # pragma: no cover - rules are constructed internally
        raise UnknownQuantifier(f"unknown rule kind {rule.kind!r}")

    if bounds is not None:
        out = min(max(out, bounds[0]), bounds[1])
    return out


def quantifier_extent(token: str, qt: QuantifierTable) -> tuple[str, float]:
    """Direction and extent of a comparative: 'slightly narrower' ->
    ('decrease', 0.1)."""
    words = token.replace("-", "_").split()
    strength = 1.0
    core = None
    for w in words:
        if w in SOFTENERS:
            strength *= SOFTENERS[w]
        elif w in AMPLIFIERS:
            strength *= AMPLIFIERS[w]
        elif core is None:
            core = w
    if core is None:
        raise UnknownQuantifier(token)
    rule = qt.rule(core)
    if rule.kind == "identity":
        return "keep", 0.0
    if rule.kind == "mult":
        deviation = abs(rule.factor - 1.0) * strength
        return ("decrease" if rule.factor < 1.0 else "increase", deviation)
    if rule.kind == "add":
        return ("increase" if rule.amount >= 0 else "decrease", abs(rule.amount) * strength)
    return ("assign", rule.q)


# ---------------------------------------------------------------------------
# Program state fold (effective values per part)
# ---------------------------------------------------------------------------

@dataclass
class _PartState:
    values: dict[str, dict[str, float]] = field(default_factory=dict)  # subpart -> prop -> v
    scale: list[float] = field(default_factory=lambda: [1.0, 1.0, 1.0])
    tilt: float = 0.0
    fillet: float = 0.0
    hollow: float = 0.0
    lift: float = 0.0


def _base_value(part_state: _PartState, subpart: str, prop: str) -> float:
    cur = part_state.values.get(subpart, {}).get(prop)
    if cur is not None:
        return cur
    primitive, overrides = _shape_of(subpart)
    params = dict(geometry.PRIMITIVE_DEFAULTS[primitive])
    params.update(overrides)
    mapping = PROPERTY_PARAMS[primitive].get(prop)
    if mapping is None:
        return 1.0
    param, mult = mapping
    return params[param] / mult if mult else params[param]


def _shape_of(subpart: str) -> tuple[str, dict[str, float]]:
    base = subpart_base(subpart)
    alias = SHAPE_ALIASES.get(base)
    if alias is None:
        # unknown shapes degrade to a unit box so programs stay renderable
        return "box", {}
    return alias


def _fold_program(program: DslProgram) -> dict[str, _PartState]:
    states: dict[str, _PartState] = {p: _PartState() for p in program.parts}
    for c in program.deltas:
        if not isinstance(c, PartConstruct):
            continue
        st = states.setdefault(c.part, _PartState())
        op = c.operation
        if op not in SUPPORTED_OPERATIONS:
            raise UnboundOperation(c.key())
        if op in ("assign", "set"):
            if isinstance(c.value, (int, float)) and not isinstance(c.value, bool):
                st.values.setdefault(c.subpart, {})[c.property] = float(c.value)
            continue
        extent = float(c.delta or 0.0)
        if op == "increase":
            base = _base_value(st, c.subpart, c.property)
            st.values.setdefault(c.subpart, {})[c.property] = base * (1.0 + extent)
        elif op == "decrease":
            base = _base_value(st, c.subpart, c.property)
            st.values.setdefault(c.subpart, {})[c.property] = base * max(
                0.05, 1.0 - extent
            )
        elif op == "flatten":
            st.scale[2] *= max(0.05, 1.0 - extent)
        elif op == "widen":
            st.scale[0] *= 1.0 + extent
            st.scale[1] *= 1.0 + extent
        elif op == "narrow":
            st.scale[0] *= max(0.05, 1.0 - extent)
            st.scale[1] *= max(0.05, 1.0 - extent)
        elif op == "elongate":
            st.scale[2] *= 1.0 + extent
        elif op == "elevate":
            st.lift += extent
        elif op == "tilt":
            st.tilt += extent
        elif op == "smooth":
            st.fillet = max(st.fillet, extent)
        elif op == "hollow":
            st.hollow = max(st.hollow, min(0.9, extent))
    return states


def _primitive_args(
    subpart: str, values: dict[str, float]
) -> tuple[str, dict[str, float]]:
    primitive, overrides = _shape_of(subpart)
    args: dict[str, float] = dict(overrides)
    for prop, v in values.items():
        if prop in TILT_PROPERTIES or prop in FILLET_PROPERTIES or prop in HOLLOW_PROPERTIES:
            continue
        mapping = PROPERTY_PARAMS[primitive].get(prop)
        if mapping is None:
            continue
        param, mult = mapping
        args[param] = v * mult
    return primitive, args


def _resolved_params(subpart: str, values: dict[str, float]) -> dict[str, float]:
    primitive, args = _primitive_args(subpart, values)
    params = dict(geometry.PRIMITIVE_DEFAULTS[primitive])
    params.update(args)
    return params


def _subpart_half_extents(subpart: str, values: dict[str, float]) -> tuple[float, float, float]:
    primitive, _ = _shape_of(subpart)
    p = _resolved_params(subpart, values)
    if primitive == "box":
        return p["width"] / 2, p["depth"] / 2, p["height"] / 2
    if primitive == "sphere":
        r = p["radius"]
        return r, r, r
    if primitive == "cylinder":
        return p["radius"], p["radius"], p["height"] / 2
    if primitive == "cone":
        r = max(p["radius_bottom"], p["radius_top"])
        return r, r, p["height"] / 2
    if primitive == "torus":
        r = p["radius_ring"] + p["radius_tube"]
        return r, r, p["radius_tube"]
    raise UnknownCommand(primitive)


def _part_half_extents(
    part: str, program: DslProgram, states: dict[str, _PartState]
) -> tuple[float, float, float]:
    st = states.get(part, _PartState())
    subs = program.parts.get(part, {})
    if not subs:
        return 0.5, 0.5, 0.5
    hx = hy = 0.0
    total_height = 0.0
    for sub in subs:
        ex, ey, ez = _subpart_half_extents(sub, st.values.get(sub, {}))
        hx = max(hx, ex)
        hy = max(hy, ey)
        total_height += 2 * ez
    return hx * st.scale[0], hy * st.scale[1], (total_height / 2) * st.scale[2]


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------

def _clamp_to_catalog(catalog: Optional[Catalog], command_id: str,
                      args: dict[str, Any]) -> dict[str, Any]:
    if catalog is None or command_id not in catalog:
        return args
    entry = catalog.entry(command_id)
    out = dict(args)
    for name, v in args.items():
        p = entry.parameter(name)
        if p is not None and p.range and isinstance(v, (int, float)):
            out[name] = min(max(float(v), p.range[0]), p.range[1])
    return out


class _Emitter:
    def __init__(self, catalog: Optional[Catalog]):
        self.program = ModelingProgram()
        self.catalog = catalog

    def emit(self, command_id: str, args: dict[str, Any], target: str, origin: str):
        if self.catalog is not None and command_id not in self.catalog:
            raise UnknownCommand(command_id)
        args = _clamp_to_catalog(self.catalog, command_id, args)
        self.program.append(
            ModelingCommand(command_id=command_id, arguments=args, target=target),
            origin,
        )


def _part_handle(part: str, program: DslProgram) -> str:
    subs = list(program.parts.get(part, {}))
    if len(subs) == 1:
        return f"{part}.{subs[0]}"
    return part


def compile_program(program: DslProgram, catalog: Optional[Catalog] = None) -> ModelingProgram:
    """Compile a DSL program into the neutral command dialect.

    Deterministic in declaration order.  Every emitted command records the
    construct it originated from (a part name or a relation key), and a
    relation's transform arguments depend only on its two endpoints'
    local geometry, never on upstream placements.
    """
    program.validate()
    states = _fold_program(program)
    em = _Emitter(catalog)

    # parts: primitives, intra-part stacking, union of subparts, modifiers
    hollow_parts: list[str] = []
    for part, subs in program.parts.items():
        st = states.get(part, _PartState())
        sub_names = list(subs)
        prev = None
        for sub in sub_names:
            primitive, args = _primitive_args(sub, st.values.get(sub, {}))
            target = f"{part}.{sub}"
            em.emit(primitive, args, target, part)
            if prev is not None:
                _, _, ez_prev = _subpart_half_extents(prev, st.values.get(prev, {}))
                _, _, ez_cur = _subpart_half_extents(sub, st.values.get(sub, {}))
                em.emit(
                    "translate",
                    {"relative_to": f"{part}.{prev}", "z": ez_prev + ez_cur},
                    target,
                    part,
                )
            prev = sub
        if len(sub_names) > 1:
            acc = f"{part}.{sub_names[0]}"
            for i, sub in enumerate(sub_names[1:], start=1):
                out = part if i == len(sub_names) - 1 else f"{part}~{i}"
                em.emit("union", {"a": acc, "b": f"{part}.{sub}"}, out, part)
                acc = out
        handle = _part_handle(part, program)

        tilt = st.tilt
        for sub in sub_names:
            tilt += st.values.get(sub, {}).get("angle", 0.0)
        if tilt:
            em.emit("rotate", {"axis": "y", "angle": tilt}, handle, part)
        if st.scale != [1.0, 1.0, 1.0]:
            em.emit(
                "scale",
                {"sx": st.scale[0], "sy": st.scale[1], "sz": st.scale[2]},
                handle,
                part,
            )
        fillet = st.fillet
        for sub in sub_names:
            vals = st.values.get(sub, {})
            for prop in FILLET_PROPERTIES:
                fillet = max(fillet, vals.get(prop, 0.0))
        if fillet:
            em.emit("fillet", {"radius": fillet}, handle, part)
        if st.lift:
            em.emit("translate", {"z": st.lift}, handle, part)
        if st.hollow or any(
            p in st.values.get(sub, {}) for sub in sub_names for p in HOLLOW_PROPERTIES
        ):
            hollow_parts.append(part)

    # relations: azimuth slots allocated in declaration order
    azimuths: dict[str, float] = {}
    relation_ops: list[RelationConstruct] = [
        c for c in program.deltas if isinstance(c, RelationConstruct)
    ]
    op_for_relation: dict[str, str] = {}
    for c in relation_ops:
        op_for_relation[c.relation] = c.operation
        if c.operation not in SUPPORTED_OPERATIONS:
            raise UnboundOperation(c.key())

    slot_counter = 0
    seen_parts: set[str] = set()
    placed_children: set[str] = set()
    first_part = next(iter(program.parts), None)
    for key, tokens in program.relationships.items():
        host, child = key.split(" <-> ")
        # the newcomer is positioned; an endpoint already anchored in the
        # relation graph (or the root part) acts as the host
        if child == first_part or (child in seen_parts and host not in seen_parts):
            host, child = child, host
        seen_parts.update((host, child))
        host_dims = _part_half_extents(host, program, states)
        child_dims = _part_half_extents(child, program, states)
        host_handle = _part_handle(host, program)
        child_handle = _part_handle(child, program)

        # pass 1: azimuth
        az: Optional[float] = None
        radial = False
        for tok in tokens:
            if not descriptor_known(tok):
                raise UnknownDescriptor(tok)
            if tok in _RADIAL_DESCRIPTORS:
                radial = True
                if az is None:
                    az = AZIMUTH_SLOTS[slot_counter % len(AZIMUTH_SLOTS)]
            if tok == "front" or tok == "front_bottom_corner":
                az, radial = 90.0, True
            elif tok in ("rear", "attached_to_rear", "behind_front_edge"):
                az, radial = 270.0, True
            elif tok.startswith("opposite_"):
                ref = tok[len("opposite_"):]
                az, radial = (azimuths.get(ref, 0.0) + 180.0) % 360.0, True
            elif tok == "symmetrical":
                az, radial = (azimuths.get(host, 0.0) + 180.0) % 360.0, True
        slot_counter += 1
        if radial and az is None:
            az = 0.0

        # pass 2: offsets and rotations
        dx = dy = dz = 0.0
        rotations: list[tuple[str, float]] = []
        if radial:
            rad = math.radians(az or 0.0)
            ux, uy = math.cos(rad), math.sin(rad)
            reach_host = abs(ux) * host_dims[0] + abs(uy) * host_dims[1]
            reach_child = abs(ux) * child_dims[0] + abs(uy) * child_dims[1]
            dist = reach_host + 0.5 * reach_child
            dx, dy = ux * dist, uy * dist
        for tok in tokens:
            if tok in ("top center", "top", "flush"):
                dz = host_dims[2] + child_dims[2]
                if tok != "top":
                    dx = dy = 0.0
            elif tok in ("beneath", "underneath", "below"):
                dz = -(host_dims[2] + child_dims[2])
            elif tok == "aligned_horizontal":
                dz = 0.0
            elif tok == "aligned":
                dx_keep, dy_keep = dx, dy
                if not radial:
                    dx, dy = 0.0, 0.0
                else:
                    dx, dy = dx_keep, dy_keep
            elif tok == "higher" or tok == "rear_higher":
                dz += 0.25 * (host_dims[2] + child_dims[2])
            elif tok == "lower":
                dz -= 0.25 * (host_dims[2] + child_dims[2])
            elif tok in ("surround", "around", "through"):
                dx = dy = dz = 0.0
            elif tok == "recessed":
                dx *= 0.7
                dy *= 0.7
            elif tok == "slide_outward":
                dx *= 1.3
                dy *= 1.3
            elif tok == "front_bottom_corner":
                dz = -(host_dims[2] - child_dims[2])
            elif tok == "tilted_upward":
                rotations.append(("y", -20.0))
            elif tok == "sloped_downward":
                rotations.append(("x", -15.0))
            elif tok == "horizontal":
                rotations.append(("x", 90.0))
        # first placement wins: later relations only constrain orientation
        if child not in placed_children:
            em.emit(
                "translate",
                {"relative_to": host_handle, "x": dx, "y": dy, "z": dz},
                child_handle,
                key,
            )
            placed_children.add(child)
            if radial:
                azimuths[child] = az or 0.0
        for axis, angle in rotations:
            em.emit("rotate", {"axis": axis, "angle": angle}, child_handle, key)

        op = op_for_relation.get(key)
        if op == "fuse":
            em.emit("union", {"a": host_handle, "b": child_handle},
                    f"{host}+{child}", key)
        elif op == "intersect":
            em.emit("intersection", {"a": host_handle, "b": child_handle},
                    f"{host}&{child}", key)

    # hollow cavities carve after placement so they track the final pose
    for part in hollow_parts:
        st = states[part]
        subs = list(program.parts.get(part, {}))
        first = subs[0]
        fraction = st.hollow or 0.5
        for sub in subs:
            for prop in HOLLOW_PROPERTIES:
                if prop in st.values.get(sub, {}):
                    fraction = min(0.9, st.values[sub][prop])
        primitive, args = _primitive_args(first, st.values.get(first, {}))
        params = _resolved_params(first, st.values.get(first, {}))
        shrunk = {k: v * (1.0 - fraction * 0.5) for k, v in params.items()}
        cavity = f"{part}.__cavity"
        handle = _part_handle(part, program)
        em.emit(primitive, shrunk, cavity, part)
        em.emit("translate", {"relative_to": handle}, cavity, part)
        em.emit("difference", {"a": handle, "b": cavity}, f"{part}~hollow", part)

    return em.program


def evaluate_csg(
    program: ModelingProgram, samples: int, seed: int = 0, workers: int = 1
) -> SceneStats:
    """Monte Carlo scene statistics for a compiled program."""
    return evaluate_commands(program.commands, samples, seed=seed, workers=workers)


def export_scene(program: ModelingProgram) -> dict:
    return scene_export(program.commands)


# ---------------------------------------------------------------------------
# Instruction grounding
# ---------------------------------------------------------------------------

_WORD_RE = re.compile(r"[a-z0-9_]+")

_CREATION_VERBS = frozenset(
    {"make", "create", "attach", "extend", "add", "form", "place", "position",
     "construct", "build", "design", "shape"}
)

_STOPWORDS = frozenset(
    {"the", "a", "an", "of", "to", "and", "it", "its", "with", "at", "on",
     "in", "from", "into", "along", "same", "axis", "toward", "towards",
     "tip", "top", "side", "sides", "main", "opposite", "shaped", "this",
     "that", "be", "is", "are", "keep", "so", "as", "by", "for", "two",
     "each", "all", "slightly", "very", "more", "bit"}
)

# comparative / verb -> ordered candidate properties and the operation used
# when none of them is a primitive dimension
_ADJUSTMENT_LEXICON: dict[str, tuple[tuple[str, ...], str]] = {
    "narrower": (("radius", "width", "diameter"), "narrow"),
    "thinner": (("radius", "width", "thickness"), "narrow"),
    "wider": (("radius", "width", "diameter"), "widen"),
    "thicker": (("radius", "thickness", "width"), "widen"),
    "shorter": (("height", "length"), "flatten"),
    "taller": (("height",), "elongate"),
    "longer": (("length", "height"), "elongate"),
    "smaller": (("radius", "width"), "narrow"),
    "larger": (("radius", "width"), "widen"),
    "bigger": (("radius", "width"), "widen"),
    "flatten": ((), "flatten"),
    "flattened": ((), "flatten"),
    "flat": ((), "flatten"),
    "curved": (("angle",), "tilt"),
    "curvier": (("angle",), "tilt"),
    "smooth": (("edge_radius", "smoothness"), "smooth"),
    "smoother": (("edge_radius", "smoothness"), "smooth"),
    "rounder": (("radius",), "widen"),
    "raise": ((), "elevate"),
    "raised": ((), "elevate"),
    "elevated": ((), "elevate"),
    "recess": ((), "elevate"),
    "hollow": (("cavity_depth",), "hollow"),
}

_COMPARATIVE_EXTENT: dict[str, float] = {
    "narrower": 0.2, "thinner": 0.2, "wider": 0.2, "thicker": 0.2,
    "shorter": 0.2, "taller": 0.2, "longer": 0.2, "smaller": 0.2,
    "larger": 0.2, "bigger": 0.2, "flatten": 0.2, "flattened": 0.2,
    "flat": 0.2, "curved": 20.0, "curvier": 10.0, "smooth": 0.1,
    "smoother": 0.1, "rounder": 0.2, "raise": 0.2, "raised": 0.2,
    "elevated": 0.2, "recess": 0.1, "hollow": 0.5,
}

_ABSOLUTE_ADJECTIVES: dict[str, tuple[tuple[str, ...], float]] = {
    "short": (("height", "length"), 25.0),
    "small": (("radius", "width"), 25.0),
    "thin": (("radius", "width"), 25.0),
    "tall": (("height",), 75.0),
    "long": (("length", "height"), 75.0),
    "big": (("radius", "width"), 75.0),
    "large": (("radius", "width"), 75.0),
}

_SHAPE_NOUNS: dict[str, str] = {
    "sphere": "sphere", "spherical": "sphere", "ball": "sphere",
    "dome": "sphere", "rounded": "", "cylinder": "cylinder",
    "cylindrical": "cylinder", "tube": "cylinder", "cone": "cone",
    "conical": "cone", "tapered": "cone", "torus": "torus", "ring": "torus",
    "donut": "torus", "box": "box", "cube": "box", "cuboid": "box",
    "rectangular": "box", "block": "box",
}


def _edit_distance(a: str, b: str) -> int:
    """Optimal string alignment distance (edits plus adjacent transposition,
    so common typos like 'spuot' stay close)."""
    rows = [[i + j if i * j == 0 else 0 for j in range(len(b) + 1)]
            for i in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            best = min(rows[i - 1][j] + 1, rows[i][j - 1] + 1, rows[i - 1][j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                best = min(best, rows[i - 2][j - 2] + 1)
            rows[i][j] = best
    return rows[-1][-1]


def normalized_distance(a: str, b: str) -> float:
    if not a and not b:
        return 0.0
    return _edit_distance(a, b) / max(len(a), len(b))


FUZZY_THRESHOLD = 0.34


def _singular(token: str) -> str:
    if token.endswith("ies"):
        return token[:-3] + "y"
    if token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def resolve_reference(
    token: str, candidates: Sequence[str]
) -> Optional[tuple[str, float]]:
    """Closest candidate within the fuzzy threshold, if any."""
    best: Optional[tuple[str, float]] = None
    for cand in candidates:
        c = cand.lower()
        for probe in (token, _singular(token)):
            d = normalized_distance(probe, c)
            if d <= FUZZY_THRESHOLD and (best is None or d < best[1]):
                best = (cand, d)
    return best


@dataclass
class ProgramDelta:
    constructs: list[Construct] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"constructs": [c.to_dict() for c in self.constructs]}

    @classmethod
    def from_dict(cls, d: dict) -> "ProgramDelta":
        from .constructs import construct_from_dict

        return cls(constructs=[construct_from_dict(c) for c in d.get("constructs", [])])


def _safe_log_prob(
    iface: DomainInterface, instruction: Instruction, construct: Construct
) -> float:
    try:
        return construct_log_prob(instruction, construct, iface)
    except MissingFactor:
        return -1e9


def _primary_property(subpart: str, props: Sequence[str]) -> str:
    """First property that names a primitive dimension; modifier-ish
    properties (fillets, cavities) make poor initial assignments."""
    primitive, _ = _shape_of(subpart)
    for p in props:
        if p in PROPERTY_PARAMS.get(primitive, {}):
            return p
    return props[0] if props else "radius"


def _default_value(iface: DomainInterface, subpart: str, prop: str) -> float:
    stats = iface.value_stats.get(f"{subpart}.{prop}", [])
    if stats:
        return _percentile(stats, 50.0)
    primitive, overrides = _shape_of(subpart)
    params = dict(geometry.PRIMITIVE_DEFAULTS[primitive])
    params.update(overrides)
    mapping = PROPERTY_PARAMS[primitive].get(prop)
    if mapping is None:
        return 1.0
    param, mult = mapping
    return params[param] / mult if mult else params[param]


def _host_of(part: str, state: DslProgram) -> Optional[str]:
    for key in state.relationships:
        a, b = key.split(" <-> ")
        if b == part:
            return a
    return None


def _relation_phrases(text: str, state: DslProgram, iface: DomainInterface):
    """Extract (host, descriptor tokens) placement cues from the raw text."""
    low = text.lower()
    cues: list[tuple[Optional[str], list[str]]] = []

    m = re.search(r"opposite side of (?:the )?(\w+)", low)
    if m:
        ref = resolve_reference(m.group(1), list(state.parts) or iface.part_names())
        if ref:
            host = _host_of(ref[0], state) or (next(iter(state.parts), None))
            cues.append((host, ["side", f"opposite_{ref[0]}"]))
            return cues
    m = re.search(r"(?:from|on|at) the side of (?:the )?(\w+)", low)
    if m:
        ref = resolve_reference(m.group(1), list(state.parts) or iface.part_names())
        if ref:
            cues.append((ref[0], ["side"]))
            return cues
    m = re.search(r"(?:to|onto|on) (?:the )?(\w+)$|(?:to|onto|on) (?:the )?(\w+)[\.,]", low)
    if m:
        token = m.group(1) or m.group(2)
        ref = resolve_reference(token, list(state.parts))
        if ref:
            cues.append((ref[0], ["flush"]))
            return cues
    if "at the top" in low or "on top" in low or "to the top" in low:
        cues.append((next(iter(state.parts), None), ["top center"]))
    elif re.search(r"beneath|underneath|under the", low):
        cues.append((next(iter(state.parts), None), ["beneath"]))
    return cues


def _relation_descriptor_tokens(text: str) -> list[str]:
    low = text.lower()
    tokens = []
    if "horizontal axis" in low or "horizontally" in low or "aligned" in low or "align" in low:
        tokens.append("aligned_horizontal")
    if "symmetrical" in low or "symmetric" in low or "mirror" in low:
        tokens.append("symmetrical")
    if "surround" in low:
        tokens.append("surround")
    if "beside" in low or "next to" in low:
        tokens.append("beside")
    return tokens


def ground_instruction(
    text: str,
    iface: DomainInterface,
    state: DslProgram,
    ks=None,
    qt: Optional[QuantifierTable] = None,
) -> ProgramDelta:
    """Ground a designer instruction into a program delta.

    Resolution order: creation of a new domain part (with placement cues),
    then property adjustment of an existing part, then relation-only
    configuration.  References resolve by exact id, then fuzzy match;
    ambiguous groundings pick the candidate maximizing the construct
    model's joint probability.  Raises UnresolvableReference when no
    concept is close enough.
    """
    if not text.strip():
        raise UnresolvableReference("<empty>")
    qt = qt or QuantifierTable.for_interface(iface)
    instruction = Instruction.infer(text, iface.part_names())
    low = text.lower()
    words = _WORD_RE.findall(low.replace("-", " "))

    softener = next((w for w in words if w in SOFTENERS), None)
    amplifier = next((w for w in words if w in AMPLIFIERS), None)

    def scaled(extent: float) -> float:
        if softener:
            extent *= SOFTENERS[softener]
        if amplifier:
            extent *= AMPLIFIERS[amplifier]
        return extent

    # --- mentions ---------------------------------------------------------
    existing_mentions: list[str] = []
    domain_mentions: list[str] = []
    for w in words:
        if w in _STOPWORDS:
            continue
        ref = resolve_reference(w, list(state.parts))
        if ref and ref[0] not in existing_mentions:
            existing_mentions.append(ref[0])
        dref = resolve_reference(w, iface.part_names())
        if dref and dref[0] not in domain_mentions:
            domain_mentions.append(dref[0])

    shape = None
    for w in words:
        s = _SHAPE_NOUNS.get(w)
        if s:
            shape = s
            break

    # subpart-shape references ("the sphere") resolve to the earliest part
    # declared with that shape
    if not existing_mentions and shape:
        for part, subs in state.parts.items():
            if any(subpart_base(sub) == shape for sub in subs):
                existing_mentions.append(part)
                break

    new_parts = [p for p in domain_mentions if p not in state.parts]
    creation = bool(set(words) & _CREATION_VERBS) and bool(new_parts)

    constructs: list[Construct] = []

    if creation:
        part = new_parts[0]
        known_subs = iface.subparts_of(part)
        if shape:
            match = next((s for s in known_subs if subpart_base(s) == shape), None)
            subpart = match or f"{shape}_0"
        elif known_subs:
            subpart = known_subs[0]
        else:
            raise UnresolvableReference(part)
        props = iface.properties_of(part, subpart)

        assigned = False
        for w in words:
            abs_adj = _ABSOLUTE_ADJECTIVES.get(w)
            if not abs_adj:
                continue
            cand_props, q = abs_adj
            prop = next((p for p in cand_props if p in props), None)
            if prop is None:
                continue
            stats = iface.value_stats.get(f"{subpart}.{prop}", [])
            if stats:
                value = _percentile(stats, q)
            else:
                value = _default_value(iface, subpart, prop) * (0.75 if q <= 50 else 1.25)
            constructs.append(
                PartConstruct(part=part, subpart=subpart, property=prop,
                              operation="assign", value=round(value, 6))
            )
            assigned = True
            break
        if not assigned:
            prop = _primary_property(subpart, props)
            constructs.append(
                PartConstruct(part=part, subpart=subpart, property=prop,
                              operation="assign",
                              value=round(_default_value(iface, subpart, prop), 6))
            )

        for host, tokens in _relation_phrases(text, state, iface):
            if host and host != part:
                extra = [t for t in _relation_descriptor_tokens(text) if t not in tokens]
                constructs.append(
                    RelationConstruct(
                        endpoints=(host, part),
                        descriptor=("placement",),
                        operation="attach",
                        value=tuple(tokens + extra),
                        delta=(0.0, 0.0),
                    )
                )

        # commonsense completion: parts that only ever relate to the created
        # part (per the adapted templates) come along with it
        for dependent, dep_tokens in iface.exclusive_dependents(part):
            if dependent in state.parts or dependent in domain_mentions:
                continue
            dep_subs = iface.subparts_of(dependent)
            if not dep_subs:
                continue
            dep_sub = dep_subs[0]
            dep_props = iface.properties_of(dependent, dep_sub)
            dep_prop = _primary_property(dep_sub, dep_props)
            constructs.append(
                PartConstruct(
                    part=dependent, subpart=dep_sub, property=dep_prop,
                    operation="assign",
                    value=round(_default_value(iface, dep_sub, dep_prop), 6),
                )
            )
            constructs.append(
                RelationConstruct(
                    endpoints=(part, dependent),
                    descriptor=("placement",),
                    operation="attach",
                    value=tuple(dep_tokens) or ("top center",),
                    delta=(0.0, 0.0),
                )
            )
        return _finish_delta(constructs, iface, instruction)

    # --- adjustment of an existing part ------------------------------------
    adjustment = None
    for w in words:
        if w in _ADJUSTMENT_LEXICON:
            adjustment = w
            break

    if adjustment and existing_mentions:
        part = existing_mentions[0]
        cand_props, fallback_op = _ADJUSTMENT_LEXICON[adjustment]
        extent = scaled(_COMPARATIVE_EXTENT.get(adjustment, 0.2))

        candidates: list[PartConstruct] = []
        for sub in state.parts.get(part, {}):
            iface_props = iface.properties_of(part, sub)
            for prop in cand_props:
                if prop not in iface_props:
                    continue
                rule = qt.rules.get(adjustment)
                if rule is not None and rule.kind == "mult":
                    op = "decrease" if rule.factor < 1.0 else "increase"
                    ext = scaled(abs(rule.factor - 1.0))
                else:
                    op = fallback_op
                    ext = extent
                if op in iface.operations_for(part, sub, prop):
                    candidates.append(
                        PartConstruct(part=part, subpart=sub, property=prop,
                                      operation=op, delta=round(ext, 6))
                    )
        if not candidates and fallback_op:
            # no named dimension fits; find any concept of the part where the
            # shape-level operation itself is bound
            for sub in state.parts.get(part, {}):
                for prop in iface.properties_of(part, sub):
                    if fallback_op in iface.operations_for(part, sub, prop):
                        candidates.append(
                            PartConstruct(part=part, subpart=sub, property=prop,
                                          operation=fallback_op, delta=round(extent, 6))
                        )
        if not candidates:
            raise UnboundOperation(f"{part}/{adjustment}")

        ranked = sorted(
            candidates,
            key=lambda c: (
                -_safe_log_prob(iface, instruction, c),
                -(ks.score(c) if ks is not None else 0.0),
                c.key(),
            ),
        )
        chosen = ranked[0]
        ops = iface.operations_for(chosen.part, chosen.subpart, chosen.property)
        if ops and chosen.operation not in ops:
            raise UnboundOperation(chosen.key())
        constructs.append(chosen)
        return _finish_delta(constructs, iface, instruction)

    # --- relation-only configuration ---------------------------------------
    tokens = _relation_descriptor_tokens(text)
    if tokens and len(existing_mentions) >= 2:
        link_counts = {
            p: sum(1 for key in state.relationships if p in key.split(" <-> "))
            for p in existing_mentions
        }
        anchor = max(existing_mentions, key=lambda p: (link_counts[p], -existing_mentions.index(p)))
        for other in existing_mentions:
            if other == anchor:
                continue
            existing_key = None
            for key in state.relationships:
                a, b = key.split(" <-> ")
                if {a, b} == {anchor, other}:
                    existing_key = (a, b)
                    break
            endpoints = existing_key or (anchor, other)
            constructs.append(
                RelationConstruct(
                    endpoints=endpoints,
                    descriptor=("placement",),
                    operation="align",
                    value=tuple(tokens),
                    delta=(0.0, 0.0),
                )
            )
        return _finish_delta(constructs, iface, instruction)

    # --- nothing grounded: surface the most suspicious token ----------------
    unresolved = next(
        (
            w for w in words
            if w not in _STOPWORDS
            and w not in _CREATION_VERBS
            and w not in _ADJUSTMENT_LEXICON
            and w not in _SHAPE_NOUNS
            and not resolve_reference(w, iface.part_names())
        ),
        words[-1] if words else "<empty>",
    )
    raise UnresolvableReference(unresolved)


def _finish_delta(
    constructs: list[Construct], iface: DomainInterface, instruction: Instruction
) -> ProgramDelta:
    if not constructs:
        raise UnresolvableReference(instruction.text[:32])
    return ProgramDelta(constructs=constructs)
