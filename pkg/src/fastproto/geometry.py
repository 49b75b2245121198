"""Desk-scale CSG evaluation: exact primitive bounding boxes via support
functions and a seed-reproducible Monte Carlo volume estimate.

Scenes are built from the neutral command dialect (primitives, booleans,
transforms).  Points are tested in each solid's local frame, so rotation
and anisotropic scale stay exact for membership; leaf bounding boxes are
exact through the affine map because the support function of A·K is
h(Aᵀd).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

from .errors import DegenerateScene, UnknownCommand

MC_BLOCK = 1 << 16

PRIMITIVE_COMMANDS = ("box", "sphere", "cylinder", "cone", "torus")
BOOLEAN_COMMANDS = ("union", "difference", "intersection")
TRANSFORM_COMMANDS = ("translate", "rotate", "scale")
MODIFIER_COMMANDS = ("fillet",)


class CommandLike(Protocol):
    command_id: str
    arguments: dict
    target: str


# Default parameters used when a primitive is created underspecified.
PRIMITIVE_DEFAULTS: dict[str, dict[str, float]] = {
    "box": {"width": 1.0, "depth": 1.0, "height": 1.0},
    "sphere": {"radius": 1.0},
    "cylinder": {"radius": 0.5, "height": 1.0},
    "cone": {"radius_bottom": 0.5, "radius_top": 0.05, "height": 1.0},
    "torus": {"radius_ring": 0.8, "radius_tube": 0.15},
}


def _axis_rotation(axis: str, angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)
    raise ValueError(f"rotation axis must be x, y, or z, got {axis!r}")


@dataclass
class Node:
    """A solid: either a primitive leaf or a boolean combination, with an
    affine placement (linear part times point plus center)."""

    kind: str  # primitive name or boolean op
    params: dict[str, float] = field(default_factory=dict)
    children: list["Node"] = field(default_factory=list)
    child_names: list[str] = field(default_factory=list)
    linear: np.ndarray = field(default_factory=lambda: np.eye(3))
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    # -- membership -------------------------------------------------------------

    def contains(self, pts: np.ndarray) -> np.ndarray:
        local = (pts - self.center) @ np.linalg.inv(self.linear).T
        if self.kind in PRIMITIVE_COMMANDS:
            return self._primitive_contains(local)
        inner = [c.contains(local) for c in self.children]
        if self.kind == "union":
            out = inner[0]
            for m in inner[1:]:
                out = out | m
            return out
        if self.kind == "intersection":
            out = inner[0]
            for m in inner[1:]:
                out = out & m
            return out
        if self.kind == "difference":
            out = inner[0]
            for m in inner[1:]:
                out = out & ~m
            return out
        raise ValueError(f"unknown node kind {self.kind!r}")

    def _primitive_contains(self, p: np.ndarray) -> np.ndarray:
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        q = self.params
        if self.kind == "box":
            return (
                (np.abs(x) <= q["width"] / 2)
                & (np.abs(y) <= q["depth"] / 2)
                & (np.abs(z) <= q["height"] / 2)
            )
        if self.kind == "sphere":
            return x * x + y * y + z * z <= q["radius"] ** 2
        if self.kind == "cylinder":
            return (x * x + y * y <= q["radius"] ** 2) & (np.abs(z) <= q["height"] / 2)
        if self.kind == "cone":
            h = q["height"]
            t = (z + h / 2) / h
            rad = q["radius_bottom"] + (q["radius_top"] - q["radius_bottom"]) * t
            return (t >= 0) & (t <= 1) & (x * x + y * y <= rad * rad)
        if self.kind == "torus":
            ring = np.sqrt(x * x + y * y) - q["radius_ring"]
            return ring * ring + z * z <= q["radius_tube"] ** 2
        raise ValueError(f"unknown primitive {self.kind!r}")

    # -- support / bounding box ---------------------------------------------------

    def _local_support(self, u: np.ndarray) -> float:
        q = self.params
        uxy = math.hypot(u[0], u[1])
        if self.kind == "box":
            return (
                q["width"] / 2 * abs(u[0])
                + q["depth"] / 2 * abs(u[1])
                + q["height"] / 2 * abs(u[2])
            )
        if self.kind == "sphere":
            return q["radius"] * float(np.linalg.norm(u))
        if self.kind == "cylinder":
            return q["radius"] * uxy + q["height"] / 2 * abs(u[2])
        if self.kind == "cone":
            h2 = q["height"] / 2
            return max(
                -h2 * u[2] + q["radius_bottom"] * uxy,
                h2 * u[2] + q["radius_top"] * uxy,
            )
        if self.kind == "torus":
            return q["radius_ring"] * uxy + q["radius_tube"] * float(np.linalg.norm(u))
        raise ValueError(f"unknown primitive {self.kind!r}")

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind in PRIMITIVE_COMMANDS:
            lo = np.zeros(3)
            hi = np.zeros(3)
            for i in range(3):
                e = np.zeros(3)
                e[i] = 1.0
                hi[i] = self.center[i] + self._local_support(self.linear.T @ e)
                lo[i] = self.center[i] - self._local_support(self.linear.T @ -e)
            return lo, hi
        boxes = [c.aabb() for c in self.children]
        if self.kind == "union":
            lo = np.min([b[0] for b in boxes], axis=0)
            hi = np.max([b[1] for b in boxes], axis=0)
        elif self.kind == "intersection":
            lo = np.max([b[0] for b in boxes], axis=0)
            hi = np.min([b[1] for b in boxes], axis=0)
            hi = np.maximum(hi, lo)  # may be empty
        else:  # difference: bounded by the positive operand
            lo, hi = boxes[0]
        # propagate this node's own affine placement conservatively
        corners = np.array(
            [[a, b, c] for a in (lo[0], hi[0]) for b in (lo[1], hi[1]) for c in (lo[2], hi[2])]
        )
        world = corners @ self.linear.T + self.center
        return world.min(axis=0), world.max(axis=0)


@dataclass
class Scene:
    """Named solids plus the set still visible (not consumed by booleans)."""

    solids: dict[str, Node] = field(default_factory=dict)
    visible: list[str] = field(default_factory=list)
    ops: list[dict] = field(default_factory=list)

    def node(self, handle: str) -> Node:
        n = self.solids.get(handle)
        if n is None:
            raise UnknownCommand(handle)
        return n


def build_scene(commands: Iterable[CommandLike]) -> Scene:
    """Interpret a command sequence into a scene graph.

    Placement commands use set-semantics: a translate with ``relative_to``
    anchors the target at the referenced solid's current center plus the
    offset.  Later placements of the same target win.
    """
    scene = Scene()
    for cmd in commands:
        cid = cmd.command_id
        args = dict(cmd.arguments)
        if cid in PRIMITIVE_COMMANDS:
            params = dict(PRIMITIVE_DEFAULTS[cid])
            for k, v in args.items():
                if k in params:
                    params[k] = float(v)
            scene.solids[cmd.target] = Node(kind=cid, params=params)
            scene.visible.append(cmd.target)
        elif cid in BOOLEAN_COMMANDS:
            a = scene.node(args["a"])
            b = scene.node(args["b"])
            node = Node(kind=cid, children=[a, b], child_names=[args["a"], args["b"]])
            for consumed in (args["a"], args["b"]):
                if consumed in scene.visible:
                    scene.visible.remove(consumed)
            scene.solids[cmd.target] = node
            scene.visible.append(cmd.target)
            scene.ops.append({"op": cid, "inputs": [args["a"], args["b"]],
                              "target": cmd.target})
        elif cid == "translate":
            node = scene.node(cmd.target)
            offset = np.array(
                [float(args.get("x", 0)), float(args.get("y", 0)), float(args.get("z", 0))]
            )
            ref = args.get("relative_to")
            base = scene.node(ref).center if ref else np.zeros(3)
            node.center = base + offset
        elif cid == "rotate":
            node = scene.node(cmd.target)
            rot = _axis_rotation(args.get("axis", "z"), float(args.get("angle", 0.0)))
            node.linear = rot @ node.linear
        elif cid == "scale":
            node = scene.node(cmd.target)
            s = np.diag(
                [float(args.get("sx", 1)), float(args.get("sy", 1)), float(args.get("sz", 1))]
            )
            node.linear = s @ node.linear
        elif cid in MODIFIER_COMMANDS:
            # edge modifiers have no volumetric effect at desk scale
            scene.node(cmd.target).params.setdefault("fillet_radius",
                                                     float(args.get("radius", 0.0)))
        else:
            raise UnknownCommand(cid)
    return scene


@dataclass
class SceneStats:
    part_boxes: dict[str, tuple[list[float], list[float]]]
    volume: float
    stderr: float
    samples: int
    intersections: list[tuple[str, str]]

    def to_dict(self) -> dict:
        return {
            "part_boxes": {k: [list(lo), list(hi)] for k, (lo, hi) in self.part_boxes.items()},
            "volume": self.volume,
            "stderr": self.stderr,
            "samples": self.samples,
            "intersections": [list(pair) for pair in self.intersections],
        }


def _mc_block(
    scene: Scene, lo: np.ndarray, span: np.ndarray, seed: int, block: int, count: int
) -> tuple[int, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101, block]))
    pts = lo + rng.random((count, 3)) * span
    inside = np.column_stack(
        [scene.node(h).contains(pts) for h in scene.visible]
    )
    hits = int(np.any(inside, axis=1).sum())
    overlap = inside.T.astype(np.int64) @ inside.astype(np.int64)
    return hits, overlap


def evaluate_scene(
    scene: Scene, samples: int, seed: int = 0, workers: int = 1
) -> SceneStats:
    if not scene.visible:
        raise DegenerateScene("scene contains no solids")
    boxes = {h: scene.node(h).aabb() for h in scene.visible}
    lo = np.min([b[0] for b in boxes.values()], axis=0)
    hi = np.max([b[1] for b in boxes.values()], axis=0)
    span = hi - lo
    if not np.all(span > 0):
        raise DegenerateScene("scene bounding box has zero extent")
    box_volume = float(np.prod(span))

    blocks = []
    remaining = samples
    idx = 0
    while remaining > 0:
        count = min(MC_BLOCK, remaining)
        blocks.append((idx, count))
        remaining -= count
        idx += 1

    n_vis = len(scene.visible)
    total_hits = 0
    overlap = np.zeros((n_vis, n_vis), dtype=np.int64)
    if workers <= 1:
        results = [
            _mc_block(scene, lo, span, seed, b, c) for b, c in blocks
        ]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda bc: _mc_block(scene, lo, span, seed, bc[0], bc[1]), blocks)
            )
    for hits, ov in results:
        total_hits += hits
        overlap += ov

    p = total_hits / samples if samples else 0.0
    volume = box_volume * p
    stderr = box_volume * math.sqrt(p * (1 - p) / samples) if samples else 0.0
    pairs = []
    for i in range(n_vis):
        for j in range(i + 1, n_vis):
            if overlap[i, j] > 0:
                pairs.append((scene.visible[i], scene.visible[j]))
    return SceneStats(
        part_boxes={h: (list(map(float, b[0])), list(map(float, b[1])))
                    for h, b in boxes.items()},
        volume=volume,
        stderr=stderr,
        samples=samples,
        intersections=pairs,
    )


def evaluate_commands(
    commands: Iterable[CommandLike], samples: int, seed: int = 0, workers: int = 1
) -> SceneStats:
    if samples < 1:
        raise ValueError("sample count must be >= 1")
    return evaluate_scene(build_scene(commands), samples, seed, workers)


def scene_export(commands: Iterable[CommandLike]) -> dict:
    """Scene JSON for the studio UI: placed primitives plus boolean ops."""
    scene = build_scene(commands)
    parts = []

    def emit(handle: str, node: Node, parent_affine: tuple[np.ndarray, np.ndarray]):
        linear = parent_affine[0] @ node.linear
        center = parent_affine[0] @ node.center + parent_affine[1]
        if node.kind in PRIMITIVE_COMMANDS:
            parts.append(
                {
                    "id": handle,
                    "primitive": node.kind,
                    "params": {k: float(v) for k, v in node.params.items()},
                    "pose": {
                        "center": [float(v) for v in center],
                        "basis": [[float(v) for v in row] for row in linear],
                    },
                }
            )
        else:
            for i, child in enumerate(node.children):
                name = node.child_names[i] if i < len(node.child_names) else f"{handle}[{i}]"
                emit(name, child, (linear, center))

    for handle in scene.visible:
        emit(handle, scene.node(handle), (np.eye(3), np.zeros(3)))
    return {"parts": parts, "ops": scene.ops}
