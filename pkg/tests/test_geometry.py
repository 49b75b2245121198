import math

import pytest

from fastproto.errors import DegenerateScene, UnknownCommand
from fastproto.geometry import build_scene, scene_export
from fastproto.translate import ModelingCommand, ModelingProgram, evaluate_csg


def _program(*cmds):
    p = ModelingProgram()
    for cid, args, target in cmds:
        p.append(ModelingCommand(cid, args, target), origin=target)
    return p


def test_unit_sphere_volume():
    p = _program(("sphere", {"radius": 1.0}, "s"))
    stats = evaluate_csg(p, samples=10**6, seed=0)
    exact = 4 * math.pi / 3
    assert abs(stats.volume - exact) < 3 * stats.stderr
    assert stats.stderr > 0


def test_disjoint_cubes_volume():
    p = _program(
        ("box", {"width": 1, "depth": 1, "height": 1}, "a"),
        ("box", {"width": 1, "depth": 1, "height": 1}, "b"),
        ("translate", {"x": 3.0}, "b"),
    )
    stats = evaluate_csg(p, samples=10**6, seed=0)
    assert abs(stats.volume - 2.0) < 3 * stats.stderr
    assert stats.intersections == []


def test_overlapping_parts_flagged():
    p = _program(
        ("box", {"width": 1, "depth": 1, "height": 1}, "a"),
        ("box", {"width": 1, "depth": 1, "height": 1}, "b"),
        ("translate", {"x": 0.25}, "b"),
    )
    stats = evaluate_csg(p, samples=50000, seed=0)
    assert ("a", "b") in stats.intersections


def test_empty_program_degenerate():
    with pytest.raises(DegenerateScene):
        evaluate_csg(_program(), samples=1000, seed=0)


def test_seed_reproducible_across_worker_counts():
    p = _program(("sphere", {"radius": 1.0}, "s"),
                 ("box", {"width": 2, "depth": 1, "height": 1}, "b"),
                 ("translate", {"x": 2.5}, "b"))
    results = [evaluate_csg(p, samples=300000, seed=9, workers=w).volume
               for w in (1, 2, 4, 8)]
    assert all(v == results[0] for v in results)


def test_boolean_difference_volume():
    # unit-radius sphere minus concentric half-radius sphere
    p = _program(
        ("sphere", {"radius": 1.0}, "outer"),
        ("sphere", {"radius": 0.5}, "inner"),
        ("difference", {"a": "outer", "b": "inner"}, "shell"),
    )
    stats = evaluate_csg(p, samples=400000, seed=0)
    exact = 4 * math.pi / 3 * (1 - 0.5**3)
    assert abs(stats.volume - exact) < 4 * stats.stderr


def test_boolean_intersection_volume():
    # two unit cubes overlapping by half
    p = _program(
        ("box", {"width": 1, "depth": 1, "height": 1}, "a"),
        ("box", {"width": 1, "depth": 1, "height": 1}, "b"),
        ("translate", {"x": 0.5}, "b"),
        ("intersection", {"a": "a", "b": "b"}, "core"),
    )
    stats = evaluate_csg(p, samples=400000, seed=0)
    assert abs(stats.volume - 0.5) <= max(4 * stats.stderr, 1e-9)


def test_union_consumes_operands():
    p = _program(
        ("box", {"width": 1, "depth": 1, "height": 1}, "a"),
        ("box", {"width": 1, "depth": 1, "height": 1}, "b"),
        ("union", {"a": "a", "b": "b"}, "ab"),
    )
    scene = build_scene(p.commands)
    assert scene.visible == ["ab"]
    stats = evaluate_csg(p, samples=200000, seed=0)
    assert abs(stats.volume - 1.0) <= max(4 * stats.stderr, 1e-9)  # coincident cubes fuse


def test_rotated_cylinder_aabb_exact():
    p = _program(
        ("cylinder", {"radius": 0.5, "height": 2.0}, "c"),
        ("rotate", {"axis": "x", "angle": 90.0}, "c"),
    )
    scene = build_scene(p.commands)
    lo, hi = scene.node("c").aabb()
    # axis now along y: extents (r, h/2, r)
    assert hi == pytest.approx([0.5, 1.0, 0.5], abs=1e-9)
    assert lo == pytest.approx([-0.5, -1.0, -0.5], abs=1e-9)


def test_torus_aabb_exact():
    p = _program(("torus", {"radius_ring": 1.0, "radius_tube": 0.25}, "t"))
    scene = build_scene(p.commands)
    lo, hi = scene.node("t").aabb()
    assert hi == pytest.approx([1.25, 1.25, 0.25], abs=1e-12)
    assert lo == pytest.approx([-1.25, -1.25, -0.25], abs=1e-12)


def test_cone_frustum_membership_and_volume():
    p = _program(("cone", {"radius_bottom": 1.0, "radius_top": 0.0, "height": 3.0}, "c"))
    stats = evaluate_csg(p, samples=400000, seed=0)
    exact = math.pi * 1.0**2 * 3.0 / 3.0
    assert abs(stats.volume - exact) < 4 * stats.stderr


def test_anisotropic_scale_volume():
    p = _program(
        ("sphere", {"radius": 1.0}, "s"),
        ("scale", {"sx": 1.0, "sy": 1.0, "sz": 0.5}, "s"),
    )
    stats = evaluate_csg(p, samples=400000, seed=0)
    exact = 4 * math.pi / 3 * 0.5
    assert abs(stats.volume - exact) < 4 * stats.stderr


def test_unknown_command_rejected():
    with pytest.raises(UnknownCommand):
        build_scene(_program(("teleport", {}, "x")).commands)


def test_scene_export_lists_primitives():
    p = _program(
        ("sphere", {"radius": 1.0}, "a"),
        ("box", {"width": 1, "depth": 1, "height": 1}, "b"),
        ("translate", {"x": 2.0, "relative_to": "a"}, "b"),
    )
    doc = scene_export(p.commands)
    assert {part["id"] for part in doc["parts"]} == {"a", "b"}
    b = next(part for part in doc["parts"] if part["id"] == "b")
    assert b["pose"]["center"] == [2.0, 0.0, 0.0]
