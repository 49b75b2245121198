from __future__ import annotations

from pathlib import Path

import pytest

from fastproto.adapt import AdaptConfig, adapt_domain
from fastproto.catalog import load_catalog
from fastproto.constructs import DomainInterface, parse_program
from fastproto.knowledge import StubKnowledgeSource, default_stub_path

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parents[1] / "src" / "fastproto" / "data"

TEAPOT_TRANSCRIPT = [
    "Make the main body a rounded sphere.",
    "Flatten the sphere slightly.",
    "Create a short cylindrical neck at the top.",
    "Attach a dome-shaped lid to the neck.",
    "Extend a spout from the side of the body.",
    "Make the spout curved.",
    "Make the spout narrower toward the tip.",
    "Attach a torus handle to the opposite side of the spout.",
    "Align the spout, body, and handle along the same horizontal axis.",
    "Keep the handle and the spout symmetrical.",
]


def tri_state_fixture() -> dict:
    """3-state chain with target density (0.6, 0.3, 0.1) and symmetric
    proposals, used for stationary-distribution checks."""
    def mk(part):
        return {"kind": "part", "part": part, "subpart": "node_0",
                "property": "size", "operation": "assign", "value": 1.0}

    names = ("alpha", "beta", "gamma")
    keys = {p: f"p:{p}/node_0/size/assign" for p in names}
    proposals = {}
    for p in names:
        others = [o for o in names if o != p]
        proposals[keys[p]] = [{"construct": mk(o), "weight": 0.5} for o in others]
    return {
        "domains": {
            "tri": {
                "seeds": [mk(p) for p in names],
                "proposals": proposals,
                "scores": {keys["alpha"]: 0.6, keys["beta"]: 0.3, keys["gamma"]: 0.1},
            }
        }
    }


@pytest.fixture(scope="session")
def mini_catalog():
    return load_catalog(DATA / "mini_catalog.json")


@pytest.fixture(scope="session")
def csg_catalog():
    return load_catalog(DATA / "csg_catalog.json")


@pytest.fixture()
def stub_ks():
    return StubKnowledgeSource(default_stub_path(), seed=0)


@pytest.fixture(scope="session")
def teapot_interface(mini_catalog):
    ks = StubKnowledgeSource(default_stub_path(), seed=0)
    iface, report = adapt_domain("teapot", AdaptConfig(seed=0), ks, mini_catalog)
    assert report.converged
    return iface


@pytest.fixture(scope="session")
def teapot_program():
    return parse_program((FIXTURES / "teapot.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def toaster_program():
    return parse_program((FIXTURES / "toaster.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def wheelbarrow_program():
    return parse_program((FIXTURES / "wheelbarrow.json").read_text(encoding="utf-8"))


def appendix_text(name: str) -> str:
    return (FIXTURES / f"{name}.json").read_text(encoding="utf-8")


def toy_interface() -> DomainInterface:
    """Two-part domain with hand-written point-mass-free tables, used as
    the joint-probability oracle target."""
    iface = DomainInterface(domain="toy")
    iface.bind("stem", "cylinder_0", "radius", ["assign", "increase", "decrease"])
    iface.bind("cap", "sphere_0", "radius", ["assign", "decrease"])
    iface.relation_vocab = ["top center"]
    iface.relation_ops = {"placement": ["attach"]}
    iface.cond_tables = {
        "ident_given_intent": {
            "PART": {"stem": 0.7, "cap": 0.3},
            "MIXED": {"stem": 0.5, "cap": 0.3, "stem <-> cap": 0.2},
            "GLOBAL": {"stem <-> cap": 1.0},
        },
        "attr_given_ident": {
            "stem": {"cylinder_0.radius": 1.0},
            "cap": {"sphere_0.radius": 1.0},
            "stem <-> cap": {"placement": 1.0},
        },
        "part_op_given_attr": {
            "cylinder_0.radius": {"assign": 0.5, "increase": 0.2, "decrease": 0.3},
            "sphere_0.radius": {"assign": 0.6, "decrease": 0.4},
        },
        "part_value_given_attr": {
            "cylinder_0.radius": {"1": 0.25, "2": 0.75},
            "sphere_0.radius": {"1": 1.0},
        },
        "part_delta_given_op": {
            "increase": {"0.2": 1.0},
            "decrease": {"0.2": 0.8, "0.5": 0.2},
        },
        "relation_op_given_attr": {"placement": {"attach": 1.0}},
        "relation_value_given_attr": {"placement": {"top center": 1.0}},
        "relation_delta_given_op": {"attach": {"0,0": 1.0}},
    }
    iface.check_tables()
    return iface
