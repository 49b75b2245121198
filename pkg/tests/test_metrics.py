import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastproto.catalog import ast_depth
from fastproto.errors import InvalidRank
from fastproto.metrics import (
    StepRanking,
    information_clarity,
    metrics_report,
    rendering_consistency,
    report_csv,
    step_score,
)
from fastproto.translate import ModelingCommand, ModelingProgram


def _rankings(ranks_per_step, k=3):
    return [StepRanking(step=i + 1, ranks={**r}, k=k)
            for i, r in enumerate(ranks_per_step)]


def _program(*cmds):
    p = ModelingProgram()
    for cid, args in cmds:
        p.append(ModelingCommand(cid, args, "t"), origin="t")
    return p


# --- rendering consistency -----------------------------------------------

def test_consistency_always_first():
    rankings = _rankings([{"ours": 1, "a": 2, "b": 3}] * 4)
    assert rendering_consistency(rankings, "ours", 3).value == 1.0


def test_consistency_always_last():
    rankings = _rankings([{"a": 1, "b": 2, "ours": 3}] * 4)
    assert rendering_consistency(rankings, "ours", 3).value == 0.0


def test_consistency_hand_computed():
    rankings = _rankings([
        {"ours": 1, "a": 2, "b": 3},
        {"a": 1, "ours": 2, "b": 3},
        {"a": 1, "b": 2, "ours": 3},
        {"ours": 1, "a": 2, "b": 3},
    ])
    score = rendering_consistency(rankings, "ours", 3)
    assert score.value == pytest.approx(0.625)
    assert score.n_steps == 4


def test_consistency_partial_ranking_scores_zero_when_unranked():
    partial = StepRanking(step=1, ranks={"a": 1}, k=3)
    assert partial.partial
    assert step_score(partial, "ours") == 0.0
    assert step_score(partial, "a") == 1.0


def test_consistency_scale_free_under_duplication():
    rankings = _rankings([
        {"ours": 1, "a": 2, "b": 3},
        {"a": 1, "ours": 2, "b": 3},
    ])
    once = rendering_consistency(rankings, "ours", 3).value
    twice = rendering_consistency(rankings + rankings, "ours", 3).value
    assert once == pytest.approx(twice)


def test_consistency_requires_rankings():
    with pytest.raises(InvalidRank):
        rendering_consistency([], "ours", 3)


def test_invalid_rank_not_prefix():
    with pytest.raises(InvalidRank):
        StepRanking(step=1, ranks={"a": 2}, k=3)  # no rank 1
    with pytest.raises(InvalidRank):
        StepRanking(step=1, ranks={"a": 1, "b": 1}, k=3)  # duplicate
    with pytest.raises(InvalidRank):
        StepRanking(step=1, ranks={"a": 1, "b": 4}, k=3)  # gap / exceeds k


def test_invalid_k():
    with pytest.raises(InvalidRank):
        StepRanking(step=1, ranks={"a": 1}, k=1)


def test_consistency_dominance():
    # A ranks <= B everywhere with at least one strict improvement
    rankings = _rankings([
        {"A": 1, "B": 2, "c": 3},
        {"A": 2, "B": 3, "c": 1},
        {"A": 1, "B": 3, "c": 2},
    ])
    a = rendering_consistency(rankings, "A", 3).value
    b = rendering_consistency(rankings, "B", 3).value
    assert a > b


@settings(max_examples=60, deadline=None)
@given(st.lists(st.permutations(["A", "B", "C"]), min_size=1, max_size=8))
def test_consistency_dominance_property(perms):
    rankings = []
    for i, order in enumerate(perms):
        ranks = {m: order.index(m) + 1 for m in ("A", "B", "C")}
        rankings.append(StepRanking(step=i + 1, ranks=ranks, k=3))
    scores = {m: rendering_consistency(rankings, m, 3).value for m in ("A", "B", "C")}
    for x in ("A", "B", "C"):
        for y in ("A", "B", "C"):
            if x == y:
                continue
            if all(r.ranks[x] <= r.ranks[y] for r in rankings) and any(
                r.ranks[x] < r.ranks[y] for r in rankings
            ):
                assert scores[x] > scores[y]


# --- information clarity ---------------------------------------------------

def test_clarity_empty_program(mini_catalog):
    score = information_clarity(_program(), mini_catalog)
    assert score.raw == 0 and score.normalized == 0.0


def test_clarity_hand_computed(mini_catalog):
    # depths {2, 3} with 5 specified params total -> raw 10
    p = _program(("cylinder", {"radius": 1, "height": 2, "a": 0, "b": 0}),
                 ("fillet", {"radius": 0.1}))
    score = information_clarity(p, mini_catalog)
    assert score.raw == 10
    assert score.normalized == pytest.approx(10 / (10 + 2 * 2.0))
    assert score.raw == ast_depth(p, mini_catalog)


def test_clarity_monotone_under_extension(mini_catalog):
    p = _program(("sphere", {"radius": 1}))
    p2 = _program(("sphere", {"radius": 1}), ("scale", {"sx": 1, "sy": 1, "sz": 0.5}))
    assert information_clarity(p2, mini_catalog).raw > information_clarity(p, mini_catalog).raw


def test_clarity_randomized_extensions_monotone(mini_catalog):
    import numpy as np

    rng = np.random.default_rng(0)
    pool = [("sphere", {"radius": 1.0}), ("box", {"width": 1.0, "height": 2.0}),
            ("rotate", {"axis": "z", "angle": 15.0}), ("fillet", {"radius": 0.2}),
            ("translate", {"x": 1.0, "y": 0.0, "z": 0.0})]
    for _ in range(1000):
        n = int(rng.integers(0, 5))
        cmds = [pool[int(rng.integers(len(pool)))] for _ in range(n)]
        extra = pool[int(rng.integers(len(pool)))]
        a = information_clarity(_program(*cmds), mini_catalog).raw
        b = information_clarity(_program(*cmds, extra), mini_catalog).raw
        assert b > a


def test_report_shapes(mini_catalog):
    p = _program(("sphere", {"radius": 1}))
    clarity = information_clarity(p, mini_catalog)
    rankings = _rankings([{"ours": 1, "alt": 2}], k=2)
    consistency = rendering_consistency(rankings, "ours", 2)
    report = metrics_report("teapot", "s1", consistency, clarity)
    assert report["consistency"]["value"] == 1.0
    assert report["clarity"]["raw"] == clarity.raw
    csv_text = report_csv([report])
    assert csv_text.splitlines()[0].startswith("domain,session_id")
    assert "teapot,s1" in csv_text
