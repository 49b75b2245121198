import sys

import pytest

from fastproto.errors import SessionComplete, UnknownDomain, UnknownStep
from fastproto.knowledge import StubKnowledgeSource, default_stub_path
from fastproto.metrics import StepRanking, rendering_consistency
from fastproto.session import BaselineSlot, SessionService

from .conftest import TEAPOT_TRANSCRIPT


@pytest.fixture()
def service(tmp_path, teapot_interface, mini_catalog):
    return SessionService(
        tmp_path / "sessions",
        {"teapot": teapot_interface},
        mini_catalog,
        ks=StubKnowledgeSource(default_stub_path(), seed=0),
        eval_samples=5000,
    )


def test_create_session(service):
    sid = service.create_session("teapot")
    assert service.session(sid).status == "ACTIVE"
    assert service.session(sid).domain == "teapot"


def test_create_unknown_domain(service):
    with pytest.raises(UnknownDomain):
        service.create_session("hovercraft")


def test_session_ids_unique(service):
    assert service.create_session("teapot") != service.create_session("teapot")


def test_first_step_creates_body(service):
    sid = service.create_session("teapot")
    record = service.step(sid, "Make the main body a rounded sphere.")
    assert record.status == "ok"
    assert record.index == 1
    assert "body" in record.program["Parts"]
    assert record.scene["parts"]
    assert record.stats["volume"] > 0


def test_step_budget_enforced(service):
    sid = service.create_session("teapot")
    for text in TEAPOT_TRANSCRIPT:
        service.step(sid, text)
    assert service.session(sid).status == "COMPLETE"
    with pytest.raises(SessionComplete):
        service.step(sid, "Make the body wider.")


def test_failed_step_preserves_state(service):
    sid = service.create_session("teapot")
    ok1 = service.step(sid, "Make the main body a rounded sphere.")
    failed = service.step(sid, "Make the propeller bigger.")
    assert failed.status == "failed"
    assert failed.error["code"] == "unresolvable_reference"
    assert failed.program == ok1.program  # state unchanged
    ok2 = service.step(sid, "Flatten the sphere slightly.")
    assert ok2.status == "ok"
    assert ok2.index == 3
    # the successful step applied against the pre-failure state
    assert ok2.program["Parts"].keys() == ok1.program["Parts"].keys()


def test_history_replay(service):
    sid = service.create_session("teapot")
    for text in TEAPOT_TRANSCRIPT[:3]:
        service.step(sid, text)
    records = service.history(sid)
    assert [r.index for r in records] == [1, 2, 3]
    # replaying the persisted log reproduces the same state
    reloaded = SessionService(
        service.data_dir, service.interfaces, service.catalog,
        ks=service.ks, eval_samples=service.eval_samples,
    )
    again = reloaded.history(sid)
    assert [r.to_dict() for r in again] == [r.to_dict() for r in records]
    assert (reloaded.session(sid).current.parts == service.session(sid).current.parts)


def test_fresh_session_history_empty(service):
    sid = service.create_session("teapot")
    assert service.history(sid) == []


def test_rank_step_and_consistency(service):
    sid = service.create_session("teapot")
    service.step(sid, "Make the main body a rounded sphere.")
    ranking = StepRanking(step=1, ranks={"ours": 1, "alt": 2}, k=2)
    ack = service.rank_step(sid, 1, ranking)
    assert ack["ok"]
    stored = service.rankings(sid)
    assert len(stored) == 1
    assert rendering_consistency(stored, "ours", 2).value == 1.0


def test_rank_unknown_step(service):
    sid = service.create_session("teapot")
    with pytest.raises(UnknownStep):
        service.rank_step(sid, 7, StepRanking(step=7, ranks={"ours": 1}, k=2))


def test_partial_ranking_accepted(service):
    sid = service.create_session("teapot")
    service.step(sid, "Make the main body a rounded sphere.")
    ranking = StepRanking(step=1, ranks={"ours": 1}, k=3)
    assert ranking.partial
    assert service.rank_step(sid, 1, ranking)["ok"]


def test_crash_safety_torn_tail(service, tmp_path):
    sid = service.create_session("teapot")
    for text in TEAPOT_TRANSCRIPT[:4]:
        service.step(sid, text)
    log = service.data_dir / f"{sid}.jsonl"
    intact = log.read_text(encoding="utf-8")
    # simulate a crash mid-append: torn half-written event at the tail
    log.write_text(intact + '{"event": "step", "record": {"ind', encoding="utf-8")
    reloaded = SessionService(service.data_dir, service.interfaces, service.catalog,
                              ks=service.ks, eval_samples=service.eval_samples)
    assert [r.index for r in reloaded.history(sid)] == [1, 2, 3, 4]
    # the session continues cleanly after recovery
    record = reloaded.step(sid, TEAPOT_TRANSCRIPT[4])
    assert record.index == 5 and record.status == "ok"


def test_crash_replay_reproduces_state(service):
    sid = service.create_session("teapot")
    for text in TEAPOT_TRANSCRIPT[:5]:
        service.step(sid, text)
    # interrupted run: new service picks up the log and finishes the session
    resumed = SessionService(service.data_dir, service.interfaces, service.catalog,
                             ks=StubKnowledgeSource(default_stub_path(), seed=0),
                             eval_samples=service.eval_samples)
    for text in TEAPOT_TRANSCRIPT[5:]:
        resumed.step(sid, text)

    # uninterrupted reference run in a separate data dir
    ref = SessionService(service.data_dir.parent / "ref", service.interfaces,
                         service.catalog,
                         ks=StubKnowledgeSource(default_stub_path(), seed=0),
                         eval_samples=service.eval_samples)
    rid = ref.create_session("teapot")
    for text in TEAPOT_TRANSCRIPT:
        ref.step(rid, text)

    a = resumed.session(sid).current
    b = ref.session(rid).current
    from fastproto.constructs import serialize_program

    assert serialize_program(a) == serialize_program(b)


def test_baseline_fanout(tmp_path, teapot_interface, mini_catalog):
    echo = BaselineSlot(
        method_id="echo",
        argv=[sys.executable, "-c",
              "import sys, json; payload = json.load(sys.stdin); "
              "print(json.dumps({'modeling': '', 'echo': payload['instruction']}))"],
    )
    service = SessionService(
        tmp_path / "s", {"teapot": teapot_interface}, mini_catalog,
        ks=StubKnowledgeSource(default_stub_path(), seed=0),
        eval_samples=2000, baselines=[echo],
    )
    sid = service.create_session("teapot")
    record = service.step(sid, "Make the main body a rounded sphere.")
    assert set(record.candidates) == {"ours", "echo"}
    assert record.candidates["echo"]["echo"].startswith("Make the main body")


def test_full_transcript_deterministic(service, teapot_interface, mini_catalog, tmp_path):
    sid = service.create_session("teapot")
    for text in TEAPOT_TRANSCRIPT:
        record = service.step(sid, text)
        assert record.status == "ok", record.error
    final = service.session(sid).current
    assert {"body", "neck", "lid", "knob", "spout", "handle"} <= set(final.parts)
    assert "opposite_spout" in final.relationships.get("body <-> handle", [])

    other = SessionService(tmp_path / "other", {"teapot": teapot_interface},
                           mini_catalog,
                           ks=StubKnowledgeSource(default_stub_path(), seed=0),
                           eval_samples=5000)
    oid = other.create_session("teapot")
    for text in TEAPOT_TRANSCRIPT:
        other.step(oid, text)
    from fastproto.constructs import serialize_program

    assert serialize_program(other.session(oid).current) == serialize_program(final)


def test_concurrent_steps_serialized(service):
    import threading

    sid = service.create_session("teapot")
    service.step(sid, "Make the main body a rounded sphere.")
    results = []

    def worker(text):
        results.append(service.step(sid, text))

    threads = [
        threading.Thread(target=worker, args=("Flatten the sphere slightly.",)),
        threading.Thread(target=worker, args=("Create a short cylindrical neck at the top.",)),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    indices = sorted(r.index for r in results)
    assert indices == [2, 3]  # serialized, both observed distinct slots
    assert all(r.status == "ok" for r in results)
    records = service.history(sid)
    assert [r.index for r in records] == [1, 2, 3]
