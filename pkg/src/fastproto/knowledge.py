"""Pluggable commonsense-knowledge oracle.

Two implementations share one contract: a live chat-completion HTTP client
(JSON-constrained outputs, bounded re-ask retries, token-bucket rate
limiting) and a table-driven stub that is a pure function of
(query, seed) so every downstream algorithm can be replayed bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Protocol

import numpy as np

from .catalog import CatalogChunk
from .constructs import (
    Construct,
    PartConstruct,
    construct_from_dict,
)
from .errors import InvalidCount, MalformedProviderOutput, ProviderUnavailable

SCORE_FLOOR = 1e-6
MAX_PROVIDER_RETRIES = 3


class QueryKind(str, Enum):
    SEED_SAMPLE = "SEED_SAMPLE"
    PERTURB = "PERTURB"
    SCORE = "SCORE"
    JUDGE = "JUDGE"


class Verdict(str, Enum):
    POINT_TO_POINT = "POINT_TO_POINT"
    DECOMPOSE = "DECOMPOSE"
    PRUNE = "PRUNE"


@dataclass(frozen=True)
class KnowledgeQuery:
    kind: QueryKind
    domain: str
    context: str = ""
    breadth_hint: int = 0
    depth_hint: int = 0

    def __post_init__(self):
        if self.breadth_hint < 0 or self.depth_hint < 0:
            raise ValueError("exploration hints must be >= 0")

    def cache_key(self) -> str:
        return json.dumps(
            {
                "kind": self.kind.value,
                "domain": self.domain,
                "context": self.context,
                "breadth": self.breadth_hint,
                "depth": self.depth_hint,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class Provenance:
    chain_id: str
    step_id: int

    def to_dict(self) -> dict:
        return {"chain_id": self.chain_id, "step_id": self.step_id}


@dataclass(frozen=True)
class ConstructSample:
    construct: Construct
    score: float
    provenance: Provenance

    def __post_init__(self):
        if not (0.0 < self.score <= 1.0):
            raise ValueError(f"sample score {self.score} outside (0, 1]")

    def key(self) -> str:
        return self.construct.key()

    def to_dict(self) -> dict:
        return {
            "construct": self.construct.to_dict(),
            "score": self.score,
            "provenance": self.provenance.to_dict(),
        }


@dataclass(frozen=True)
class FeasibilityOpinion:
    verdict: Verdict
    rationale: str
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "rationale": self.rationale,
            "confidence": self.confidence,
        }


def clamp_score(raw: float) -> float:
    return min(1.0, max(SCORE_FLOOR, raw))


def rating_to_score(rating: float) -> float:
    """Map a 0-10 judge rating onto (0, 1]."""
    return clamp_score((rating + 0.1) / 10.1)


class KnowledgeSource(Protocol):
    def sample_seeds(self, domain: str, m: int,
                     context: str = "") -> list[ConstructSample]: ...

    def propose(self, current: ConstructSample,
                q_context: str = "") -> ConstructSample: ...

    def score(self, construct: Construct, context: str = "") -> float: ...

    def judge(self, construct: Construct,
              retrieved_docs: list[CatalogChunk]) -> FeasibilityOpinion: ...


# Properties no geometric modeling language can realize; pruned on sight.
_UNREALIZABLE_PROPERTIES = frozenset(
    {"material", "texture", "color", "colour", "finish", "gloss"}
)


def _stable64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")


class StubKnowledgeSource:
    """Deterministic table-driven oracle.

    Fixtures are JSON documents keyed by domain with four tables: ordered
    seed constructs, a weighted proposal graph, a score table, and
    judgment overrides.  Each call derives its RNG from
    (master seed, query key, per-key call count), so identical call
    sequences replay byte-identically while repeated calls still explore.
    """

    def __init__(self, fixtures: Mapping[str, Any] | str | Path, seed: int = 0):
        if isinstance(fixtures, (str, Path)):
            fixtures = json.loads(Path(fixtures).read_text(encoding="utf-8"))
        assert isinstance(fixtures, Mapping)
        if "domains" in fixtures:
            self.tables: dict[str, Any] = dict(fixtures["domains"])
        else:
            self.tables = {fixtures["domain"]: fixtures} if "domain" in fixtures else dict(fixtures)
        self.seed = seed
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()

    # -- internals -------------------------------------------------------------

    def _rng(self, query_key: str) -> np.random.Generator:
        with self._lock:
            n = self._counts.get(query_key, 0)
            self._counts[query_key] = n + 1
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, _stable64(query_key), n])
        )

    def _table(self, domain: str) -> Mapping[str, Any]:
        t = self.tables.get(domain)
        if t is None:
            raise ProviderUnavailable(f"stub has no fixture for domain {domain!r}")
        return t

    def _seed_constructs(self, domain: str) -> list[Construct]:
        return [construct_from_dict(d) for d in self._table(domain)["seeds"]]

    def _domain_of(self, construct: Construct) -> str:
        # proposal graphs are domain-scoped; find the table containing the key
        key = construct.key()
        for domain, t in self.tables.items():
            if key in t.get("proposals", {}) or key in t.get("scores", {}):
                return domain
        return next(iter(self.tables))

    # -- contract ---------------------------------------------------------------

    def sample_seeds(self, domain: str, m: int, context: str = "") -> list[ConstructSample]:
        if m < 1:
            raise InvalidCount(f"seed count must be >= 1, got {m}")
        seeds = self._seed_constructs(domain)
        rng = self._rng(f"SEED:{domain}:{m}:{context}")
        offset = int(rng.integers(0, len(seeds)))
        # evenly strided draw so m chains start spread over the construct table
        stride = max(1, len(seeds) // m) if m < len(seeds) else 1
        out = []
        for i in range(m):
            c = seeds[(offset + i * stride) % len(seeds)]
            out.append(
                ConstructSample(
                    construct=c,
                    score=self.score(c),
                    provenance=Provenance(chain_id=f"seed-{i}", step_id=0),
                )
            )
        return out

    def propose(self, current: ConstructSample, q_context: str = "") -> ConstructSample:
        construct = current.construct
        domain = self._domain_of(construct)
        table = self._table(domain)
        key = construct.key()
        neighbors = table.get("proposals", {}).get(key)
        rng = self._rng(f"PERTURB:{domain}:{key}:{q_context}")
        if neighbors:
            weights = np.array([n.get("weight", 1.0) for n in neighbors], dtype=float)
            weights = weights / weights.sum()
            idx = int(rng.choice(len(neighbors), p=weights))
            proposed = construct_from_dict(neighbors[idx]["construct"])
        else:
            proposed = self._fallback_perturb(construct, table, rng)
        return ConstructSample(
            construct=proposed,
            score=self.score(proposed),
            provenance=Provenance(
                chain_id=current.provenance.chain_id,
                step_id=current.provenance.step_id + 1,
            ),
        )

    def _fallback_perturb(
        self, construct: Construct, table: Mapping[str, Any], rng: np.random.Generator
    ) -> Construct:
        # perturb within the seed vocabulary, favouring the neighborhood of
        # the current construct (same part first, then anything same-kind)
        seeds = [construct_from_dict(d) for d in table["seeds"]]
        same_kind = [
            s for s in seeds
            if isinstance(s, type(construct)) and s.key() != construct.key()
        ]
        if not same_kind:
            raise MalformedProviderOutput(
                f"stub fixture offers no perturbation for {construct.key()}"
            )
        ident = construct.part if isinstance(construct, PartConstruct) else None
        weights = np.array(
            [3.0 if ident is not None and getattr(s, "part", None) == ident else 1.0
             for s in same_kind]
        )
        weights = weights / weights.sum()
        return same_kind[int(rng.choice(len(same_kind), p=weights))]

    def score(self, construct: Construct, context: str = "") -> float:
        if isinstance(construct, ConstructSample):  # tolerate sample wrappers
            construct = construct.construct
        domain = self._domain_of(construct)
        table = self._table(domain)
        raw = table.get("scores", {}).get(construct.key())
        if raw is None:
            raw = table.get("default_score", 0.5)
        return clamp_score(float(raw))

    def judge(
        self, construct: Construct, retrieved_docs: list[CatalogChunk]
    ) -> FeasibilityOpinion:
        if not retrieved_docs:
            raise ValueError("judge requires at least one retrieved doc")
        if isinstance(construct, ConstructSample):
            construct = construct.construct
        domain = self._domain_of(construct)
        override = self._table(domain).get("judgments", {}).get(construct.key())
        if override:
            return FeasibilityOpinion(
                verdict=Verdict(override["verdict"]),
                rationale=override.get("rationale", "fixture judgment"),
                confidence=float(override.get("confidence", 0.9)),
            )
        return heuristic_judgment(construct, retrieved_docs)

    # hint bookkeeping for tests
    def reset(self):
        with self._lock:
            self._counts.clear()


def heuristic_judgment(
    construct: Construct, retrieved_docs: list[CatalogChunk]
) -> FeasibilityOpinion:
    """Default feasibility rule used when no explicit judgment exists:
    unrealizable physical properties are pruned, direct doc matches are
    kept, everything else is sent back for finer-grained regeneration."""
    from .catalog import tokenize

    if isinstance(construct, PartConstruct):
        if construct.property.lower() in _UNREALIZABLE_PROPERTIES:
            return FeasibilityOpinion(
                verdict=Verdict.PRUNE,
                rationale=f"property {construct.property!r} has no geometric realization",
                confidence=0.95,
            )
        probe_tokens = set(tokenize(construct.property)) | set(tokenize(construct.operation))
    else:
        probe_tokens = {t for tok in construct.descriptor for t in tokenize(tok)}
        probe_tokens |= set(tokenize(construct.operation))
    top = retrieved_docs[0]
    doc_tokens = set(tokenize(top.text)) | set(tokenize(top.entry_id))
    if probe_tokens & doc_tokens:
        return FeasibilityOpinion(
            verdict=Verdict.POINT_TO_POINT,
            rationale=f"directly matches command {top.entry_id!r}",
            confidence=0.8,
        )
    return FeasibilityOpinion(
        verdict=Verdict.DECOMPOSE,
        rationale="no single command realizes the construct; regenerate finer",
        confidence=0.6,
    )


# ---------------------------------------------------------------------------
# Live provider
# ---------------------------------------------------------------------------

class TokenBucket:
    """Simple thread-safe token bucket: `rate` tokens/second, burst `capacity`."""

    def __init__(self, rate: float, capacity: float, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = capacity
        self._tokens = capacity
        self._last = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self, tokens: float = 1.0):
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= tokens:
                    self._tokens -= tokens
                    return
                wait = (tokens - self._tokens) / self.rate
            self._sleep(wait)


_SEED_PROMPT = (
    "You are assisting with product design knowledge elicitation. "
    "Propose one plausible design construct for the domain as JSON with keys "
    "kind ('part' or 'relation'), part, subpart (name_index form), property, "
    "operation, and value or delta. Respond with JSON only."
)
_PERTURB_PROMPT = (
    "Perturb the given design construct into a nearby domain-consistent variant, "
    "changing at least one field. Respond with the construct JSON only."
)
_SCORE_PROMPT = (
    "Rate how plausible the given design construct is for its domain on a 0-10 "
    "scale. Respond with JSON {\"rating\": number}."
)
_JUDGE_PROMPT = (
    "Given command documentation excerpts, classify the design construct as "
    "POINT_TO_POINT (a documented command realizes it directly), DECOMPOSE "
    "(needs finer-grained regeneration), or PRUNE (cannot be realized). "
    "Respond with JSON {\"verdict\":..., \"rationale\":..., \"confidence\": 0-1}."
)


class LiveKnowledgeSource:
    """Chat-completion HTTP client with JSON-constrained outputs.

    Malformed responses trigger up to three re-ask retries before
    MalformedProviderOutput; transport and server failures raise
    ProviderUnavailable.  Requests pass through a token bucket and a
    concurrency cap so bursts cannot exceed provider limits.
    """

    def __init__(
        self,
        api_url: str,
        api_key: str = "",
        model: str = "default",
        client=None,
        max_concurrency: int = 4,
        rate_per_s: float = 5.0,
        burst: float = 10.0,
        transcript_path: str | Path | None = None,
    ):
        import httpx

        self.api_url = api_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.client = client or httpx.Client(timeout=30.0)
        self._semaphore = threading.Semaphore(max_concurrency)
        self._bucket = TokenBucket(rate=rate_per_s, capacity=burst)
        self._transcript = Transcript(transcript_path) if transcript_path else None

    def _chat(self, system: str, user: str) -> Mapping[str, Any]:
        import httpx

        last_error = "provider returned no parseable JSON"
        for attempt in range(MAX_PROVIDER_RETRIES):
            self._bucket.acquire()
            prompt = user if attempt == 0 else (
                f"{user}\n\nYour previous reply was invalid ({last_error}). "
                "Reply with the requested JSON object only."
            )
            payload = {
                "model": self.model,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": prompt},
                ],
                "response_format": {"type": "json_object"},
            }
            headers = {"Content-Type": "application/json"}
            if self.api_key:
                headers["Authorization"] = f"Bearer {self.api_key}"
            with self._semaphore:
                try:
                    resp = self.client.post(
                        f"{self.api_url}/chat/completions", json=payload, headers=headers
                    )
                except httpx.HTTPError as e:
                    raise ProviderUnavailable(f"transport failure: {e}") from e
            if resp.status_code >= 500:
                raise ProviderUnavailable(f"provider error {resp.status_code}")
            if resp.status_code >= 400:
                raise ProviderUnavailable(
                    f"provider rejected request ({resp.status_code}): {resp.text[:200]}"
                )
            try:
                body = resp.json()
                content = body["choices"][0]["message"]["content"]
                parsed = json.loads(content)
            except (KeyError, IndexError, ValueError) as e:
                last_error = str(e)
                continue
            if self._transcript:
                self._transcript.record(system, user, parsed)
            return parsed
        raise MalformedProviderOutput(
            f"provider output stayed malformed after {MAX_PROVIDER_RETRIES} attempts: {last_error}"
        )

    def _parse_construct(self, data: Mapping[str, Any]) -> Construct:
        try:
            return construct_from_dict(dict(data))
        except Exception as e:
            raise MalformedProviderOutput(f"invalid construct payload: {e}") from e

    def sample_seeds(self, domain: str, m: int, context: str = "") -> list[ConstructSample]:
        if m < 1:
            raise InvalidCount(f"seed count must be >= 1, got {m}")
        out = []
        for i in range(m):
            data = self._chat(
                _SEED_PROMPT,
                json.dumps({"domain": domain, "context": context, "index": i}),
            )
            construct = self._parse_construct(data)
            out.append(
                ConstructSample(
                    construct=construct,
                    score=self.score(construct, context),
                    provenance=Provenance(chain_id=f"seed-{i}", step_id=0),
                )
            )
        return out

    def propose(self, current: ConstructSample, q_context: str = "") -> ConstructSample:
        data = self._chat(
            _PERTURB_PROMPT,
            json.dumps({"construct": current.construct.to_dict(), "context": q_context}),
        )
        construct = self._parse_construct(data)
        if construct.key() == current.construct.key():
            # a perturbation must move at least one field; re-ask once
            data = self._chat(
                _PERTURB_PROMPT,
                json.dumps(
                    {
                        "construct": current.construct.to_dict(),
                        "context": q_context,
                        "note": "must differ from the input construct",
                    }
                ),
            )
            construct = self._parse_construct(data)
        return ConstructSample(
            construct=construct,
            score=self.score(construct, q_context),
            provenance=Provenance(
                chain_id=current.provenance.chain_id,
                step_id=current.provenance.step_id + 1,
            ),
        )

    def score(self, construct: Construct, context: str = "") -> float:
        if isinstance(construct, ConstructSample):
            construct = construct.construct
        data = self._chat(
            _SCORE_PROMPT,
            json.dumps({"construct": construct.to_dict(), "context": context}),
        )
        if "token_logprobs" in data:
            logprobs = [float(x) for x in data["token_logprobs"]]
            if not logprobs:
                raise MalformedProviderOutput("empty token_logprobs array")
            return clamp_score(float(np.exp(np.mean(logprobs))))
        try:
            rating = float(data["rating"])
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedProviderOutput(f"score payload missing rating: {e}") from e
        return rating_to_score(rating)

    def judge(
        self, construct: Construct, retrieved_docs: list[CatalogChunk]
    ) -> FeasibilityOpinion:
        if not retrieved_docs:
            raise ValueError("judge requires at least one retrieved doc")
        if isinstance(construct, ConstructSample):
            construct = construct.construct
        data = self._chat(
            _JUDGE_PROMPT,
            json.dumps(
                {
                    "construct": construct.to_dict(),
                    "docs": [{"id": d.entry_id, "text": d.text} for d in retrieved_docs],
                }
            ),
        )
        try:
            return FeasibilityOpinion(
                verdict=Verdict(data["verdict"]),
                rationale=str(data.get("rationale", "")),
                confidence=float(data.get("confidence", 0.5)),
            )
        except (KeyError, ValueError) as e:
            raise MalformedProviderOutput(f"invalid judge payload: {e}") from e


# ---------------------------------------------------------------------------
# Transcripts
# ---------------------------------------------------------------------------

class Transcript:
    """Append-only JSON-lines record of provider exchanges."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def record(self, system: str, user: str, response: Any):
        line = json.dumps(
            {"system": system, "user": user, "response": response}, sort_keys=True
        )
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


class RecordingKnowledgeSource:
    """Wraps any source and logs every exchange for later replay."""

    def __init__(self, inner: KnowledgeSource, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def _log(self, kind: str, payload: dict, result: Any):
        line = json.dumps({"kind": kind, "query": payload, "result": result},
                          sort_keys=True)
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def sample_seeds(self, domain: str, m: int, context: str = "") -> list[ConstructSample]:
        out = self.inner.sample_seeds(domain, m, context)
        self._log("SEED_SAMPLE", {"domain": domain, "m": m, "context": context},
                  [s.to_dict() for s in out])
        return out

    def propose(self, current: ConstructSample, q_context: str = "") -> ConstructSample:
        out = self.inner.propose(current, q_context)
        self._log("PERTURB", {"current": current.to_dict(), "context": q_context},
                  out.to_dict())
        return out

    def score(self, construct: Construct, context: str = "") -> float:
        out = self.inner.score(construct, context)
        c = construct.construct if isinstance(construct, ConstructSample) else construct
        self._log("SCORE", {"construct": c.to_dict(), "context": context}, out)
        return out

    def judge(self, construct: Construct, retrieved_docs: list[CatalogChunk]) -> FeasibilityOpinion:
        out = self.inner.judge(construct, retrieved_docs)
        c = construct.construct if isinstance(construct, ConstructSample) else construct
        self._log("JUDGE", {"construct": c.to_dict(),
                            "docs": [d.chunk_id for d in retrieved_docs]},
                  out.to_dict())
        return out


def _sample_from_dict(d: Mapping[str, Any]) -> ConstructSample:
    return ConstructSample(
        construct=construct_from_dict(d["construct"]),
        score=float(d["score"]),
        provenance=Provenance(
            chain_id=d["provenance"]["chain_id"],
            step_id=int(d["provenance"]["step_id"]),
        ),
    )


class ReplayKnowledgeSource:
    """Serves a recorded transcript back in order, keyed by query kind.

    Replays raise ProviderUnavailable when the transcript runs dry or the
    query diverges from what was recorded.
    """

    def __init__(self, path: str | Path):
        self._entries: dict[str, list[dict]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            self._entries.setdefault(entry["kind"], []).append(entry)
        self._cursors: dict[str, int] = {}
        self._lock = threading.Lock()

    def _next(self, kind: str) -> dict:
        with self._lock:
            i = self._cursors.get(kind, 0)
            entries = self._entries.get(kind, [])
            if i >= len(entries):
                raise ProviderUnavailable(f"transcript exhausted for {kind}")
            self._cursors[kind] = i + 1
            return entries[i]

    def sample_seeds(self, domain: str, m: int, context: str = "") -> list[ConstructSample]:
        entry = self._next("SEED_SAMPLE")
        return [_sample_from_dict(d) for d in entry["result"]]

    def propose(self, current: ConstructSample, q_context: str = "") -> ConstructSample:
        entry = self._next("PERTURB")
        return _sample_from_dict(entry["result"])

    def score(self, construct: Construct, context: str = "") -> float:
        entry = self._next("SCORE")
        return float(entry["result"])

    def judge(self, construct: Construct, retrieved_docs: list[CatalogChunk]) -> FeasibilityOpinion:
        entry = self._next("JUDGE")
        r = entry["result"]
        return FeasibilityOpinion(
            verdict=Verdict(r["verdict"]),
            rationale=r["rationale"],
            confidence=float(r["confidence"]),
        )


# ---------------------------------------------------------------------------
# Environment wiring
# ---------------------------------------------------------------------------

def default_stub_path() -> Path:
    return Path(__file__).parent / "data" / "stub_fixtures.json"


def from_env(seed: int = 0, mode: Optional[str] = None) -> KnowledgeSource:
    """Build a knowledge source from KNOWLEDGE_* environment variables.

    KNOWLEDGE_MODE=live|stub|replay selects the implementation (stub by
    default); KNOWLEDGE_STUB_PATH overrides the packaged fixtures;
    KNOWLEDGE_TRANSCRIPT enables recording.
    """
    mode = mode or os.environ.get("KNOWLEDGE_MODE", "stub")
    transcript = os.environ.get("KNOWLEDGE_TRANSCRIPT")
    source: KnowledgeSource
    if mode == "live":
        url = os.environ.get("KNOWLEDGE_API_URL")
        if not url:
            raise ProviderUnavailable("KNOWLEDGE_API_URL is not set")
        source = LiveKnowledgeSource(
            api_url=url,
            api_key=os.environ.get("KNOWLEDGE_API_KEY", ""),
            model=os.environ.get("KNOWLEDGE_MODEL", "default"),
        )
    elif mode == "replay":
        path = os.environ.get("KNOWLEDGE_TRANSCRIPT")
        if not path:
            raise ProviderUnavailable("KNOWLEDGE_TRANSCRIPT is not set for replay mode")
        return ReplayKnowledgeSource(path)
    elif mode == "stub":
        path = os.environ.get("KNOWLEDGE_STUB_PATH", str(default_stub_path()))
        source = StubKnowledgeSource(path, seed=seed)
    else:
        raise ValueError(f"unknown knowledge mode {mode!r}")
    if transcript and mode != "replay":
        source = RecordingKnowledgeSource(source, transcript)
    return source
