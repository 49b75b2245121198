"""Neutral modeling-command library: ingestion, lexical retrieval, and
AST-depth accounting.

The catalog file is a pre-extracted JSON document (schema v1); retrieval
is plain BM25 over chunked doc text so feasibility validation stays fully
deterministic and offline.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Mapping, Optional

from .errors import EmptyCatalog, SchemaViolation, UnknownCommand

if TYPE_CHECKING:  # pragma: no cover
    from .translate import ModelingProgram

BM25_K1 = 1.2
BM25_B = 0.75
DEFAULT_CHUNK_SIZE = 512

_WORD_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class Parameter:
    name: str
    type: str = "real"
    unit: str = ""
    range: Optional[tuple[float, float]] = None

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Parameter":
        rng = d.get("range")
        return cls(
            name=d["name"],
            type=d.get("type", "real"),
            unit=d.get("unit", ""),
            range=tuple(rng) if rng else None,
        )

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "type": self.type}
        if self.unit:
            out["unit"] = self.unit
        if self.range:
            out["range"] = list(self.range)
        return out


@dataclass(frozen=True)
class CatalogEntry:
    command_id: str
    parameters: tuple[Parameter, ...]
    parent_chain: tuple[str, ...]
    doc_text: str

    @property
    def depth(self) -> int:
        return len(self.parent_chain)

    def parameter(self, name: str) -> Optional[Parameter]:
        for p in self.parameters:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class CatalogChunk:
    chunk_id: str
    text: str
    entry_id: str


class _Bm25Index:
    """Minimal BM25 ranking over the chunk corpus (k1=1.2, b=0.75,
    non-negative idf).  Documents with no query-term overlap never rank."""

    def __init__(self, chunks: list[CatalogChunk]):
        self.chunks = chunks
        self.term_freqs = [Counter(tokenize(c.text)) for c in chunks]
        self.doc_lens = [sum(tf.values()) for tf in self.term_freqs]
        self.n_docs = len(chunks)
        self.avgdl = (sum(self.doc_lens) / self.n_docs) if self.n_docs else 0.0
        df: Counter = Counter()
        for tf in self.term_freqs:
            for term in tf:
                df[term] += 1
        self.idf = {
            t: math.log(1.0 + (self.n_docs - n + 0.5) / (n + 0.5))
            for t, n in df.items()
        }

    def score(self, query: str) -> list[float]:
        terms = tokenize(query)
        scores = [0.0] * self.n_docs
        for i, tf in enumerate(self.term_freqs):
            dl = self.doc_lens[i]
            norm = BM25_K1 * (1 - BM25_B + BM25_B * dl / self.avgdl) if self.avgdl else BM25_K1
            s = 0.0
            for t in terms:
                f = tf.get(t)
                if not f:
                    continue
                s += self.idf.get(t, 0.0) * f * (BM25_K1 + 1) / (f + norm)
            scores[i] = s
        return scores


@dataclass
class Catalog:
    entries: dict[str, CatalogEntry]
    chunks: list[CatalogChunk]
    index: _Bm25Index = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.index is None:
            self.index = _Bm25Index(self.chunks)

    def entry(self, command_id: str) -> CatalogEntry:
        e = self.entries.get(command_id)
        if e is None:
            raise UnknownCommand(command_id)
        return e

    def __contains__(self, command_id: str) -> bool:
        return command_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def median_depth(self) -> float:
        depths = sorted(e.depth for e in self.entries.values())
        if not depths:
            return 0.0
        n = len(depths)
        mid = n // 2
        if n % 2:
            return float(depths[mid])
        return (depths[mid - 1] + depths[mid]) / 2.0

    def min_depth(self) -> int:
        return min(e.depth for e in self.entries.values())


def _chunk_text(command_id: str, text: str, chunk_size: int) -> list[CatalogChunk]:
    words = text.split()
    if not words:
        return [CatalogChunk(chunk_id=f"{command_id}#0", text="", entry_id=command_id)]
    chunks = []
    for i in range(0, len(words), chunk_size):
        chunks.append(
            CatalogChunk(
                chunk_id=f"{command_id}#{i // chunk_size}",
                text=" ".join(words[i : i + chunk_size]),
                entry_id=command_id,
            )
        )
    return chunks


def load_catalog_dict(raw: Mapping[str, Any]) -> Catalog:
    if raw.get("version") != "v1":
        raise SchemaViolation(f"unsupported catalog version {raw.get('version')!r}")
    entries_raw = raw.get("entries")
    if entries_raw is None or not isinstance(entries_raw, list):
        raise SchemaViolation("catalog must carry an 'entries' array")
    if not entries_raw:
        raise EmptyCatalog("catalog has no entries")
    chunk_size = int(raw.get("chunk_size", DEFAULT_CHUNK_SIZE))

    entries: dict[str, CatalogEntry] = {}
    chunks: list[CatalogChunk] = []
    for e in entries_raw:
        try:
            command_id = e["command_id"]
            parent_chain = tuple(e["parent_chain"])
            doc = e["doc"]
            params = tuple(
                Parameter.from_dict(p) for p in e.get("signature", {}).get("parameters", [])
            )
        except (KeyError, TypeError) as exc:
            raise SchemaViolation(f"malformed catalog entry: {exc}") from exc
        if command_id in entries:
            raise SchemaViolation(f"duplicate command_id {command_id!r}")
        if not parent_chain:
            raise SchemaViolation(f"entry {command_id!r} has an empty parent_chain")
        entries[command_id] = CatalogEntry(
            command_id=command_id,
            parameters=params,
            parent_chain=parent_chain,
            doc_text=doc,
        )
        chunks.extend(_chunk_text(command_id, doc, chunk_size))
    return Catalog(entries=entries, chunks=chunks)


def load_catalog(path: str | Path) -> Catalog:
    """Load and index a catalog file (schema v1)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"catalog is not valid JSON: {e}") from e
    return load_catalog_dict(raw)


def retrieve(catalog: Catalog, query: str, k: int = 5) -> list[CatalogChunk]:
    """Top-k chunks by BM25 score; ties broken by chunk_id ascending.
    Chunks sharing no term with the query are never returned."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = catalog.index.score(query)
    ranked = sorted(
        (i for i, s in enumerate(scores) if s > 0.0),
        key=lambda i: (-scores[i], catalog.chunks[i].chunk_id),
    )
    return [catalog.chunks[i] for i in ranked[:k]]


def ast_depth(program: "ModelingProgram", catalog: Catalog) -> int:
    """Cumulative specification depth: for every command, its hierarchy
    depth plus the number of explicitly specified parameters."""
    total = 0
    for cmd in program.commands:
        entry = catalog.entry(cmd.command_id)
        total += entry.depth + len(cmd.arguments)
    return total
