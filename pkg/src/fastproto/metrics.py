"""Evaluation measures: rendering consistency from step-wise rankings and
information clarity from cumulative specification depth."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

from .catalog import Catalog, ast_depth
from .errors import InvalidRank
from .translate import ModelingProgram


@dataclass(frozen=True)
class StepRanking:
    """Ranked order of candidate results for one intervention step.

    ``ranks`` maps method id to rank (1 = best) over ``k`` methods; a
    partial ranking carries only a prefix of 1..k (rank 1 must be
    present)."""

    step: int
    ranks: dict[str, int]
    k: int
    partial: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise InvalidRank("rankings need at least two candidate methods")
        values = sorted(self.ranks.values())
        if not values:
            raise InvalidRank("ranking carries no ranks")
        expected = list(range(1, len(values) + 1))
        if values != expected:
            raise InvalidRank(
                f"ranks must form a prefix of 1..{self.k}, got {values}"
            )
        if values[-1] > self.k:
            raise InvalidRank(f"rank {values[-1]} exceeds method count {self.k}")
        if len(values) < self.k and not self.partial:
            object.__setattr__(self, "partial", True)

    def to_dict(self) -> dict:
        return {"step": self.step, "ranks": dict(self.ranks), "k": self.k,
                "partial": self.partial}

    @classmethod
    def from_dict(cls, d: dict) -> "StepRanking":
        return cls(step=int(d["step"]), ranks={m: int(r) for m, r in d["ranks"].items()},
                   k=int(d["k"]), partial=bool(d.get("partial", False)))


@dataclass(frozen=True)
class ConsistencyScore:
    value: float
    n_steps: int

    def to_dict(self) -> dict:
        return {"value": self.value, "n_steps": self.n_steps}


@dataclass(frozen=True)
class ClarityScore:
    raw: int
    normalized: float
    n_commands: int

    def to_dict(self) -> dict:
        return {"raw": self.raw, "normalized": self.normalized,
                "n_commands": self.n_commands}


def step_score(ranking: StepRanking, method_id: str) -> float:
    """(k - rank) / (k - 1) when ranked; unranked methods in partial data
    score zero."""
    rank = ranking.ranks.get(method_id)
    if rank is None:
        return 0.0
    return (ranking.k - rank) / (ranking.k - 1)


def rendering_consistency(
    rankings: Sequence[StepRanking], method_id: str, k: Optional[int] = None
) -> ConsistencyScore:
    """Mean per-step normalized rank score under uniform step weighting."""
    if not rankings:
        raise InvalidRank("consistency needs at least one ranked step")
    if k is not None:
        for r in rankings:
            if r.k != k:
                raise InvalidRank(f"step {r.step} ranked over {r.k} methods, expected {k}")
    scores = [step_score(r, method_id) for r in rankings]
    return ConsistencyScore(value=sum(scores) / len(scores), n_steps=len(scores))


def information_clarity(program: ModelingProgram, catalog: Catalog) -> ClarityScore:
    """Raw clarity is the cumulative AST depth of specified constructs;
    the normalized form raw / (raw + |M| * median entry depth) makes
    programs of different sizes comparable."""
    raw = ast_depth(program, catalog)
    n = len(program.commands)
    if raw == 0:
        return ClarityScore(raw=0, normalized=0.0, n_commands=n)
    denom = raw + n * catalog.median_depth()
    return ClarityScore(raw=raw, normalized=raw / denom, n_commands=n)


def metrics_report(
    domain: str,
    session_id: str,
    consistency: Optional[ConsistencyScore] = None,
    clarity: Optional[ClarityScore] = None,
) -> dict:
    report: dict = {"domain": domain, "session_id": session_id}
    if consistency is not None:
        report["consistency"] = consistency.to_dict()
    if clarity is not None:
        report["clarity"] = clarity.to_dict()
    return report


def report_csv(reports: Sequence[dict]) -> str:
    lines = ["domain,session_id,consistency,n_steps,clarity_raw,clarity_normalized,n_commands"]
    for r in reports:
        cons = r.get("consistency", {})
        clar = r.get("clarity", {})
        lines.append(
            ",".join(
                [
                    r.get("domain", ""),
                    r.get("session_id", ""),
                    f"{cons.get('value', '')}",
                    f"{cons.get('n_steps', '')}",
                    f"{clar.get('raw', '')}",
                    f"{clar.get('normalized', '')}",
                    f"{clar.get('n_commands', '')}",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
