"""Automated domain specification.

Multi-chain Metropolis-Hastings sampling over the knowledge prior,
CRP-prior mixture clustering into a concept tree, and the reciprocative
expand/validate optimization that converges to a DomainInterface.
"""

from __future__ import annotations

import json
import math
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .catalog import Catalog, CatalogChunk, retrieve
from .constructs import (
    ConceptNode,
    ConceptTree,
    Construct,
    DomainInterface,
    PartConstruct,
    value_token,
)
from .errors import CatalogEmpty, EmptySampleSet, NonConvergence, ProviderUnavailable
from .knowledge import (
    ConstructSample,
    KnowledgeSource,
    Provenance,
    Verdict,
)
from .translate import (
    FILLET_PROPERTIES,
    HOLLOW_PROPERTIES,
    SUPPORTED_OPERATIONS,
    TILT_PROPERTIES,
)

SCORE_FLOOR = 1e-6
SMOOTHING = 0.01  # Dirichlet smoothing applied when estimating tables

# ---------------------------------------------------------------------------
# Metropolis-Hastings over the knowledge prior
# ---------------------------------------------------------------------------


@dataclass
class ChainState:
    """State of one MH chain.  ``history`` is the step-by-step trajectory
    (the current sample is appended every step, so rejected steps repeat
    the previous state, as frequency-based estimates require)."""

    chain_id: int
    current: ConstructSample
    history: list[ConstructSample] = field(default_factory=list)
    rejected_buffer: deque = field(default_factory=lambda: deque(maxlen=32))
    stalled_steps: int = 0
    accepted: int = 0
    failed: bool = False

    def __post_init__(self):
        if not self.history:
            self.history.append(self.current)


def run_chain(
    chain_id: int,
    seed_sample: ConstructSample,
    n_steps: int,
    ks: KnowledgeSource,
    rng: np.random.Generator,
    q_context: str = "",
    blacklist: Optional[set[str]] = None,
    buffer_capacity: int = 32,
    stall_after: int = 5,
) -> ChainState:
    """Run one chain for ``n_steps`` Metropolis-Hastings steps.

    Acceptance probability is min(1, score'/score).  Rejected proposals
    enter a bounded delayed-acceptance buffer; once the chain has gone
    ``stall_after`` consecutive steps without an acceptance, the oldest
    buffered proposal is re-proposed once, unchanged.
    """
    seed_sample = replace(
        seed_sample, provenance=Provenance(chain_id=f"chain-{chain_id}", step_id=0)
    )
    state = ChainState(
        chain_id=chain_id,
        current=seed_sample,
        rejected_buffer=deque(maxlen=buffer_capacity),
    )
    ctx = f"{q_context}|chain={chain_id}" if q_context else f"chain={chain_id}"

    def attempt(proposal: ConstructSample, step: int) -> bool:
        ratio = proposal.score / state.current.score
        if rng.uniform() < min(1.0, ratio):
            state.current = replace(
                proposal,
                provenance=Provenance(chain_id=f"chain-{chain_id}", step_id=step),
            )
            state.accepted += 1
            state.stalled_steps = 0
            return True
        return False

    for step in range(1, n_steps + 1):
        try:
            proposal = ks.propose(state.current, ctx)
        except ProviderUnavailable:
            state.failed = True
            break
        if blacklist and proposal.key() in blacklist:
            state.stalled_steps += 1
        elif not attempt(proposal, step):
            state.rejected_buffer.append(proposal)
            state.stalled_steps += 1
        if state.stalled_steps >= stall_after and state.rejected_buffer:
            retry = state.rejected_buffer.popleft()
            attempt(retry, step)
            state.stalled_steps = 0
        state.history.append(state.current)
    return state


def run_mcmc(
    domain: str,
    m_chains: int,
    n_steps: int,
    ks: KnowledgeSource,
    seed: int = 0,
    q_context: str = "",
    blacklist: Optional[set[str]] = None,
    buffer_capacity: int = 32,
    stall_after: int = 5,
    max_workers: int = 4,
) -> list[ConstructSample]:
    """Sample the knowledge prior with ``m_chains`` parallel chains of
    ``n_steps`` each; returns the concatenated chain trajectories
    (seeds included).  Chains are independent: each gets an RNG split
    from the master seed, so results do not depend on scheduling."""
    if m_chains < 1:
        raise ValueError("m_chains must be >= 1")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    try:
        seeds = ks.sample_seeds(domain, m_chains, q_context)
    except ProviderUnavailable as e:
        raise ProviderUnavailable(str(e), partial=[]) from e

    rngs = [
        np.random.default_rng(np.random.SeedSequence([seed, chain]))
        for chain in range(m_chains)
    ]
    if m_chains == 1:
        states = [
            run_chain(0, seeds[0], n_steps, ks, rngs[0], q_context,
                      blacklist, buffer_capacity, stall_after)
        ]
    else:
        with ThreadPoolExecutor(max_workers=min(m_chains, max_workers)) as pool:
            futures = [
                pool.submit(
                    run_chain, chain, seeds[chain], n_steps, ks, rngs[chain],
                    q_context, blacklist, buffer_capacity, stall_after,
                )
                for chain in range(m_chains)
            ]
            states = [f.result() for f in futures]

    samples: list[ConstructSample] = []
    for state in states:
        samples.extend(state.history)
    if any(state.failed for state in states):
        raise ProviderUnavailable("knowledge provider failed mid-run", partial=samples)
    return samples


# ---------------------------------------------------------------------------
# CRP / mixture clustering
# ---------------------------------------------------------------------------

CLUSTER_FIELDS = ("kind", "ident", "attr", "operation")


def construct_fields(construct: Construct) -> dict[str, str]:
    if isinstance(construct, PartConstruct):
        return {
            "kind": "part",
            "ident": construct.part,
            "attr": construct.attribute,
            "operation": construct.operation,
        }
    return {
        "kind": "relation",
        "ident": construct.relation,
        "attr": construct.attribute,
        "operation": construct.operation,
    }


@dataclass
class Cluster:
    cluster_id: int
    counts: dict[str, Counter] = field(
        default_factory=lambda: {f: Counter() for f in CLUSTER_FIELDS}
    )
    members: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.members)

    def add(self, fields_: dict[str, str], member: str):
        for f, tok in fields_.items():
            self.counts[f][tok] += 1
        self.members.append(member)

    def dominant(self) -> tuple[str, str, float]:
        """(field, token, purity) of the most concentrated non-kind field."""
        best = ("ident", "", 0.0)
        for f in ("ident", "attr", "operation"):
            if not self.counts[f]:
                continue
            tok, cnt = self.counts[f].most_common(1)[0]
            purity = cnt / self.size
            if purity > best[2]:
                best = (f, tok, purity)
        return best


@dataclass
class ClusterState:
    """Online mixture state under a Chinese Restaurant Process prior.

    Per-cluster parameters are multinomials over the construct fields;
    the base distribution for a new cluster is uniform over the vocabulary
    observed so far.
    """

    alpha: float = 1.0
    beta: float = 1.0  # Dirichlet pseudo-count inside cluster multinomials
    clusters: list[Cluster] = field(default_factory=list)
    vocab: dict[str, set] = field(
        default_factory=lambda: {f: set() for f in CLUSTER_FIELDS}
    )
    total: int = 0
    assignments: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("CRP concentration alpha must be > 0")

    def observe_vocab(self, fields_: dict[str, str]):
        for f, tok in fields_.items():
            self.vocab[f].add(tok)

    def likelihood(self, fields_: dict[str, str], cluster: Cluster) -> float:
        p = 1.0
        for f, tok in fields_.items():
            v = max(1, len(self.vocab[f]))
            p *= (cluster.counts[f][tok] + self.beta) / (cluster.size + self.beta * v)
        return p

    def base_likelihood(self, fields_: dict[str, str]) -> float:
        p = 1.0
        for f in fields_:
            p /= max(1, len(self.vocab[f]))
        return p


def crp_weights(
    construct: Construct | ConstructSample, cs: ClusterState
) -> list[float]:
    """Unnormalized seating weights: one per existing cluster, then the
    new-table weight.  Vocabulary is updated to include the sample first
    (the sample is about to be seated)."""
    if isinstance(construct, ConstructSample):
        construct = construct.construct
    fields_ = construct_fields(construct)
    cs.observe_vocab(fields_)
    weights = [
        cluster.size * cs.likelihood(fields_, cluster) for cluster in cs.clusters
    ]
    weights.append(cs.alpha * cs.base_likelihood(fields_))
    return weights


def crp_assign(
    sample: ConstructSample | Construct,
    cs: ClusterState,
    rng: np.random.Generator,
) -> int:
    """Seat a sample: probability proportional to cluster size times the
    sample's likelihood under the cluster's multinomial, or alpha times
    the base likelihood for a fresh cluster.  Updates parameters
    incrementally and returns the cluster id."""
    construct = sample.construct if isinstance(sample, ConstructSample) else sample
    member = (
        f"{sample.provenance.chain_id}/{sample.provenance.step_id}"
        if isinstance(sample, ConstructSample)
        else construct.key()
    )
    weights = np.array(crp_weights(construct, cs), dtype=float)
    probs = weights / weights.sum()
    idx = int(rng.choice(len(probs), p=probs))
    if idx == len(cs.clusters):
        cluster = Cluster(cluster_id=len(cs.clusters))
        cs.clusters.append(cluster)
    else:
        cluster = cs.clusters[idx]
    cluster.add(construct_fields(construct), member)
    cs.total += 1
    cs.assignments[member] = cluster.cluster_id
    return cluster.cluster_id


# ---------------------------------------------------------------------------
# Concept tree
# ---------------------------------------------------------------------------

def build_concept_tree(
    samples: Sequence[ConstructSample],
    domain: str = "domain",
    cluster_state: Optional[ClusterState] = None,
) -> ConceptTree:
    """Arrange samples into the concept hierarchy: domain root, then
    part/relation identifiers, subparts, properties, operations.  Leaf
    count equals the number of distinct construct tuples.  When a cluster
    state is supplied, each cluster is attached to the node matching its
    dominant field's dominant token."""
    if not samples:
        raise EmptySampleSet("cannot build a concept tree from zero samples")
    root = ConceptNode(name=domain, level="domain")
    for s in samples:
        c = s.construct
        member = f"{s.provenance.chain_id}/{s.provenance.step_id}"
        if isinstance(c, PartConstruct):
            path = [
                (c.part, "ident"),
                (c.subpart, "subpart"),
                (c.property, "property"),
                (c.operation, "operation"),
            ]
        else:
            path = [
                (c.relation, "ident"),
                (c.attribute, "subpart"),
                (c.operation, "operation"),
            ]
        node = root
        for name, level in path:
            node = node.child(name, level)
            if member not in node.members:
                node.members.append(member)

    if cluster_state is not None:
        level_of_field = {"ident": "ident", "attr": "property", "operation": "operation"}
        for cluster in cluster_state.clusters:
            fieldname, token, _purity = cluster.dominant()
            if not token:
                continue
            target_level = level_of_field[fieldname]
            wanted = token.split(".")[-1] if fieldname == "attr" else token
            for node in root.walk():
                if node.level in (target_level, "subpart") and node.name == wanted:
                    node.clusters.append(cluster.cluster_id)
    return ConceptTree(root=root)


# ---------------------------------------------------------------------------
# Expectation / maximization steps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hints:
    breadth: int = 0
    depth: int = 0


@dataclass
class IterationStats:
    iteration: int
    candidates: int
    maintained: int
    decomposed: int
    pruned: int
    soundness: float
    completeness: float
    granularity: float
    score_proxy: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def update_hints(
    hints: Hints,
    tree: Optional[ConceptTree],
    last: Optional[IterationStats],
    low_diversity_cutoff: int = 2,
    high_diversity_cutoff: int = 12,
) -> Hints:
    """Breadth/depth steering: widen exploration when the concept tree is
    under-diverse, narrow it when sprawling; deepen decomposition when
    most candidates bounce off validation, relax when almost none do."""
    breadth, depth = hints.breadth, hints.depth
    if tree is not None:
        n_top = len(tree.depth1_names())
        if n_top <= low_diversity_cutoff:
            breadth += 1
        elif n_top > high_diversity_cutoff and breadth > 0:
            breadth -= 1
    if last is not None and last.candidates > 0:
        rejected = last.decomposed + last.pruned
        if rejected / last.candidates > 0.5:
            depth += 1
        elif rejected / last.candidates < 0.1 and depth > 0:
            depth -= 1
    return Hints(breadth=breadth, depth=depth)


@dataclass
class AdaptConfig:
    m_chains: int = 16
    n_steps: int = 8
    alpha: float = 1.0
    max_iterations: int = 20
    convergence_pct: float = 0.02
    convergence_window: int = 2
    seed: int = 0
    retrieval_k: int = 5
    buffer_capacity: int = 32
    stall_after: int = 5

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def expectation_expand(
    iface: DomainInterface,
    ks: KnowledgeSource,
    hints: Hints,
    config: Optional[AdaptConfig] = None,
    blacklist: Optional[set[str]] = None,
    decompose_queue: Sequence[ConstructSample] = (),
    iteration: int = 0,
) -> list[ConstructSample]:
    """E-step: sample new candidate constructs conditioned on the current
    interface.  The breadth hint adds chains; the depth hint deepens the
    concept-tree excerpt passed as query context and drives finer
    re-proposals for queued decompositions."""
    config = config or AdaptConfig()
    context = ""
    if iface.concept_tree is not None:
        context = json.dumps(iface.concept_tree.excerpt(max_depth=2 + hints.depth),
                             sort_keys=True)
    m = config.m_chains + hints.breadth
    samples = run_mcmc(
        iface.domain,
        m,
        config.n_steps,
        ks,
        seed=config.seed + iteration,
        q_context=context,
        blacklist=blacklist,
        buffer_capacity=config.buffer_capacity,
        stall_after=config.stall_after,
    )
    finer_ctx = f"{context}|granularity=finer|depth={hints.depth}"
    for queued in decompose_queue:
        try:
            samples.append(ks.propose(queued, finer_ctx))
        except ProviderUnavailable as e:
            raise ProviderUnavailable(str(e), partial=samples) from e
    if blacklist:
        samples = [s for s in samples if s.key() not in blacklist]
    return samples


_TRANSFORM_OPS = frozenset(
    {"flatten", "widen", "narrow", "elongate", "elevate", "tilt", "smooth", "hollow"}
)
_TRANSFORM_PROPS = TILT_PROPERTIES | FILLET_PROPERTIES | HOLLOW_PROPERTIES


def render_retrieval_query(construct: Construct) -> str:
    """Retrieval probe for feasibility validation.

    Parameter-setting operations describe the primitive ("assign sphere
    radius"); shape-changing operations describe the transformation
    itself ("flatten height"), since that is what the realizing command
    documents."""
    if isinstance(construct, PartConstruct):
        from .constructs import subpart_base

        if construct.operation in _TRANSFORM_OPS or construct.property in _TRANSFORM_PROPS:
            return f"{construct.operation} {construct.property}"
        return f"{construct.operation} {subpart_base(construct.subpart)} {construct.property}"
    tokens = " ".join((*construct.descriptor, *construct.value))
    return f"{construct.operation} {tokens}".strip()


@dataclass
class MStepOutcome:
    maintained: list[tuple[ConstructSample, str]] = field(default_factory=list)
    regenerate: list[ConstructSample] = field(default_factory=list)
    pruned: list[ConstructSample] = field(default_factory=list)


def maximization_validate(
    candidates: Sequence[ConstructSample],
    catalog: Catalog,
    ks: KnowledgeSource,
    k: int = 5,
    blacklist: Optional[set[str]] = None,
) -> MStepOutcome:
    """M-step: retrieve documentation for each candidate and judge its
    feasibility.  Kept constructs come back with their command binding
    (the top retrieved entry); decompositions are queued for finer
    regeneration; pruned constructs are gone for good."""
    if len(catalog) == 0:
        raise CatalogEmpty("cannot validate against an empty catalog")
    best: dict[str, ConstructSample] = {}
    for s in candidates:
        key = s.key()
        if blacklist and key in blacklist:
            continue
        cur = best.get(key)
        if cur is None or s.score > cur.score:
            best[key] = s

    outcome = MStepOutcome()
    for key, sample in best.items():
        construct = sample.construct
        if construct.operation not in SUPPORTED_OPERATIONS:
            # hard engine constraint: no compilation rule for the operation
            outcome.pruned.append(sample)
            continue
        docs: list[CatalogChunk] = retrieve(catalog, render_retrieval_query(construct), k)
        if not docs:
            outcome.pruned.append(sample)
            continue
        opinion = ks.judge(construct, docs)
        if opinion.verdict is Verdict.POINT_TO_POINT:
            outcome.maintained.append((sample, docs[0].entry_id))
        elif opinion.verdict is Verdict.DECOMPOSE:
            outcome.regenerate.append(sample)
        else:
            outcome.pruned.append(sample)
    return outcome


# ---------------------------------------------------------------------------
# Full adaptation loop
# ---------------------------------------------------------------------------

@dataclass
class AdaptationReport:
    domain: str
    iterations: list[IterationStats] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    soundness: float = 0.0
    completeness: float = 0.0
    granularity_alignment: float = 0.0
    pruned_total: int = 0

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "soundness": self.soundness,
            "completeness": self.completeness,
            "granularity_alignment": self.granularity_alignment,
            "pruned_total": self.pruned_total,
            "iterations": [s.to_dict() for s in self.iterations],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def iterations_csv(self) -> str:
        lines = ["iteration,maintained,decomposed,pruned,soundness,completeness,granularity"]
        for s in self.iterations:
            lines.append(
                f"{s.iteration},{s.maintained},{s.decomposed},{s.pruned},"
                f"{s.soundness:.6f},{s.completeness:.6f},{s.granularity:.6f}"
            )
        return "\n".join(lines) + "\n"


def _interface_metrics(iface: DomainInterface, catalog: Catalog) -> tuple[float, float, float]:
    """(soundness, completeness, granularity alignment) of an interface
    against a catalog; see convergence_metrics for definitions."""
    construct_keys: set[str] = set(iface.bindings)
    finest: list[str] = []
    for part, subs in iface.parts.items():
        for sub, props in subs.items():
            for prop, ops in props.items():
                for op in ops:
                    key = f"p:{part}/{sub}/{prop}/{op}"
                    construct_keys.add(key)
                    finest.append(key)
    if not construct_keys:
        return 0.0, 0.0, 0.0
    realized = {
        key for key in construct_keys
        if iface.bindings.get(key) is not None and iface.bindings[key] in catalog
    }
    soundness = len(realized) / len(construct_keys)
    reachable = {cmd for cmd in iface.bindings.values() if cmd in catalog}
    completeness = len(reachable) / len(catalog) if len(catalog) else 0.0
    if finest:
        coarsest_depth = catalog.min_depth()
        aligned = [
            key for key in finest
            if key in realized
            and catalog.entry(iface.bindings[key]).depth == coarsest_depth
        ]
        granularity = len(aligned) / len(finest)
    else:
        granularity = 0.0
    return soundness, completeness, granularity


def convergence_metrics(
    iface: DomainInterface, catalog: Catalog, instruction_corpus: Sequence[str]
) -> dict[str, float]:
    """Intermediate adaptation metrics: soundness is the fraction of
    interface constructs with a catalog realization; completeness the
    fraction of catalog commands reachable from some construct;
    granularity alignment the fraction of finest-level constructs bound
    to coarsest-level commands."""
    if not instruction_corpus:
        raise ValueError("instruction corpus must be non-empty")
    soundness, completeness, granularity = _interface_metrics(iface, catalog)
    return {
        "soundness": soundness,
        "completeness": completeness,
        "granularity_alignment": granularity,
    }


def _rebuild_interface(
    domain: str,
    maintained: dict[str, tuple[ConstructSample, str]],
    cluster_state: ClusterState,
) -> DomainInterface:
    iface = DomainInterface(domain=domain)
    rel_tokens: list[str] = []
    samples = []
    # bind best-scored constructs first so each part's primary subpart and
    # property are its most plausible ones (stable, score-canonical order)
    ordered = sorted(maintained.items(), key=lambda kv: (-kv[1][0].score, kv[0]))
    for key, (sample, command_id) in ordered:
        samples.append(sample)
        c = sample.construct
        iface.bindings[key] = command_id
        if isinstance(c, PartConstruct):
            iface.bind(c.part, c.subpart, c.property, [c.operation])
        else:
            slot = c.attribute
            ops = iface.relation_ops.setdefault(slot, [])
            if c.operation not in ops:
                ops.append(c.operation)
            for tok in c.value:
                if tok not in rel_tokens:
                    rel_tokens.append(tok)
            if not any(
                t["endpoints"] == list(c.endpoints) for t in iface.relation_templates
            ):
                iface.relation_templates.append(
                    {
                        "endpoints": list(c.endpoints),
                        "operation": c.operation,
                        "value": list(c.value),
                    }
                )
    iface.relation_vocab = rel_tokens
    if samples:
        iface.concept_tree = build_concept_tree(samples, domain, cluster_state)
    return iface


def estimate_cond_tables(
    samples: Iterable[ConstructSample], smoothing: float = SMOOTHING
) -> tuple[dict, dict]:
    """Estimate the conditional tables of the hierarchical construct model
    from maintained-sample frequencies (Dirichlet smoothing applied here,
    never at query time).  Also returns numeric value statistics per
    attribute for quantifier calibration."""
    counts: dict[str, dict[str, Counter]] = {}
    value_stats: dict[str, list[float]] = {}

    def bump(factor: str, context: str, outcome: str):
        counts.setdefault(factor, {}).setdefault(context, Counter())[outcome] += 1

    for s in samples:
        c = s.construct
        if isinstance(c, PartConstruct):
            attr = c.attribute
            bump("ident_given_intent", "PART", c.part)
            bump("ident_given_intent", "MIXED", c.part)
            bump("attr_given_ident", c.part, attr)
            bump("part_op_given_attr", attr, c.operation)
            if c.value is not None:
                bump("part_value_given_attr", attr, value_token(c.value))
                if isinstance(c.value, (int, float)) and not isinstance(c.value, bool):
                    value_stats.setdefault(attr, []).append(float(c.value))
            if c.delta is not None:
                bump("part_delta_given_op", c.operation, value_token(c.delta))
        else:
            attr = c.attribute
            rel = c.relation
            bump("ident_given_intent", "GLOBAL", rel)
            bump("ident_given_intent", "MIXED", rel)
            bump("attr_given_ident", rel, attr)
            bump("relation_op_given_attr", attr, c.operation)
            if c.value:
                bump("relation_value_given_attr", attr, value_token(c.value))
            if c.delta is not None:
                bump("relation_delta_given_op", c.operation, value_token(c.delta))

    tables: dict[str, dict[str, dict[str, float]]] = {}
    for factor, contexts in counts.items():
        vocab = sorted({o for row in contexts.values() for o in row})
        v = len(vocab)
        tables[factor] = {}
        for context, row in contexts.items():
            n = sum(row.values())
            denom = n + smoothing * v
            probs = {o: (row.get(o, 0) + smoothing) / denom for o in vocab}
            total = sum(probs.values())
            tables[factor][context] = {o: p / total for o, p in probs.items()}
    for attr in value_stats:
        value_stats[attr].sort()
    return tables, value_stats


def maintained_score_proxy(
    bind_best: dict[str, float], catalog: Catalog, floor: float = SCORE_FLOOR
) -> float:
    """Log-likelihood proxy of the modeling language given the interface:
    for every catalog command, the log of the best maintained-construct
    score bound to it (floored when unbound).  Non-decreasing under the
    union/best-score update rule."""
    return sum(
        math.log(max(floor, bind_best.get(cmd, 0.0))) for cmd in catalog.entries
    )


def adapt_domain(
    domain: str,
    config: AdaptConfig,
    ks: KnowledgeSource,
    catalog: Catalog,
    strict: bool = False,
    observer=None,
) -> tuple[DomainInterface, AdaptationReport]:
    """Alternate construct expansion and feasibility validation until the
    maintained-construct count settles (relative change below
    ``convergence_pct`` for ``convergence_window`` consecutive
    iterations) or ``max_iterations`` is hit.

    Returns the interface with probability tables estimated from
    maintained samples.  On non-convergence the best-so-far interface is
    returned with the report flagging converged=False (or NonConvergence
    is raised when ``strict``)."""
    if len(catalog) == 0:
        raise CatalogEmpty("cannot adapt against an empty catalog")
    maintained: dict[str, tuple[ConstructSample, str]] = {}
    bind_best: dict[str, float] = {}
    blacklist: set[str] = set()
    decompose_queue: list[ConstructSample] = []
    cluster_state = ClusterState(alpha=config.alpha)
    cluster_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7919]))
    iface = DomainInterface(domain=domain)
    report = AdaptationReport(domain=domain)
    hints = Hints()
    last_stats: Optional[IterationStats] = None
    prev_count: Optional[int] = None
    stable = 0

    for iteration in range(1, config.max_iterations + 1):
        hints = update_hints(hints, iface.concept_tree, last_stats)
        candidates = expectation_expand(
            iface, ks, hints, config, blacklist, decompose_queue, iteration
        )
        outcome = maximization_validate(
            candidates, catalog, ks, config.retrieval_k, blacklist
        )

        for sample, command_id in outcome.maintained:
            key = sample.key()
            cur = maintained.get(key)
            if cur is None or sample.score > cur[0].score:
                maintained[key] = (sample, command_id)
            score = maintained[key][0].score
            if score > bind_best.get(command_id, 0.0):
                bind_best[command_id] = score
        blacklist |= {s.key() for s in outcome.pruned}
        decompose_queue = [
            s for s in outcome.regenerate
            if s.key() not in maintained and s.key() not in blacklist
        ]
        for sample in candidates:
            member = f"{sample.provenance.chain_id}/{sample.provenance.step_id}"
            if member not in cluster_state.assignments:
                crp_assign(sample, cluster_state, cluster_rng)

        iface = _rebuild_interface(domain, maintained, cluster_state)
        soundness, completeness, granularity = _interface_metrics(iface, catalog)
        last_stats = IterationStats(
            iteration=iteration,
            candidates=len(candidates),
            maintained=len(maintained),
            decomposed=len(outcome.regenerate),
            pruned=len(outcome.pruned),
            soundness=soundness,
            completeness=completeness,
            granularity=granularity,
            score_proxy=maintained_score_proxy(bind_best, catalog),
        )
        report.iterations.append(last_stats)
        report.pruned_total = len(blacklist)
        report.iterations_used = iteration
        if observer is not None:
            observer(
                iteration,
                set(maintained),
                set(blacklist),
                {s.key() for s in decompose_queue},
            )

        count = len(maintained)
        if prev_count is not None:
            rel = abs(count - prev_count) / max(prev_count, 1)
            stable = stable + 1 if rel < config.convergence_pct else 0
        prev_count = count
        if stable >= config.convergence_window:
            report.converged = True
            break

    tables, value_stats = estimate_cond_tables(
        [s for s, _ in maintained.values()]
    )
    iface.cond_tables = tables
    iface.value_stats = value_stats
    iface.check_tables()
    report.soundness, report.completeness, report.granularity_alignment = (
        _interface_metrics(iface, catalog)
    )
    if not report.converged and strict:
        err = NonConvergence(
            f"adaptation did not converge within {config.max_iterations} iterations"
        )
        err.interface = iface  # type: ignore[attr-defined]
        err.report = report  # type: ignore[attr-defined]
        raise err
    return iface, report
