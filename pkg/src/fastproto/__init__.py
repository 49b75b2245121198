"""fastproto: a domain-specific interface DSL engine that grounds design
instructions into typed constructs and compiles them to neutral CSG
modeling commands, with automated domain adaptation from a commonsense
knowledge source."""

from .constructs import (
    DomainInterface,
    DslProgram,
    Instruction,
    PartConstruct,
    RelationConstruct,
    joint_log_prob,
    parse_program,
    serialize_program,
    validate_bindings,
)
from .catalog import Catalog, load_catalog, retrieve, ast_depth
from .knowledge import StubKnowledgeSource, LiveKnowledgeSource, FeasibilityOpinion
from .adapt import AdaptConfig, adapt_domain, run_mcmc, crp_assign, build_concept_tree
from .translate import (
    ModelingProgram,
    QuantifierTable,
    apply_quantifier,
    compile_program,
    evaluate_csg,
    ground_instruction,
)
from .metrics import StepRanking, information_clarity, rendering_consistency
from .session import SessionService

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig",
    "Catalog",
    "DomainInterface",
    "DslProgram",
    "FeasibilityOpinion",
    "Instruction",
    "LiveKnowledgeSource",
    "ModelingProgram",
    "PartConstruct",
    "QuantifierTable",
    "RelationConstruct",
    "SessionService",
    "StepRanking",
    "StubKnowledgeSource",
    "adapt_domain",
    "apply_quantifier",
    "ast_depth",
    "build_concept_tree",
    "compile_program",
    "crp_assign",
    "evaluate_csg",
    "ground_instruction",
    "information_clarity",
    "joint_log_prob",
    "load_catalog",
    "parse_program",
    "rendering_consistency",
    "retrieve",
    "run_mcmc",
    "serialize_program",
    "validate_bindings",
]
