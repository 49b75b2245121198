"""Exception types shared across the engine."""

from __future__ import annotations


class FastprotoError(Exception):
    """Base class for all engine errors."""

    code = "error"


# --- program / construct errors -------------------------------------------

class MalformedJson(FastprotoError):
    code = "malformed_json"


class MissingSection(FastprotoError):
    code = "missing_section"

    def __init__(self, section: str):
        super().__init__(f"missing required section {section!r}")
        self.section = section


class DanglingRelationEndpoint(FastprotoError):
    code = "dangling_relation_endpoint"

    def __init__(self, part_id: str, relation: str = ""):
        msg = f"relationship endpoint {part_id!r} is not a declared part"
        if relation:
            msg += f" (in {relation!r})"
        super().__init__(msg)
        self.part_id = part_id


class MissingFactor(FastprotoError):
    code = "missing_factor"

    def __init__(self, factor: str, context: str, outcome: str = ""):
        detail = f"factor {factor!r} has no entry for context {context!r}"
        if outcome:
            detail += f" outcome {outcome!r}"
        super().__init__(detail)
        self.factor = factor
        self.context = context
        self.outcome = outcome


class UnknownDomain(FastprotoError):
    code = "unknown_domain"


# --- knowledge-source errors ------------------------------------------------

class ProviderUnavailable(FastprotoError):
    code = "provider_unavailable"

    def __init__(self, msg: str, partial: list | None = None):
        super().__init__(msg)
        self.partial = partial if partial is not None else []


class MalformedProviderOutput(FastprotoError):
    code = "malformed_provider_output"


class InvalidCount(FastprotoError):
    code = "invalid_count"


# --- catalog errors ----------------------------------------------------------

class SchemaViolation(FastprotoError):
    code = "schema_violation"


class EmptyCatalog(FastprotoError):
    code = "empty_catalog"


class CatalogEmpty(EmptyCatalog):
    """Raised when validation is attempted against a catalog with no entries."""

    code = "catalog_empty"


class UnknownCommand(FastprotoError):
    code = "unknown_command"

    def __init__(self, command_id: str):
        super().__init__(f"command {command_id!r} not present in catalog")
        self.command_id = command_id


# --- adaptation errors --------------------------------------------------------

class EmptySampleSet(FastprotoError):
    code = "empty_sample_set"


class NonConvergence(FastprotoError):
    code = "non_convergence"


# --- translation errors --------------------------------------------------------

class UnresolvableReference(FastprotoError):
    code = "unresolvable_reference"

    def __init__(self, token: str):
        super().__init__(f"no domain concept matches {token!r}")
        self.token = token


class UnboundOperation(FastprotoError):
    code = "unbound_operation"

    def __init__(self, construct: str):
        super().__init__(f"operation not bound for construct {construct}")
        self.construct = construct


class UnknownQuantifier(FastprotoError):
    code = "unknown_quantifier"


class UnknownDescriptor(FastprotoError):
    code = "unknown_descriptor"

    def __init__(self, token: str):
        super().__init__(f"no pose rule for relation descriptor {token!r}")
        self.token = token


class DegenerateScene(FastprotoError):
    code = "degenerate_scene"


# --- session / metrics errors ---------------------------------------------------

class UnknownSession(FastprotoError):
    code = "unknown_session"


class UnknownStep(FastprotoError):
    code = "unknown_step"


class SessionComplete(FastprotoError):
    code = "session_complete"


class InvalidRank(FastprotoError):
    code = "invalid_rank"
