"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
MissingArtifactError -> 3, BackendError -> 4.
"""

from __future__ import annotations


class GuidebenchError(Exception):
    """Base class for all package errors."""


class GraphSchemaError(GuidebenchError):
    """Graph document violates the expected schema (missing/mistyped field)."""


class DanglingEdgeError(GraphSchemaError):
    """A child reference points at a node that is never defined."""

    def __init__(self, ref: str, parent: str):
        self.ref = ref
        self.parent = parent
        super().__init__(f"dangling edge: {parent} -> {ref} ({ref} is not defined)")


class CycleError(GraphSchemaError):
    """The graph contains a cycle; names one node on the cycle."""

    def __init__(self, ref: str):
        self.ref = ref
        super().__init__(f"cycle detected through node {ref}")


class PathParseError(GuidebenchError):
    """A path string could not be parsed into node references."""


class ConfigError(GuidebenchError):
    """Run configuration is missing, malformed, or inconsistent."""


class MissingArtifactError(GuidebenchError):
    """A pipeline stage input does not exist; names the producing stage."""

    def __init__(self, artifact: str, producer: str):
        self.artifact = artifact
        self.producer = producer
        super().__init__(f"missing artifact {artifact!r}: run the {producer!r} stage first")


class BackendError(GuidebenchError):
    """A predictor backend failed (transport error after retries, bad cache)."""
