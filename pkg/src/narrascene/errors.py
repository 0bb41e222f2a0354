"""Exception and warning hierarchy shared across the pipeline stages."""

from __future__ import annotations


class NarraSceneError(Exception):
    """Base class; ``module`` tags the pipeline stage that raised."""

    module = "narrascene"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class PipelineWarning(UserWarning):
    """Recoverable condition; the CLI maps these to exit status 2."""


# narrative model
class NarrativeError(NarraSceneError):
    module = "narrative"


class MalformedDocument(NarrativeError):
    pass


class EmptyFrames(NarrativeError):
    pass


class DanglingEntity(NarrativeError):
    def __init__(self, frame: str, entity: str):
        super().__init__(f"frame {frame!r}: triple references {entity!r}, which is not in the objects list")
        self.frame = frame
        self.entity = entity


class EmptyAfterNormalization(NarrativeError, ValueError):
    pass


# llm gateway
class GatewayError(NarraSceneError):
    module = "llm"


class GatewayUnavailable(GatewayError):
    pass


class ReplayMiss(GatewayError):
    def __init__(self, fingerprint: str, template_id: str):
        super().__init__(f"no cassette record for {template_id} request {fingerprint[:16]}...")
        self.fingerprint = fingerprint
        self.template_id = template_id


class UnparseableResponse(GatewayError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


# relations
class NonCanonicalRelation(NarraSceneError):
    module = "relations"


# tile index
class TileIndexError(NarraSceneError):
    module = "tiles"


class ProviderUnavailable(TileIndexError):
    pass


class DimensionMismatch(TileIndexError):
    pass


class DuplicateId(TileIndexError):
    pass


class EmptyIndex(TileIndexError):
    pass


# terrain
class TerrainError(NarraSceneError):
    module = "terrain"


class GenerationFailed(TerrainError):
    pass


class DisconnectedMask(TerrainError, ValueError):
    pass


class NoTerrainEvidence(PipelineWarning):
    pass


# placement
class PlacementError(NarraSceneError):
    module = "placement"


class GridFull(PlacementError):
    pass


class EntityMissing(PlacementError):
    pass


# evaluator
class EvaluationError(NarraSceneError):
    module = "evaluator"


class NoMatches(EvaluationError):
    pass


# cli / io
class ConfigError(NarraSceneError):
    module = "config"


class MissingArtifacts(NarraSceneError):
    module = "cli"


class IoFailure(NarraSceneError):
    module = "io"
