"""Exception hierarchy shared by all modules."""


class GroundingError(Exception):
    """Base class for every error raised by graphground."""


# vocabulary
class MissingEmbedding(GroundingError):
    def __init__(self, token):
        self.token = token
        super().__init__(f"no embedding for concept {token!r}")


class DimensionMismatch(GroundingError):
    pass


class DuplicateToken(GroundingError):
    def __init__(self, token):
        self.token = token
        super().__init__(f"duplicate concept token {token!r}")


class EmptyFamily(GroundingError):
    def __init__(self, family):
        self.family = family
        super().__init__(f"concept family {family!r} is empty")


class DegenerateEmbedding(GroundingError):
    pass


class EmptyVocabulary(GroundingError):
    pass


class UnknownFamily(GroundingError):
    def __init__(self, family):
        self.family = family
        super().__init__(f"unknown concept family {family!r}")


# scenes
class SchemaViolation(GroundingError):
    def __init__(self, path, message=""):
        self.path = path
        super().__init__(f"schema violation at {path}: {message}")


class DistributionInvalid(GroundingError):
    def __init__(self, object_id, message=""):
        self.object_id = object_id
        super().__init__(f"invalid distribution on {object_id!r}: {message}")


class DuplicateProposalId(GroundingError):
    def __init__(self, object_id):
        self.object_id = object_id
        super().__init__(f"duplicate proposal id {object_id!r}")


class MissingGroundTruth(GroundingError):
    pass


class UnknownId(GroundingError):
    def __init__(self, object_id):
        self.object_id = object_id
        super().__init__(f"unknown object id {object_id!r}")


# relations / graph
class TooLarge(GroundingError):
    pass


class UnknownCategoryToken(GroundingError):
    pass


class UnknownShapeToken(GroundingError):
    pass


# parsing
class NoTargetFound(GroundingError):
    pass


class AmbiguousParse(GroundingError):
    def __init__(self, candidates):
        self.candidates = candidates
        super().__init__(f"{len(candidates)} competing parses: {candidates}")


class LlmUnavailable(GroundingError):
    pass


class LlmMalformedResponse(GroundingError):
    def __init__(self, raw):
        self.raw = raw
        super().__init__(f"malformed LLM response: {raw[:200]!r}")


class LlmTokenUnmappable(GroundingError):
    def __init__(self, token):
        self.token = token
        super().__init__(f"cannot map {token!r} to a vocabulary concept")


class ModeFamilyMismatch(UserWarning):
    """Attribute clue supplied to a relation-only program; the clue is dropped."""


# reasoning
class EmptyScene(GroundingError):
    pass


class FamilyOutOfRange(GroundingError):
    pass


# harness
class PlacementFailed(GroundingError):
    pass


class NoUnambiguousTriple(GroundingError):
    pass
