"""Typed errors raised across the evaluation harness.

Every loader and numeric stage fails with one of these; callers never see a
partially constructed value.
"""


class EmbedspaceError(Exception):
    """Base class for all harness errors."""


# --- I/O and parsing ---

class MagicMismatch(EmbedspaceError):
    """File does not start with the BEMB magic and is not a conforming CSV."""


class DimensionMismatch(EmbedspaceError):
    """Payload length does not equal count * dim."""


class NonFiniteValue(EmbedspaceError):
    def __init__(self, row: int, message: str = ""):
        self.row = row
        super().__init__(message or f"non-finite value at row {row}")


class IdCountMismatch(EmbedspaceError):
    """Sidecar id list length differs from the embedding row count."""


class IoFailure(EmbedspaceError):
    pass


class ParseError(EmbedspaceError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class InvariantViolation(EmbedspaceError):
    pass


# --- curation ---

class EmptyResult(EmbedspaceError):
    """No class survived the annotation-count filter."""


class TooFewMembers(EmbedspaceError):
    def __init__(self, class_name: str, size: int):
        self.class_name = class_name
        self.size = size
        super().__init__(f"class {class_name!r} has {size} members, need >= 3")


# --- clustering / metrics ---

class KTooLarge(EmbedspaceError):
    pass


class LengthMismatch(EmbedspaceError):
    pass


class DimMismatch(EmbedspaceError):
    pass


class KExceedsTrain(EmbedspaceError):
    pass


class UnknownClass(EmbedspaceError):
    pass


class EmptyClass(EmbedspaceError):
    def __init__(self, class_index: int):
        self.class_index = class_index
        super().__init__(f"class {class_index} has no test samples")


# --- reduction ---

class FitDiverged(EmbedspaceError):
    pass


class SpectralFailure(EmbedspaceError):
    pass


class NonFiniteCoordinate(EmbedspaceError):
    def __init__(self, epoch: int, point: int):
        self.epoch = epoch
        self.point = point
        super().__init__(f"non-finite coordinate at epoch {epoch}, point {point}")


# --- harness ---

class NonFiniteInput(EmbedspaceError):
    pass


class MissingEvents(EmbedspaceError):
    def __init__(self, count: int, sample_ids=()):
        self.count = count
        self.sample_ids = list(sample_ids)
        super().__init__(
            f"{count} embedding ids not covered by the annotation table"
            + (f" (e.g. {self.sample_ids[:5]})" if self.sample_ids else "")
        )


class RegistryMiss(EmbedspaceError):
    def __init__(self, model: str):
        self.model = model
        super().__init__(f"model {model!r} not present in the registry")
