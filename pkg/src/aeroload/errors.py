"""Exception hierarchy shared by every pipeline stage."""


class AeroloadError(Exception):
    """Base class; the CLI maps any subclass to exit code 2."""

    #: short machine-readable name used in CLI error JSON
    code = "error"

    def __init__(self, message, *, path=None):
        super().__init__(message)
        self.path = None if path is None else str(path)

    def to_dict(self):
        out = {"error": self.code, "message": str(self)}
        if self.path is not None:
            out["file"] = self.path
        return out


# core-data
class ManifestParseError(AeroloadError):
    code = "ManifestParse"


class ChannelValidationError(AeroloadError):
    code = "ChannelValidation"


class DanglingReferenceError(AeroloadError):
    code = "DanglingReference"


# fnirs
class NonUniformSamplingError(AeroloadError):
    code = "NonUniformSampling"


class CutoffAboveNyquistError(AeroloadError):
    code = "CutoffAboveNyquist"


class SpanMismatchError(AeroloadError):
    code = "SpanMismatch"


class NonPositiveIntensityError(AeroloadError):
    code = "NonPositiveIntensity"


class SingularExtinctionMatrixError(AeroloadError):
    code = "SingularExtinctionMatrix"


# gaze
class TooFewSamplesError(AeroloadError):
    code = "TooFewSamples"


class EmptyPixelSetError(AeroloadError):
    code = "EmptyPixelSet"


class MaskDimMismatchError(AeroloadError):
    code = "MaskDimMismatch"


class UnknownClassIdError(AeroloadError):
    code = "UnknownClassId"


class RasterFormatError(AeroloadError):
    code = "RasterFormat"


# features
class UnknownTaskGroupError(AeroloadError):
    code = "UnknownTaskGroup"


class TooFewResponsesError(AeroloadError):
    code = "TooFewResponses"


class ComponentCountTooLargeError(AeroloadError):
    code = "ComponentCountTooLarge"


class MissingValuesPresentError(AeroloadError):
    code = "MissingValuesPresent"


class ColumnFullyMissingError(AeroloadError):
    code = "ColumnFullyMissing"


# models
class SingleClassTrainingError(AeroloadError):
    code = "SingleClassTraining"


class FeatureWidthMismatchError(AeroloadError):
    code = "FeatureWidthMismatch"


class LengthMismatchError(AeroloadError):
    code = "LengthMismatch"


class InvalidModelSpecError(AeroloadError):
    code = "InvalidModelSpec"


# experiments
class TooFewParticipantsError(AeroloadError):
    code = "TooFewParticipants"


class TargetNotFoundError(AeroloadError):
    code = "TargetNotFound"


class TooFewTasksError(AeroloadError):
    code = "TooFewTasks"


class UnknownModalityError(AeroloadError):
    code = "UnknownModality"


class InvalidConfigError(AeroloadError):
    code = "InvalidConfig"


# synth
class InvalidSpecError(AeroloadError):
    code = "InvalidSpec"


class InstanceTooLargeError(AeroloadError):
    code = "InstanceTooLarge"


class EmptyBaselineError(AeroloadError):
    code = "EmptyBaseline"
