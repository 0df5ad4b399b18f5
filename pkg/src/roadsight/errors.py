"""Domain exceptions shared across the toolkit."""


class ToolError(Exception):
    """Base for all domain errors raised by this package."""


# -- image codecs / geometry --------------------------------------------------

class BadMagic(ToolError):
    """PPM payload does not start with the P6 magic."""


class UnsupportedMaxval(ToolError):
    """PPM maxval is not 255."""


class Truncated(ToolError):
    """PPM payload shorter than width*height*3."""


class MalformedHeader(ToolError):
    """PPM header cannot be parsed."""


class EmptyRect(ToolError):
    """Crop rectangle has zero area after clipping."""


# -- tensors / network --------------------------------------------------------

class ShapeError(ToolError):
    """Tensor shapes inconsistent with the operation's contract."""


# -- losses / metrics ---------------------------------------------------------

class LengthMismatch(ToolError):
    """Paired sequences have different lengths."""


# -- classifier ---------------------------------------------------------------

class TooFewSamples(ToolError):
    """Dataset too small to split."""


class SingleClassTrainingSet(ToolError):
    """Training split does not contain both classes."""


class ModelFormatError(ToolError):
    """Model manifest/blob is invalid, truncated, or version-mismatched."""


# -- parsers ------------------------------------------------------------------

class ParseError(ToolError):
    """Malformed text input; message carries line number and, when known, file."""


class DegenerateInput(ToolError):
    """Input cannot support the requested operation (e.g. k > distinct boxes)."""
