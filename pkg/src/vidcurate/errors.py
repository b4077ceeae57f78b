"""Exception hierarchy shared by all pipeline stages."""


class VidcurateError(Exception):
    """Base class for all engine errors."""


class FormatError(VidcurateError):
    """Input does not conform to a declared wire or file format."""


class IntegrityError(VidcurateError):
    """Structurally valid input whose contents are inconsistent."""


class ManifestParseError(VidcurateError):
    """Malformed manifest line; message names the line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(VidcurateError):
    """Invalid configuration value or unknown config field."""


class EmptyInputError(VidcurateError):
    """Operation requires a nonempty input."""


class InsufficientFramesError(VidcurateError):
    """Operation requires more frames than the clip provides."""


class DegenerateInputError(VidcurateError):
    """Frame too small for the requested analysis."""


class DecoderError(VidcurateError):
    """External decoder subprocess failed; carries its diagnostic text."""


class ScorerError(VidcurateError):
    """Sidecar scorer failure: timeout, protocol violation, or reported error."""


class CaptionError(VidcurateError):
    """Caption service failure after retries, or a protocol violation."""


class PipelineError(VidcurateError):
    """Stage failure under the abort policy; names the clip and stage."""

    def __init__(self, clip_id: str, stage: str, message: str):
        super().__init__(f"clip {clip_id!r}, stage {stage!r}: {message}")
        self.clip_id = clip_id
        self.stage = stage
