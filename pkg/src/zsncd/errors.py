"""Exception types shared across the package."""


class ZsncdError(Exception):
    """Base class for all package-specific errors."""


# --- image file handling ---------------------------------------------------


class ImageFormatError(ZsncdError):
    """Base class for problems with PGM/PPM files."""


class MalformedHeaderError(ImageFormatError):
    """Header is not a valid P5/P6 header (bad magic, junk tokens, EOF)."""


class UnsupportedMaxvalError(ImageFormatError):
    """File declares a maxval other than 255."""


class TruncatedPayloadError(ImageFormatError):
    """Pixel payload is shorter than width*height*channels bytes."""


# --- checkpoints ------------------------------------------------------------


class CheckpointError(ZsncdError):
    """Base class for checkpoint load failures."""


class BadMagicError(CheckpointError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(CheckpointError):
    """Checkpoint format version is not supported."""


class ChecksumError(CheckpointError):
    """Payload CRC-32 does not match the stored value."""


class TruncatedCheckpointError(CheckpointError):
    """File ends before the declared records are complete."""


# --- training ---------------------------------------------------------------


class DivergenceError(ZsncdError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
