"""Exception types raised across the package."""


class MocaError(Exception):
    """Base class for every error raised by mocaflow."""


class DepthNonPositive(MocaError, ValueError):
    """A point lands on or behind the camera plane."""

    def __init__(self, depth: float):
        super().__init__(f"camera-frame depth {depth!r} is not positive")
        self.depth = depth


class AtKink(MocaError, ValueError):
    """Gradient requested too close to an integer lattice coordinate."""


class MaskOutsideImage(MocaError, ValueError):
    """A mask extends past the image it is cropped from."""


class AnnotationMismatch(MocaError, ValueError):
    """Mask and 2D box of one annotation disagree by more than a pixel."""


class PatchOutOfBounds(MocaError, ValueError):
    """A pasted patch does not fit inside the target image."""


class ParseError(MocaError, ValueError):
    """Malformed text input. Carries the offending key and line number."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line


class TruncatedBinary(MocaError, ValueError):
    """Binary point file whose length is not a multiple of the record size."""

    def __init__(self, path, size: int, record: int = 16):
        super().__init__(
            f"{path}: {size} bytes is not a multiple of {record} (trailing "
            f"{size % record} bytes at offset {size - size % record})")
        self.size = size
        self.offset = size - size % record


class ConfigError(MocaError, ValueError):
    """Invalid run configuration."""
