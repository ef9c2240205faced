"""Exception types raised across the package."""


class FingerNarxError(Exception):
    """Base class for all package errors."""


class DegenerateChannelError(FingerNarxError, ValueError):
    def __init__(self, channel: str):
        super().__init__(f"channel {channel!r} is constant (max == min); cannot normalize")
        self.channel = channel


class DegenerateSignalError(FingerNarxError, ValueError):
    pass


class DatasetError(FingerNarxError, ValueError):
    """Malformed, non-uniform, or too-short dataset."""


class ShapeError(FingerNarxError, ValueError):
    pass


class SingularCalibrationError(FingerNarxError, ValueError):
    pass


class TrackingLossError(FingerNarxError, RuntimeError):
    def __init__(self, frame: str, n_blobs: int):
        super().__init__(f"tracking lost in frame {frame}: {n_blobs} qualifying blob(s), need 2")
        self.frame = frame
        self.n_blobs = n_blobs


class ModelFormatError(FingerNarxError, ValueError):
    """Model file could not be parsed; message carries the location."""


class ConfigError(FingerNarxError, ValueError):
    pass
