"""Exception types shared across the toolkit."""


class ScanidError(Exception):
    """Base class so the CLI can map toolkit failures to exit code 1."""


class DecodeError(ScanidError):
    pass


class SizeError(ScanidError):
    pass


class ManifestError(ScanidError):
    pass


class ParameterError(ScanidError):
    pass


class LabelError(ScanidError):
    pass


class GeometryError(ScanidError):
    pass


class TilingError(ScanidError):
    pass


class DataError(ScanidError):
    pass
