"""Exception hierarchy shared across the package."""


class SkycatError(Exception):
    """Base class for every error raised by skycat."""


class DomainError(SkycatError, ValueError):
    pass


class EncodingError(SkycatError, ValueError):
    """A trixel id or name that does not follow the HTM encoding."""


class DepthLimitError(SkycatError, ValueError):
    pass


class GeometryError(SkycatError, ValueError):
    pass


class ConfigurationError(SkycatError, ValueError):
    pass


class FlagLookupError(SkycatError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DepthMismatchError(SkycatError, ValueError):
    pass


class CatalogFormatError(SkycatError):
    """The catalog file could not be decoded."""


class VersionMismatchError(CatalogFormatError):
    pass


class TruncatedFileError(CatalogFormatError):
    pass


class DigestMismatchError(CatalogFormatError):
    pass


class LoadError(SkycatError):
    pass


class UnknownEventError(LoadError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class AlreadyUndoneError(LoadError):
    pass


class UndoConflictError(LoadError):
    pass
