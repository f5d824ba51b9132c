class DataError(ValueError):
    """Malformed or inconsistent input data (files, records, model JSON)."""


class InsufficientDataError(ValueError):
    pass


class NoCrossingError(ValueError):
    """A fitted curve never reaches the requested probability."""


class DegenerateFitError(ValueError):
    pass


class ModelNotFittedError(LookupError):
    pass


class EmptySetError(ValueError):
    """No composite offset satisfies the requested probability."""
