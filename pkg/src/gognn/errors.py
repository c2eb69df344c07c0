"""Exception types shared across the package."""


class GognnError(Exception):
    """Base class for all package errors."""


class ShapeError(GognnError, ValueError):
    pass


class DomainError(GognnError, ValueError):
    """Numeric-domain violation, e.g. log of a non-positive value."""


class ContractError(GognnError, ValueError):
    """A documented precondition was not met."""


class NonFiniteError(GognnError, FloatingPointError):
    pass


class DataError(GognnError):
    """Bad input data: unknown ids, malformed rows, unresolvable relations."""


class SmilesParseError(DataError):
    def __init__(self, smiles, offset, reason):
        self.smiles = smiles
        self.offset = offset
        self.reason = reason
        super().__init__(f"{reason} at offset {offset} in {smiles!r}")


class CheckpointError(GognnError):
    pass


class DivergenceError(GognnError):
    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
