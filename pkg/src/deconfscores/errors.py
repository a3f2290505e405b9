"""Exception hierarchy shared across the package."""


class DeconfError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(DeconfError):
    """Non-finite data, dimension mismatch, or otherwise unusable input."""


class DegenerateResponse(DeconfError):
    """Binary response with a single class, or folds that cannot be stratified."""


class DegenerateTreatmentArm(DeconfError):
    """A treatment arm required by an estimator is empty."""


class DegenerateWeights(DeconfError):
    """All control weights vanished; the Hajek denominator is zero."""


class DegenerateFamily(DeconfError):
    """The score family collapsed (near-zero coefficient vectors)."""


class NullSpaceEmpty(DeconfError):
    """No orthogonal complement exists for the requested draw."""


class DegenerateDesign(DeconfError):
    """Repeated simulation draws produced a single-arm dataset."""


class InvalidLink(DeconfError):
    """Link function not admissible for the requested assumption."""


class SchemaError(DeconfError):
    """CSV header does not match the expected dataset schema."""


class ParseError(DeconfError):
    """A CSV cell could not be parsed; message carries row/column location."""


class IoError(DeconfError):
    """Report or curve output could not be written."""
