"""Exception taxonomy shared across the pipeline.

Every error raised on a contract violation subclasses ClaimPipeError so
callers (and the CLI) can map failures to exit codes without string
matching.
"""


class ClaimPipeError(Exception):
    """Base class for all pipeline errors."""


# --- encryption engine ---

class HeError(ClaimPipeError):
    """Base class for homomorphic-encryption failures."""


class InvalidParams(HeError):
    """Parameter set violates a structural invariant."""


class NonFiniteInput(HeError):
    """Input vector contains NaN or infinity."""


class SlotOverflow(HeError):
    """More values supplied than available slots."""


class KeyParamsMismatch(HeError):
    """Key material belongs to a different parameter set."""


class LevelMismatch(HeError):
    """Operands sit at different levels of the modulus chain."""


class ScaleMismatch(HeError):
    """Operands carry different scales; align before adding."""


class NoLevelsRemaining(HeError):
    """Operation needs a rescale but the chain is exhausted."""


class MissingRotationKey(HeError):
    """No rotation key available for a requested step."""


class SerializationError(HeError):
    """Byte stream is not a valid serialized object."""


# --- decision model ---

class ModelError(ClaimPipeError):
    """Base class for decision-model failures."""


class SchemaViolation(ModelError):
    """Record or dataset does not match the expected schema."""


class DegenerateColumn(ModelError):
    """A feature column is constant; standardization undefined."""


class EmptyDataset(ModelError):
    """No rows to fit on."""


class NonBinaryLabels(ModelError):
    """Labels contain values other than 0 and 1."""


class InvalidInterval(ModelError):
    """Approximation interval bound must be positive and finite."""


class OutOfRange(ModelError):
    """Probability outside [0, 1]; refuse to decide."""


# --- ledger ---

class LedgerError(ClaimPipeError):
    """Base class for ledger failures."""


class CorruptLedger(LedgerError):
    """Stored chain fails hash verification.

    Carries the index of the first bad block.
    """

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"ledger corrupt at block {index}")


class MissingDataLog(LedgerError):
    """Result logged (or requested) for a claim with no data log."""


class DuplicateResult(LedgerError):
    """Claim already has a bound result."""


class DataHashConflict(LedgerError):
    """Data hash disagrees with the one already on the chain."""


class UnknownClaim(LedgerError):
    """No record for the requested claim id."""


# --- envelope ---

class EnvelopeError(ClaimPipeError):
    """Base class for envelope failures."""


class BadMagic(EnvelopeError):
    """Byte stream does not start with the envelope magic."""


class WrongVersion(EnvelopeError):
    """Envelope version unsupported."""


class AuthFailure(EnvelopeError):
    """Authentication tag rejected; ciphertext or key is wrong."""


class BadKey(EnvelopeError):
    """Symmetric key has the wrong length."""


# --- workflow ---

class WorkflowError(ClaimPipeError):
    """Base class for workflow failures."""


class ExchangeUnwritable(WorkflowError):
    """Exchange directory cannot be created or written."""


class PendingResult(WorkflowError):
    """No result file for the claim yet."""


class StaleSubmission(WorkflowError):
    """Request payload hash disagrees with the ledger data log."""


# --- configuration / CLI ---

class ConfigError(ClaimPipeError):
    """Configuration file missing, unreadable, or invalid."""


class InvalidArgument(ClaimPipeError):
    """Command argument outside its allowed range."""
