"""Exception types shared across the package."""


class InternalCorruption(RuntimeError):
    """An invariant that cannot fail over a true erasure channel was violated."""


class QuantizerOverflow(RuntimeError):
    """The prediction interval is too wide to unwrap a modulo quantizer index."""


class BudgetExceeded(ValueError):
    """Exhaustive enumeration was requested beyond its configured budget."""


class MemoryOverflow(RuntimeError):
    """The encoder or decoder needs more generator/parity blocks than stored."""


class UnsupportedOperation(ValueError):
    """The requested operation is not available for this configuration."""
