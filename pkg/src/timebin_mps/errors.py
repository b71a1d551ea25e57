"""Exception types shared across the package."""


class DecompositionError(RuntimeError):
    """A matrix factorization (SVD) failed to converge."""


class ProtocolError(RuntimeError):
    """Chain bookkeeping was violated (a programming bug, not a physics condition)."""


class RunAbortedError(RuntimeError):
    """A run exceeded its truncation budget and its results are untrustworthy."""


class IntegratorError(RuntimeError):
    """The classical integrator drifted beyond its accuracy guard."""


class ConfigError(ValueError):
    """A run configuration could not be resolved into valid model parameters."""
