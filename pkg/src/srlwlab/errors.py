"""Exception types shared across the package."""


class SRLWError(Exception):
    """Base class for all errors raised by srlwlab."""


class NumericalError(SRLWError):
    """A computation could not produce a trustworthy result."""


class NonConvergence(NumericalError):
    """A fixed-point iteration left its contraction regime or ran out of iterations."""

    def __init__(self, message, iterations=None, increments=None):
        super().__init__(message)
        self.iterations = iterations
        self.increments = list(increments or [])


class IllConditioned(NumericalError):
    """A Gram matrix is too ill-conditioned to invert at the requested regularization."""

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond


class DegenerateFamily(NumericalError):
    """Two frequencies of an exponential family coincide."""


class NonlinearityOverflow(NumericalError):
    """The convolution powers of the nonlinearity exceeded the configured bound."""


class ZeroMeanBump(SRLWError, ValueError):
    """The support profile b has zero mean, so the moment gains are undefined."""


class MeanMismatch(SRLWError, ValueError):
    """Initial and target states have different v-means; v-mean is invariant under the flow."""


class ConfigError(SRLWError, ValueError):
    """An experiment configuration is missing fields or contains invalid values."""
