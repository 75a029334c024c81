class Error(Exception):
    """Generic exception that is the base exception of all other mixboost
    exceptions.
    """

    pass


class InterfaceError(Error):
    """Generic exception raised for errors that are related to how the library
    is called rather than to the numerical work itself. For example, passing
    distributions defined on supports of different sizes.
    """

    pass


class StructuralError(InterfaceError):
    """Raised when operands don't share a support, a dimension or a shape."""

    pass


class ValidationError(InterfaceError):
    """Raised for NaN, negative or unnormalised masses and weights, and for
    counts outside their allowed range.
    """

    pass


class DomainError(InterfaceError):
    """Raised when a scalar parameter such as a mixture weight lies outside its
    domain.
    """

    pass


class ConfigError(InterfaceError):
    """Raised when an experiment configuration can't be read or is invalid."""

    pass


class ComputationError(Error):
    """Generic exception raised for errors that arise inside the numerical
    work, for instance a fit that can't be completed.
    """

    pass


class InfeasibleError(ComputationError):
    """Raised when the surrogate target can't exist because the data puts at
    least β of its mass where the current model has none.
    """

    def __init__(self, delta, beta):
        super().__init__(
            f"The data distribution puts mass {delta!r} where the model has "
            f"zero density, which must be smaller than beta={beta!r}."
        )
        self.delta = delta
        self.beta = beta


class FittingError(ComputationError):
    """Raised when a weak learner, a discriminator or a density estimate can't
    be fitted.
    """

    pass


class BoostingError(ComputationError):
    """Raised when a boosting run has to stop early. The components fitted so
    far are available as the ``run`` attribute.
    """

    def __init__(self, msg, run=None):
        super().__init__(msg)
        self.run = run


class MixboostWarning(UserWarning):
    """Category of the warnings emitted for conditions that were recovered
    from but should be looked at, such as a classifier that didn't converge.
    """

    pass
