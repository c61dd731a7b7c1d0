class RangeViolation(ValueError):
    """A parameter fell outside its admissible interval.

    ``bound`` names the violated constraint so callers (notably the CLI) can
    report it in machine-readable form.
    """

    def __init__(self, message, bound=None, value=None, lower=None, upper=None, index=None):
        super().__init__(message)
        self.bound = bound
        self.value = value
        self.lower = lower
        self.upper = upper
        self.index = index

    def to_dict(self):
        return {
            "error": "range_violation",
            "message": str(self),
            "bound": self.bound,
            "value": self.value,
            "lower": self.lower,
            "upper": self.upper,
            "index": self.index,
        }


class ScheduleViolation(RangeViolation):
    """A relaxation or step size at iteration ``index`` is out of range."""


class NumericalFailure(ArithmeticError):
    pass
