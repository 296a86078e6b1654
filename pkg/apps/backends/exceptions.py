class GeneratorFailure(RuntimeError):
    """A query could not be answered, after retries where they apply."""


class GeneratorTimeout(GeneratorFailure):
    pass


class GeneratorHttpError(GeneratorFailure):
    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class BudgetExceeded(RuntimeError):
    def __init__(self, phase, cap):
        super().__init__(f"The {phase} query budget of {cap} is spent")
        self.phase = phase
        self.cap = cap


class OracleConfigError(ValueError):
    pass
