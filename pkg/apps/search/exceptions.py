class SearchError(RuntimeError):
    pass


class DegenerateTask(SearchError, ValueError):
    """Neither error nor cost varies away from zero, so no weight balances them."""


class InvalidBudget(SearchError, ValueError):
    def __init__(self, budget, minimum):
        super().__init__(f"A search needs at least {minimum} trials, got {budget}")
        self.budget = budget
        self.minimum = minimum
