class PolicyError(RuntimeError):
    pass


class ParseFailure(PolicyError, ValueError):
    """A policy reply held no well-formed action object."""


class InvalidAction(PolicyError, ValueError):
    """A well-formed action that is not valid in the current state."""


class AllProposalsInvalid(PolicyError):
    def __init__(self, size, rounds):
        super().__init__(f"All {size} proposals were invalid in {rounds} voting rounds")
        self.size = size
        self.rounds = rounds
