"""Exception types shared across the package."""


class ContractError(ValueError):
    """An input violated a documented precondition."""


class DomainError(ContractError):
    """A map was evaluated outside its domain [0, 1]."""


class ConfigError(ValueError):
    """Invalid experiment or initialization configuration."""


class BudgetExceeded(RuntimeError):
    """Piece count of an iterated map grew past the allowed budget.

    ``iteration`` is the composition depth at which the budget was crossed.
    """

    def __init__(self, iteration: int, pieces: int, budget: int):
        super().__init__(
            f"piece count {pieces} exceeds budget {budget} at iteration {iteration}"
        )
        self.iteration = iteration
        self.pieces = pieces
        self.budget = budget
