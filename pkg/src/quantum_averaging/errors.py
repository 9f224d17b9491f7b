"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """An input violates a documented precondition."""


class UnsupportedConfigurationError(DomainError):
    """No closed form exists for the requested configuration; use Monte Carlo."""


class StarvedSelectionError(RuntimeError):
    """Post-selection kept no samples.

    Carries the empirical success probability (always 0) and the counts so
    callers can report what happened.
    """

    def __init__(self, kept, total, threshold=None):
        self.kept = kept
        self.total = total
        self.threshold = threshold
        self.success_probability = kept / total if total else 0.0
        super().__init__(
            f"post-selection kept {kept} of {total} samples "
            f"(threshold={threshold}, empirical P_S={self.success_probability:g})"
        )
