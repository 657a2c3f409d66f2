"""Exception types shared across the package."""


class FragserveError(Exception):
    pass


class ProfileParseError(FragserveError, ValueError):
    """Malformed profile/trace/spec input; message names the offending line."""


class ValidationError(FragserveError, ValueError):
    """Input violates a structural requirement (e.g. non-monotone profile table)."""


class InfeasibleError(FragserveError, RuntimeError):
    """No allocation/placement satisfies the constraints."""
