"""Exception types shared across the package."""


class DataError(Exception):
    """Contract or data violation in inputs or artifacts (CLI exit code 2)."""
