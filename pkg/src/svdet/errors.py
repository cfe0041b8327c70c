"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 2, DivergenceError -> 3.
"""


class DataError(ValueError):
    """Malformed or contract-violating input data."""


class DivergenceError(RuntimeError):
    """Numerical divergence during iterative fitting."""
