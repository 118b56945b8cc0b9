"""Exception hierarchy shared by the heatlab engine and the command line."""

from __future__ import annotations

from typing import Optional


class HeatlabError(Exception):
    """Base class for every error raised deliberately by heatlab."""


class InvalidQueryError(HeatlabError, ValueError):
    """A kernel, bound or simulation was asked an ill-posed question."""


class OutOfValidityError(HeatlabError, ValueError):
    """A lower bound was requested outside the region where it is asserted."""


class ConfigError(HeatlabError, ValueError):
    """The experiment configuration or command-line flags are invalid."""


class NumericalFailure(HeatlabError, RuntimeError):
    """A numerical method failed to reach its accuracy target."""


class SeriesBudgetExceeded(NumericalFailure):
    """A kernel series hit ``k_max_cap`` before its tail bound was met."""

    def __init__(self, method: str, terms: int, tail_bound: Optional[float], message: str):
        super().__init__(message)
        self.method = method
        self.terms = terms
        self.tail_bound = tail_bound


__all__ = [
    "HeatlabError",
    "InvalidQueryError",
    "OutOfValidityError",
    "ConfigError",
    "NumericalFailure",
    "SeriesBudgetExceeded",
]
