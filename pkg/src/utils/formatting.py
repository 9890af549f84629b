"""Formatting utilities for display."""

import math
from typing import Optional


def _missing(value: Optional[float]) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


def format_number(value: Optional[float], decimals: int = 0) -> str:
    """Format a number with commas."""
    if _missing(value):
        return "N/A"
    if decimals == 0:
        return f"{value:,.0f}"
    return f"{value:,.{decimals}f}"


def format_scientific(value: Optional[float], digits: int = 2) -> str:
    """Format an error magnitude such as an RMS."""
    if _missing(value):
        return "N/A"
    return f"{value:.{digits}e}"


def format_bits(bits: Optional[float]) -> str:
    """Format bits of precision."""
    if _missing(bits):
        return "N/A"
    return f"{bits:.1f} bits"


def format_cost(value: Optional[float]) -> str:
    """Format a queries- or tokens-per-logit figure."""
    if _missing(value):
        return "N/A"
    return f"{value:.3f}"
