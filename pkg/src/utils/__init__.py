"""Utility functions."""

from src.utils.formatting import format_bits, format_cost, format_number, format_scientific
from src.utils.log import log

__all__ = ["format_bits", "format_cost", "format_number", "format_scientific", "log"]
