"""Synthetic victim models and their ground truth."""

from src.victim.builder import build_victim
from src.victim.model import TokenRangeError, Victim
from src.victim.prompts import random_prompts
from src.victim.spoofing import apply_spoofing

__all__ = ["build_victim", "Victim", "TokenRangeError", "random_prompts", "apply_spoofing"]
