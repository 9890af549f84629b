"""Measured logprob-free costs against the information-theoretic query bound."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.oracle.errors import StealerError
from src.recover.bounds import epsilon_for_bits, per_logit_lower_bound

DEFAULT_BIT_TARGETS = (6.0, 12.0, 18.0, 23.0)
BASE_COLUMNS = ["bits", "epsilon", "bound"]


class LowerBoundViolationError(StealerError):
    """A measured attack cost fewer queries than any attack can."""

    def __init__(self, table: pd.DataFrame):
        self.table = table
        targets = ", ".join(f"{b:g}" for b in table.loc[table["beats_bound"], "bits"])
        super().__init__(f"measured cost below the lower bound at {targets} bits")


@dataclass(frozen=True)
class LowerBoundMeasurement:
    """Queries per logit one attack spent to reach a precision target."""

    attack: str
    bits: float
    queries_per_logit: float
    mean_width: float
    converged: bool = True


def lower_bound_table(
    bias_bound: float,
    n: int,
    bit_targets: Sequence[float] = DEFAULT_BIT_TARGETS,
    measurements: Sequence[LowerBoundMeasurement] = (),
) -> pd.DataFrame:
    """One row per bit target: the bound, and per attack the measured cost and its excess.

    `beats_bound` marks rows where a converged measurement came in under the
    bound, which can only mean a metering or bounding bug.
    """
    attacks = list(dict.fromkeys(m.attack for m in measurements))
    rows = []
    for bits in bit_targets:
        epsilon = epsilon_for_bits(bits)
        bound = per_logit_lower_bound(bias_bound, epsilon, n)
        row: dict[str, object] = {"bits": float(bits), "epsilon": epsilon, "bound": bound}
        beats = False
        for attack in attacks:
            match = [m for m in measurements if m.attack == attack and m.bits == bits]
            if not match:
                row[attack] = np.nan
                row[f"{attack}_gap"] = np.nan
                row[f"{attack}_converged"] = False
                continue
            m = match[0]
            row[attack] = m.queries_per_logit
            row[f"{attack}_gap"] = m.queries_per_logit - bound
            row[f"{attack}_converged"] = m.converged
            if m.converged and m.queries_per_logit < bound * (1 - 1e-12):
                beats = True
        row["beats_bound"] = beats
        rows.append(row)
    return pd.DataFrame(rows)


def check_lower_bound(table: pd.DataFrame) -> None:
    """Raise if any row is flagged as beating the bound."""
    if table["beats_bound"].any():
        raise LowerBoundViolationError(table)


def lower_bound_report(
    bias_bound: float,
    n: int,
    bit_targets: Sequence[float] = DEFAULT_BIT_TARGETS,
    measurements: Optional[Sequence[LowerBoundMeasurement]] = None,
) -> pd.DataFrame:
    """The bound table; raises LowerBoundViolationError when a measurement beats it."""
    table = lower_bound_table(bias_bound, n, bit_targets, measurements or ())
    check_lower_bound(table)
    return table
