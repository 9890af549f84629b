"""Tabular views of a singular-value spectrum."""

from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from src.models.extraction import SpectrumReport

SPECTRUM_COLUMNS = ["index", "singular_value", "log_gap"]


def spectrum_plot_data(report: SpectrumReport) -> pd.DataFrame:
    """One row per singular value; log_gap is the drop to the next value (NaN for the last)."""
    values = np.asarray(report.singular_values, dtype=np.float64)
    gaps = np.full(len(values), np.nan)
    gaps[: len(report.log_gaps)] = report.log_gaps
    return pd.DataFrame(
        {
            "index": np.arange(1, len(values) + 1),
            "singular_value": values,
            "log_gap": gaps,
        },
        columns=SPECTRUM_COLUMNS,
    )


def write_spectrum_csv(report: SpectrumReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spectrum_plot_data(report).to_csv(path, index=False)
    return path
