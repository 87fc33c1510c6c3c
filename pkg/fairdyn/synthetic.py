"""
Synthetic score tables with a known repayment distribution.

Scores are spread evenly over the score range with a linear CDF, and the repayment probability at a score is the
Beta quantile of that score's rank, so the repayment probabilities of the population follow Beta(mu, c) exactly.
"""

from typing import Sequence, Tuple

import numpy as np
import pandas as pd

from .population import PopulationState
from .specfun import inv_reg_inc_beta

# repayment profiles of the two default synthetic groups, (name, mu, c)
DEFAULT_PROFILES = (
    ("group 0", 0.65, 2.5),
    ("group 1", 0.82, 3.5),
)
DEFAULT_SCORE_RANGE = (300.0, 850.0)


def make_score_table(name: str, state: PopulationState, n_scores: int = 400,
                     score_range: Tuple[float, float] = DEFAULT_SCORE_RANGE) -> pd.DataFrame:
    scores = np.linspace(score_range[0], score_range[1], n_scores)
    cdf = np.linspace(0.0, 1.0, n_scores)
    repayment = np.asarray([inv_reg_inc_beta(u, state.beta_params) for u in cdf])
    return pd.DataFrame({
        "group": name,
        "score": scores,
        "cdf": cdf,
        "delinquency_90d": np.clip(1.0 - repayment, 0.0, 1.0),
    })


def make_score_tables(profiles: Sequence[Tuple[str, float, float]] = DEFAULT_PROFILES, n_scores: int = 400,
                      score_range: Tuple[float, float] = DEFAULT_SCORE_RANGE) -> pd.DataFrame:
    """
    One table per (name, mu, c) profile, stacked in the score table CSV layout.
    """
    frames = [
        make_score_table(name, PopulationState(mu, c), n_scores, score_range)
        for name, mu, c in profiles
    ]
    return pd.concat(frames, ignore_index=True)


def write_score_csv(tables: pd.DataFrame, path):
    tables.to_csv(path, index=False, columns=["group", "score", "cdf", "delinquency_90d"], float_format="%.17g")
