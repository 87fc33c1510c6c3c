"""
Score table ingestion: per group score CDF and 90 day delinquency rate -> repayment probability histogram ->
fitted Beta population.

Input is a UTF-8 CSV with header group,score,cdf,delinquency_90d and one row per (group, score).
"""

from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np
import pandas as pd
from scipy import interpolate

from . import utils
from .population import GroupLabel, PopulationState, fit_beta_from_histogram, equalize_shapes
from .errors import ScoreTableError
from .logger import log as default_log

COLUMNS = ("group", "score", "cdf", "delinquency_90d")
NUMERIC_COLUMNS = ("score", "cdf", "delinquency_90d")
MIN_ROWS = 5
CDF_TOLERANCE = 1e-9


def _line(index: int) -> int:
    # dataframe index 0 is line 2 of the file, after the header
    return int(index) + 2


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """
    One group's score table. lines holds the source file line of every row for diagnostics.
    """
    label: GroupLabel
    score: np.ndarray
    cdf: np.ndarray
    delinquency: np.ndarray
    lines: tuple = ()

    @property
    def rows(self):
        return list(zip(self.score.tolist(), self.cdf.tolist(), self.delinquency.tolist()))

    def __len__(self):
        return len(self.score)


def _validate_group(name, frame: pd.DataFrame, log) -> tuple:
    lines = [_line(i) for i in frame.index]
    score = frame["score"].to_numpy(dtype=np.float64)
    cdf = frame["cdf"].to_numpy(dtype=np.float64)
    delinquency = frame["delinquency_90d"].to_numpy(dtype=np.float64)

    for k in range(1, len(score)):
        if not score[k] > score[k - 1]:
            raise ScoreTableError(f"Scores for group '{name}' must be strictly increasing", lines[k], "score")
    for k in range(len(cdf)):
        if cdf[k] < 0:
            raise ScoreTableError(f"Negative cdf for group '{name}'", lines[k], "cdf")
        if k > 0 and cdf[k] < cdf[k - 1]:
            raise ScoreTableError(f"Decreasing cdf for group '{name}'", lines[k], "cdf")
    bad = np.nonzero((delinquency < 0) | (delinquency > 1))[0]
    if len(bad) > 0:
        raise ScoreTableError(f"Delinquency rate for group '{name}' must lie in [0,1]", lines[bad[0]],
                              "delinquency_90d")

    final = cdf[-1]
    if final > 1 + CDF_TOLERANCE:
        raise ScoreTableError(f"cdf for group '{name}' ends at {final:.6g} > 1", lines[-1], "cdf")
    if final <= 0:
        raise ScoreTableError(f"cdf for group '{name}' carries no mass", lines[-1], "cdf")
    if final < 1 - CDF_TOLERANCE:
        log.warn(f"cdf for group '{name}' ends at {final:.6g}, renormalizing to 1.")
    cdf = np.minimum(cdf / final, 1.0)
    return score, cdf, delinquency, tuple(lines)


def load_score_tables(path, log=None) -> List[ScoreTable]:
    """
    Reads and validates a score table CSV. Groups keep the order of their first appearance in the file.
    """
    log = log or default_log
    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype=str, skipinitialspace=True, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ScoreTableError(f"Could not parse score table {path}: {e}")

    frame.columns = [str(column).strip() for column in frame.columns]
    for column in COLUMNS:
        if column not in frame.columns:
            raise ScoreTableError(f"Missing column in {path}", 1, column)
    if len(frame) == 0:
        raise ScoreTableError(f"Score table {path} has no rows")

    frame["group"] = frame["group"].str.strip()
    empty = np.nonzero((frame["group"] == "").to_numpy())[0]
    if len(empty) > 0:
        raise ScoreTableError("Empty group name", _line(frame.index[empty[0]]), "group")

    for column in NUMERIC_COLUMNS:
        values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
        bad = np.nonzero(~np.isfinite(values.to_numpy(dtype=np.float64)))[0]
        if len(bad) > 0:
            row = frame.index[bad[0]]
            raise ScoreTableError(f"Value '{frame[column][row]}' is not a number", _line(row), column)
        frame[column] = values

    tables = []
    for i, name in enumerate(pd.unique(frame["group"])):
        score, cdf, delinquency, lines = _validate_group(name, frame[frame["group"] == name], log)
        tables.append(ScoreTable(GroupLabel(i, str(name)), score, cdf, delinquency, lines))
    log.debug(f"Loaded {len(tables)} score tables from {path}.")
    return tables


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """ Node weights w with sum(w * y) equal to the trapezoid integral of y over x. """
    dx = np.diff(x)
    w = np.zeros_like(x, dtype=np.float64)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


@dataclass(frozen=True, eq=False)
class ScoreDensity:
    score: np.ndarray
    density: np.ndarray

    def mass(self) -> np.ndarray:
        """ Probability mass carried by each score node. """
        return self.density * trapezoid_weights(self.score)

    def pairs(self):
        return list(zip(self.score.tolist(), self.density.tolist()))


def score_density(table: ScoreTable, smoothing: int = 1, log=None) -> ScoreDensity:
    """
    Score density as the derivative of a monotone cubic interpolant of the CDF, evaluated at the table scores
    and normalized to integrate to 1 by the trapezoid rule.

    :param smoothing: moving average window applied to the density samples, 1 disables it.
    """
    log = log or default_log
    if len(table) < MIN_ROWS:
        raise ScoreTableError(f"Group '{table.label.name}' needs at least {MIN_ROWS} rows, found {len(table)}")

    cdf = interpolate.PchipInterpolator(table.score, table.cdf)
    density = cdf.derivative()(table.score)
    if np.any(density < 0):
        log.warn(f"Clamped {int(np.sum(density < 0))} negative density values for group '{table.label.name}'.")
        density = np.maximum(density, 0.0)
    density = np.maximum(utils.moving_average(density, smoothing), 0.0)

    total = float(np.dot(density, trapezoid_weights(table.score)))
    if not total > 0:
        raise ScoreTableError(f"Score density for group '{table.label.name}' carries no mass")
    return ScoreDensity(table.score.copy(), density / total)


@dataclass(frozen=True, eq=False)
class RepaymentHistogram:
    """
    Histogram over repayment probability. Each bin is located at the mass weighted mean repayment probability of
    the scores that fell into it (the geometric center for empty bins), so the histogram mean is exact.
    """
    edges: np.ndarray
    centers: np.ndarray
    weights: np.ndarray

    @property
    def bins(self):
        return list(zip(self.centers.tolist(), self.weights.tolist()))

    def mean(self) -> float:
        return float(np.dot(self.centers, self.weights))

    def to_list(self):
        return [[float(c), float(w)] for c, w in zip(self.centers, self.weights)]


def repayment_histogram(table: ScoreTable, density: ScoreDensity, bins: int = 100,
                        smoothing: int = 1) -> RepaymentHistogram:
    """
    Pushes the score density through repayment probability 1 - delinquency_90d(score).

    :param smoothing: moving average window applied to the delinquency rates first, 1 disables it.
    """
    if bins < 1:
        raise ScoreTableError(f"Histogram needs at least one bin, found {bins}")
    if len(density.score) != len(table) or not np.array_equal(density.score, table.score):
        raise ScoreTableError(f"Density does not belong to group '{table.label.name}'")

    repayment = np.clip(1.0 - utils.moving_average(table.delinquency, smoothing), 0.0, 1.0)
    mass = density.mass()
    mass = mass / mass.sum()

    edges = np.linspace(0.0, 1.0, bins + 1)
    index = np.minimum((repayment * bins).astype(int), bins - 1)
    weights = np.bincount(index, weights=mass, minlength=bins)
    moments = np.bincount(index, weights=mass * repayment, minlength=bins)
    geometric = 0.5 * (edges[:-1] + edges[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        centers = np.where(weights > 0, moments / weights, geometric)
    centers = np.clip(centers, edges[:-1], edges[1:])
    return RepaymentHistogram(edges, centers, weights)


@dataclass(frozen=True, eq=False)
class FittedGroup:
    label: GroupLabel
    state: PopulationState
    histogram: RepaymentHistogram

    def to_dict(self):
        return {
            "name": self.label.name,
            "mu": self.state.mu,
            "c": self.state.c,
            "histogram": self.histogram.to_list(),
        }


def pipeline(path, bins: int = 100, smoothing: int = 1,
             equalize: Union[bool, Sequence[Sequence[str]], None] = None, log=None) -> List[FittedGroup]:
    """
    load -> density -> histogram -> Beta fit, optionally followed by shape averaging.

    :param equalize: True averages c over all groups, a list of name groups averages within each listed group.
    """
    log = log or default_log
    tables = load_score_tables(path, log=log)
    fitted = []
    for table in tables:
        density = score_density(table, smoothing, log=log)
        histogram = repayment_histogram(table, density, bins, smoothing)
        state = fit_beta_from_histogram(histogram.bins)
        log.info(f"Fitted {table.label.name}: mu={state.mu:.4f} c={state.c:.4f}")
        fitted.append(FittedGroup(table.label, state, histogram))

    if equalize is True:
        selections = [[group.label.name for group in fitted]]
    elif equalize:
        selections = [list(names) for names in equalize]
    else:
        selections = []

    by_name = {group.label.name: i for i, group in enumerate(fitted)}
    for names in selections:
        missing = [name for name in names if name not in by_name]
        if missing:
            raise ScoreTableError(f"Cannot equalize unknown groups {missing}")
        indexes = [by_name[name] for name in names]
        if len(indexes) < 2:
            continue
        states = equalize_shapes([fitted[i].state for i in indexes])
        for i, state in zip(indexes, states):
            fitted[i] = FittedGroup(fitted[i].label, state, fitted[i].histogram)
    return fitted
