"""Evaluation metrics: truth matching, NMSE, CCDF, detection accuracy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .scenario import SPEED_OF_LIGHT


@dataclass
class MetricReport:
    """Aggregated estimation quality for one operating point."""

    nmse_aoa: float = float("nan")
    nmse_doppler: float = float("nan")
    nmse_delay: float = float("nan")
    accuracy_aoa: float = float("nan")
    accuracy_doppler: float = float("nan")
    accuracy_delay: float = float("nan")
    ccdf_points: dict = field(default_factory=dict)
    n_trials: int = 0
    n_failed: int = 0


def match_by_value(truth: np.ndarray, estimates: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-total-|difference| one-to-one assignment.

    Returns (truth_index, estimate_index) pairs; indices absent from the
    pairing are misses / spurious estimates.  Used with AoAs, so Doppler and
    delay errors ride along with their angle-matched path.
    """
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    estimates = np.atleast_1d(np.asarray(estimates, dtype=float))
    if truth.size == 0 or estimates.size == 0:
        return []
    cost = np.abs(truth[:, None] - estimates[None, :])
    rows, cols = linear_sum_assignment(cost)
    return list(zip(rows.tolist(), cols.tolist()))


def nmse(truth, estimates) -> float:
    """Normalized mean-squared error E{|est-true|^2} / E{|true|^2} over
    matched pairs.  Returns NaN when the truth energy is zero (undefined)."""
    truth = np.asarray(truth, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if truth.size == 0:
        return float("nan")
    denom = np.mean(np.abs(truth) ** 2)
    if denom == 0.0:
        return float("nan")
    return float(np.mean(np.abs(estimates - truth) ** 2) / denom)


def ccdf(errors, thresholds) -> np.ndarray:
    """Complementary CDF: fraction of |errors| exceeding each threshold."""
    errors = np.abs(np.asarray(errors, dtype=float))
    if errors.size == 0:
        raise ValueError("errors must be nonempty")
    thresholds = np.asarray(thresholds, dtype=float)
    return np.array([np.mean(~(errors <= x)) for x in thresholds])


def detection_accuracy(errors, epsilon: float) -> float:
    """Fraction of detections with |error| <= epsilon.

    NaN entries mark missed paths: they stay in the denominator and count as
    incorrect.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("errors must be nonempty")
    with np.errstate(invalid="ignore"):
        hits = np.abs(errors) <= epsilon
    return float(np.count_nonzero(hits) / errors.size)


def doppler_to_velocity(doppler_hz, f0: float) -> np.ndarray:
    """Radial velocity (m/s) corresponding to a Doppler shift."""
    return np.asarray(doppler_hz) * SPEED_OF_LIGHT / f0


def delay_to_distance(delay_s) -> np.ndarray:
    """Propagation distance (m) corresponding to a delay."""
    return np.asarray(delay_s) * SPEED_OF_LIGHT
