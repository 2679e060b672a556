"""AoA estimation from beam-scan snapshots.

Pipeline: restack the per-timeslot subarray outputs into full-dimension
virtual-array snapshots, average per-subcarrier covariances across the band
(frequency smoothing, which restores full rank under coherent static
multipath), run MUSIC on the smoothed covariance, and finally pick the LoS
angle by a zero-padded FFT search of the reconstructed array response.

The common clock-offset phase multiplies each snapshot by a unit-modulus
scalar, so every covariance built here -- and therefore every angle estimate
-- is invariant to the clock realization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .arrays import Codebook, steering_matrix
from .scenario import ScenarioConfig


class EstimationFailure(RuntimeError):
    """Fewer spectrum peaks than paths; carries whatever peaks were found."""

    def __init__(self, msg: str, peaks: np.ndarray):
        super().__init__(msg)
        self.peaks = peaks


@dataclass(frozen=True)
class ScanSnapshots:
    """Virtual-array snapshots, shape (p, k, n_r): each (snapshot, subcarrier)
    slice is one restacked scan of the full codebook."""

    data: np.ndarray

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.data.shape[1]

    @property
    def n_r(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class SubspaceDecomposition:
    """Signal/noise eigenspaces of a Hermitian covariance."""

    signal_basis: np.ndarray   # (dim, n_sources)
    noise_basis: np.ndarray    # (dim, dim - n_sources)
    eigenvalues: np.ndarray    # descending


@dataclass(frozen=True)
class AoaEstimate:
    angles: np.ndarray   # sorted ascending, radians
    los_angle: float     # member of ``angles``

    @property
    def nlos_angles(self) -> np.ndarray:
        return self.angles[self.angles != self.los_angle]


def stack_snapshots(raw: np.ndarray, cfg: ScenarioConfig) -> ScanSnapshots:
    """Concatenate per-timeslot output pairs into length-``n_r`` snapshots.

    ``raw`` has shape (p, k, m_s, 2) in codebook scan order; timeslot ``m``
    contributes virtual elements ``2m`` and ``2m+1``.
    """
    raw = np.asarray(raw)
    if raw.ndim != 4 or raw.shape[2] * raw.shape[3] != cfg.n_r:
        raise ValueError(
            f"expected shape (p, k, {cfg.m_s}, 2) stacking to {cfg.n_r}, got {raw.shape}"
        )
    return ScanSnapshots(data=raw.reshape(raw.shape[0], raw.shape[1], cfg.n_r))


def smoothed_covariance(s: ScanSnapshots) -> np.ndarray:
    """Frequency-smoothed sample covariance: the per-(snapshot, subcarrier)
    outer products averaged over all of them, shape (n_r, n_r)."""
    d = s.data
    r = np.einsum("pkn,pkm->nm", d, d.conj())
    r /= d.shape[0] * d.shape[1]
    return r


def per_subcarrier_covariance(s: ScanSnapshots, k: int) -> np.ndarray:
    """Sample covariance of a single subcarrier (no smoothing)."""
    d = s.data[:, k, :]
    return np.einsum("pn,pm->nm", d, d.conj()) / d.shape[0]


def subspace_decomposition(cov: np.ndarray, n_sources: int) -> SubspaceDecomposition:
    """Split a Hermitian covariance into signal and noise eigenspaces."""
    dim = cov.shape[0]
    if not 0 < n_sources < dim:
        raise ValueError(f"need 0 < n_sources < {dim}, got {n_sources}")
    w, v = scipy.linalg.eigh(cov)
    w, v = w[::-1], v[:, ::-1]
    return SubspaceDecomposition(
        signal_basis=v[:, :n_sources],
        noise_basis=v[:, n_sources:],
        eigenvalues=w,
    )


def default_theta_grid(g_theta: int) -> np.ndarray:
    """Search angles uniform in sin(theta) over [-1, 1), in radians."""
    u = -1.0 + 2.0 * np.arange(g_theta) / g_theta
    return np.arcsin(u)


def music_spectrum(
    cov: np.ndarray,
    n_sources: int,
    codebook: Codebook,
    theta_grid: np.ndarray,
) -> np.ndarray:
    """MUSIC pseudo-spectrum over ``theta_grid``.

    Candidate vectors are the beamspace steering vectors ``W_s^H a(theta)``.
    Evaluated through the signal subspace -- the denominator is
    ``||p||^2 - ||p^H U_s||^2`` -- which equals the usual noise-subspace form
    because the full eigenbasis is unitary, but only needs ``n_sources``
    eigenvectors.
    """
    if n_sources >= codebook.n_r:
        raise ValueError(f"n_sources={n_sources} must be < n_r={codebook.n_r}")
    dec = subspace_decomposition(cov, n_sources)
    return _spectrum_from_signal_basis(dec.signal_basis, codebook, theta_grid)


def _candidate_matrix(codebook: Codebook, theta_grid: np.ndarray) -> np.ndarray:
    """Dictionary of beamspace candidate vectors, shape (grid, n_r)."""
    return (codebook.matrix.conj().T @ steering_matrix(theta_grid, codebook.n_r)).T


def _spectrum_denominator(
    signal_basis: np.ndarray, candidates: np.ndarray
) -> np.ndarray:
    proj = np.abs(candidates.conj() @ signal_basis) ** 2
    total = np.sum(np.abs(candidates) ** 2, axis=1)
    return total - proj.sum(axis=1)


def _spectrum_from_signal_basis(
    signal_basis: np.ndarray, codebook: Codebook, theta_grid: np.ndarray
) -> np.ndarray:
    cand = _candidate_matrix(codebook, theta_grid)
    return 1.0 / _spectrum_denominator(signal_basis, cand)


def _parabolic_refine(y_m1: float, y_0: float, y_p1: float) -> float:
    """Sub-bin offset of the extremum of a parabola through three samples."""
    denom = y_m1 - 2.0 * y_0 + y_p1
    if denom == 0.0:
        return 0.0
    delta = 0.5 * (y_m1 - y_p1) / denom
    return float(np.clip(delta, -0.5, 0.5))


def estimate_aoas(
    s: ScanSnapshots, n_sources: int, cfg: ScenarioConfig, codebook: Codebook
) -> np.ndarray:
    """Estimate all path AoAs from scan snapshots.

    Returns the ``n_sources`` strongest strict local maxima of the smoothed
    MUSIC spectrum, each refined by 3-point parabolic interpolation in the
    sin(theta) domain, sorted ascending.  Raises :class:`EstimationFailure`
    (carrying the peaks that were found) when the spectrum has fewer maxima.
    """
    cov = smoothed_covariance(s)
    dec = subspace_decomposition(cov, n_sources)
    theta_grid = default_theta_grid(cfg.g_theta)
    u_grid = np.sin(theta_grid)
    cand = _candidate_matrix(codebook, theta_grid)
    den = _spectrum_denominator(dec.signal_basis, cand)

    interior = np.arange(1, len(den) - 1)
    is_peak = (den[interior] < den[interior - 1]) & (den[interior] < den[interior + 1])
    peak_idx = interior[is_peak]
    order = np.argsort(den[peak_idx])
    peak_idx = peak_idx[order]

    du = u_grid[1] - u_grid[0]
    angles = []
    for idx in peak_idx[:n_sources]:
        delta = _parabolic_refine(den[idx - 1], den[idx], den[idx + 1])
        u = np.clip(u_grid[idx] + delta * du, -1.0, np.nextafter(1.0, 0.0))
        angles.append(float(np.arcsin(u)))
    angles = np.sort(np.array(angles))

    if len(angles) < n_sources:
        raise EstimationFailure(
            f"found {len(angles)} spectrum peaks, expected {n_sources}", peaks=angles
        )
    return angles


def detect_los(
    s: ScanSnapshots, angles: np.ndarray, cfg: ScenarioConfig, codebook: Codebook
) -> float:
    """Pick the LoS angle out of ``angles``.

    Reconstructs the virtual-array snapshots, evaluates the beamformed array
    response power on an ``n_prime``-point zero-padded FFT grid of spatial
    sines (power summed incoherently over snapshots and subcarriers), and
    returns the candidate angle closest to the argmax.  Ties break toward the
    smaller angle.
    """
    angles = np.sort(np.asarray(angles, dtype=float))
    if angles.size == 0:
        raise ValueError("angles must be nonempty")
    virt = s.data @ codebook.matrix.T                      # (p, k, n_r) element domain
    alt = (-1.0) ** np.arange(cfg.n_r)
    resp = np.fft.ifft(virt * alt, n=cfg.n_prime, axis=-1) * cfg.n_prime
    power = np.sum(np.abs(resp) ** 2, axis=(0, 1))
    g = int(np.argmax(power))
    u = 2.0 * g / cfg.n_prime - 1.0
    theta_s = float(np.arcsin(u))
    return float(angles[int(np.argmin(np.abs(angles - theta_s)))])
