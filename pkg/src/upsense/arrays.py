"""Half-wavelength ULA steering vectors and the DFT beam-scanning codebook.

A hybrid receiver with two RF chains observes only two beamformed scalars per
timeslot.  Scanning a DFT codebook pair-by-pair over consecutive timeslots and
restacking the outputs recovers a full-dimension "virtual array" snapshot;
because the stacked codebook matrix is unitary, the stacked noise stays white
and the original element-space snapshot can be reconstructed exactly (up to
the common clock-offset phase).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def steering_vector(theta: float, n_r: int) -> np.ndarray:
    """Array response of an ``n_r``-element half-wavelength ULA.

    Parameters
    ----------
    theta : float
        Angle of arrival in radians, inside (-pi/2, pi/2).
    n_r : int
        Number of antennas.

    Returns
    -------
    ndarray
        Complex vector with entries ``exp(-1j*pi*n*sin(theta))`` for
        ``n = 0..n_r-1``.  Unnormalized: its Euclidean norm is ``sqrt(n_r)``.
    """
    return np.exp(-1j * np.pi * np.arange(n_r) * np.sin(theta))


def steering_matrix(thetas, n_r: int) -> np.ndarray:
    """Stack steering vectors column-wise: shape ``(n_r, len(thetas))``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    return np.exp(-1j * np.pi * np.outer(np.arange(n_r), np.sin(thetas)))


@dataclass(frozen=True)
class Codebook:
    """DFT scanning codebook: ``n_r`` unit-norm beams covering all of space.

    ``matrix`` holds the stacked beamforming matrix; column ``b`` is the
    normalized steering vector for spatial sine ``u_b = 2*b/n_r`` (aliased
    into [-1, 1)).  The matrix is unitary, so a full codebook sweep neither
    colors the noise nor loses spatial information.
    """

    matrix: np.ndarray

    @property
    def n_r(self) -> int:
        return self.matrix.shape[0]

    @property
    def beam_sines(self) -> np.ndarray:
        """Spatial sine covered by each beam, wrapped into [-1, 1)."""
        u = 2.0 * np.arange(self.n_r) / self.n_r
        return (u + 1.0) % 2.0 - 1.0

    @property
    def beam_angles(self) -> np.ndarray:
        """Beam pointing angles in radians (reporting convenience only)."""
        return np.arcsin(self.beam_sines)


def build_codebook(n_r: int) -> Codebook:
    """Build the normalized ``n_r``-point DFT codebook.

    Column ``b`` has entries ``exp(-2j*pi*n*b/n_r) / sqrt(n_r)``, i.e. a
    unit-norm steering vector at spatial sine ``2*b/n_r``.
    """
    if n_r < 2 or n_r % 2:
        raise ValueError(f"codebook needs an even antenna count >= 2, got {n_r}")
    n = np.arange(n_r)
    mat = np.exp(-2j * np.pi * np.outer(n, n) / n_r) / np.sqrt(n_r)
    return Codebook(matrix=mat)


def scanning_beam_pair(codebook: Codebook, m: int) -> np.ndarray:
    """Beamforming matrix for scan timeslot ``m``: codebook columns 2m, 2m+1.

    Returns an ``(n_r, 2)`` matrix; ``m`` ranges over ``0 .. n_r/2 - 1``.
    """
    if not 0 <= m < codebook.n_r // 2:
        raise IndexError(f"scan timeslot {m} outside 0..{codebook.n_r // 2 - 1}")
    return codebook.matrix[:, 2 * m : 2 * m + 2]


def reconstruct_virtual_array(snapshot: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Map a stacked beamspace snapshot back to the element domain.

    ``snapshot`` is the length-``n_r`` vector of restacked subarray outputs in
    codebook order.  Because the codebook is unitary, ``W_s @ snapshot``
    recovers the full-array received vector up to the common offset phase.
    """
    snapshot = np.asarray(snapshot)
    if snapshot.shape[-1] != codebook.n_r:
        raise ValueError(
            f"snapshot length {snapshot.shape[-1]} != array size {codebook.n_r}"
        )
    return snapshot @ codebook.matrix.T
