"""Reference/communication beam designs built from estimated AoAs.

Five designs with different gain-versus-interference-suppression tradeoffs:

* ``bartlett``  -- matched filter at the LoS angle; maximum LoS gain, no
  interference suppression.
* ``ns``        -- maximize received power inside the null space of the NLoS
  steering matrix; exact nulls on every NLoS angle.
* ``hybrid``    -- phase-aligned blend of the two above, weighted by an
  energy-split factor ``rho``.
* ``sinr``      -- generalized Rayleigh-quotient optimum, treating the
  coherent NLoS sum as interference (needs gain and noise-power estimates).
* ``mvdr``      -- minimum-variance distortionless response from the sample
  covariance (classical baseline).

All returned weight vectors have unit Euclidean norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .arrays import steering_matrix, steering_vector

BEAM_DESIGNS = ("bartlett", "ns", "hybrid", "sinr", "mvdr")


@dataclass(frozen=True)
class BeamVector:
    weights: np.ndarray
    design: str
    rho: float | None = None


@dataclass(frozen=True)
class BeamDesignInput:
    """Everything the designs consume, grouped for pipeline plumbing.

    ``sample_covariance`` is the element-space sample covariance (needed by
    the MVDR design only).
    """

    los_angle: float
    nlos_angles: np.ndarray
    virtual_snapshot: np.ndarray
    noise_power: float
    sample_covariance: np.ndarray | None = None


def beam_gain(weights: np.ndarray, theta: float) -> float:
    """Power response |w^H a(theta)|^2 of a beam toward one angle."""
    a = steering_vector(theta, len(weights))
    return float(np.abs(weights.conj() @ a) ** 2)


def rayleigh_quotient(weights: np.ndarray, r_num: np.ndarray, r_den: np.ndarray) -> float:
    """Generalized Rayleigh quotient w^H R_num w / w^H R_den w."""
    num = np.real(weights.conj() @ r_num @ weights)
    den = np.real(weights.conj() @ r_den @ weights)
    return float(num / den)


def _unit(w: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(w)
    if n == 0.0:
        raise ValueError("cannot normalize a zero beam vector")
    return w / n


def estimate_gains_ls(angles, virtual_snapshot: np.ndarray) -> np.ndarray:
    """Least-squares path gains: minimizer of ||r - A(angles) b||_2.

    ``angles`` must be distinct; the LoS angle should come first if the
    result feeds the SINR design.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    r = np.asarray(virtual_snapshot)
    a = steering_matrix(angles, len(r))
    sv = scipy.linalg.svdvals(a)
    if sv[-1] <= 1e-10 * sv[0]:
        raise ValueError("steering matrix is rank deficient (duplicate angles?)")
    gains, *_ = scipy.linalg.lstsq(a, r)
    return gains


def estimate_noise_power(cov_or_snapshots: np.ndarray, n_sources: int) -> float:
    """Noise power from the smallest covariance eigenvalues.

    Accepts either a Hermitian sample covariance or a matrix of snapshot
    columns (covariance formed internally).  Returns the mean of the
    ``dim - n_sources`` smallest eigenvalues.
    """
    x = np.asarray(cov_or_snapshots)
    if x.ndim != 2:
        raise ValueError("expected a 2-D covariance or snapshot matrix")
    if x.shape[0] == x.shape[1] and np.allclose(x, x.conj().T, atol=1e-10 * max(1.0, np.abs(x).max())):
        cov = x
    else:
        cov = x @ x.conj().T / x.shape[1]
    dim = cov.shape[0]
    if not 0 <= n_sources < dim:
        raise ValueError(f"need n_sources < {dim}, got {n_sources}")
    w = scipy.linalg.eigvalsh(cov)
    return float(np.mean(w[: dim - n_sources]))


def bartlett(los_angle: float, n_r: int) -> BeamVector:
    """Normalized steering vector at the LoS angle."""
    w = steering_vector(los_angle, n_r) / np.sqrt(n_r)
    return BeamVector(weights=w, design="bartlett")


def _nullspace_basis(nlos_angles: np.ndarray, n_r: int) -> np.ndarray:
    """Orthonormal basis of the complement of the NLoS steering span."""
    if len(nlos_angles) == 0:
        return np.eye(n_r, dtype=complex)
    if len(nlos_angles) >= n_r:
        raise ValueError("no null space: as many NLoS constraints as antennas")
    a_n = steering_matrix(nlos_angles, n_r)
    u, s, _ = scipy.linalg.svd(a_n)
    rank = int(np.sum(s > 1e-10 * s[0]))
    return u[:, rank:]


def nullspace_beam(nlos_angles, virtual_snapshot: np.ndarray) -> BeamVector:
    """Max received power subject to exact nulls on all NLoS angles.

    With ``Psi`` an orthonormal basis of the nulling subspace, the optimal
    weight is ``Psi (Psi^H r)`` normalized (the rank-one Rayleigh-quotient
    solution).  No NLoS angles reduces it to the matched filter on ``r``.
    """
    r = np.asarray(virtual_snapshot)
    psi = _nullspace_basis(np.atleast_1d(np.asarray(nlos_angles, dtype=float)), len(r))
    alpha = psi.conj().T @ r
    if np.linalg.norm(alpha) <= 1e-12 * np.linalg.norm(r):
        raise ValueError("snapshot has no component outside the NLoS span")
    return BeamVector(weights=psi @ _unit(alpha), design="ns")


def hybrid_beam(
    los_angle: float, nlos_angles, virtual_snapshot: np.ndarray, rho: float
) -> BeamVector:
    """Energy-split blend of the Bartlett and null-space beams.

    The null-space component is rotated so both beams respond in phase at the
    LoS angle before mixing with weights sqrt(rho), sqrt(1-rho), then the sum
    is renormalized.  rho=1 gives Bartlett; rho=0 gives the null-space beam
    up to a global phase.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    n_r = len(virtual_snapshot)
    w_bb = bartlett(los_angle, n_r).weights
    w_ns = nullspace_beam(nlos_angles, virtual_snapshot).weights
    a0 = steering_vector(los_angle, n_r)
    phi = np.angle(w_bb.conj() @ a0) - np.angle(w_ns.conj() @ a0)
    w = np.sqrt(rho) * w_bb + np.exp(-1j * phi) * np.sqrt(1.0 - rho) * w_ns
    return BeamVector(weights=_unit(w), design="hybrid", rho=rho)


def sinr_beam(
    los_angle: float, nlos_angles, gains, noise_power: float, n_r: int
) -> BeamVector:
    """SINR-optimal beam from estimated angles, gains, and noise power.

    Solves the generalized Rayleigh quotient max of the LoS power covariance
    against (coherent NLoS interference + white noise).  The interference
    covariance gets a tiny diagonal load so the noiseless degenerate case
    stays solvable.
    """
    gains = np.atleast_1d(np.asarray(gains))
    nlos_angles = np.atleast_1d(np.asarray(nlos_angles, dtype=float))
    if len(gains) != len(nlos_angles) + 1:
        raise ValueError("gains must hold [LoS, *NLoS] aligned with the angles")
    a0 = steering_vector(los_angle, n_r)
    r0 = (np.abs(gains[0]) ** 2) * np.outer(a0, a0.conj())
    if len(nlos_angles):
        v = steering_matrix(nlos_angles, n_r) @ gains[1:]
        r_n = np.outer(v, v.conj())
    else:
        r_n = np.zeros((n_r, n_r), dtype=complex)
    r_n = r_n + noise_power * np.eye(n_r)
    load = 1e-10 * max(np.trace(r_n).real, 1e-300) / n_r
    r_n = r_n + load * np.eye(n_r)
    _, vecs = scipy.linalg.eigh(r0, r_n)
    return BeamVector(weights=_unit(vecs[:, -1]), design="sinr")


def mvdr_beam(cov: np.ndarray, los_angle: float) -> BeamVector:
    """Classical MVDR weight R^{-1} a(theta_0), normalized."""
    cov = np.asarray(cov)
    n_r = cov.shape[0]
    a0 = steering_vector(los_angle, n_r)
    load = 1e-10 * max(np.trace(cov).real, 1e-300) / n_r
    w = scipy.linalg.solve(cov + load * np.eye(n_r), a0, assume_a="pos")
    return BeamVector(weights=_unit(w), design="mvdr")


def design_beam(
    design: str, inp: BeamDesignInput, n_r: int, rho: float = 0.5
) -> BeamVector:
    """Dispatch a named design on a :class:`BeamDesignInput`."""
    if design == "bartlett":
        return bartlett(inp.los_angle, n_r)
    if design == "ns":
        return nullspace_beam(inp.nlos_angles, inp.virtual_snapshot)
    if design == "hybrid":
        return hybrid_beam(inp.los_angle, inp.nlos_angles, inp.virtual_snapshot, rho)
    if design == "sinr":
        angles = np.concatenate([[inp.los_angle], inp.nlos_angles])
        gains = estimate_gains_ls(angles, inp.virtual_snapshot)
        return sinr_beam(inp.los_angle, inp.nlos_angles, gains, inp.noise_power, n_r)
    if design == "mvdr":
        if inp.sample_covariance is None:
            raise ValueError("mvdr needs a sample covariance in BeamDesignInput")
        return mvdr_beam(inp.sample_covariance, inp.los_angle)
    raise ValueError(f"unknown beam design {design!r}; expected one of {BEAM_DESIGNS}")
