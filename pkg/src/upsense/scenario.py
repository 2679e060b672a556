"""Random multipath scenarios, clock asynchrony, and received-signal synthesis.

Everything here is a pure function of (config, seed): scenarios, per-frame
clock offsets, transmitted symbols, and noisy post-beamforming samples are all
bit-reproducible, which is what makes the Monte Carlo harness deterministic
under any worker count.

Signal model notes
------------------
The per-subcarrier channel coefficient of path ``l`` at time ``t`` is
``gain_l * exp(-2j*pi*delay_l*f_k) * exp(2j*pi*doppler_l*t)``.  Transmitter
and receiver clocks are asynchronous: every frame carries a multiplicative
unit-modulus offset term ``exp(2j*pi*cfo*t_frame) * exp(-2j*pi*to*f_k)``
common to all paths.  Offsets are piecewise constant per frame: the offset
phase is evaluated at the frame start and held for the frame's symbols (a
frame lasts a few microseconds, over which oscillator drift is negligible),
while Doppler phases evolve with the exact symbol time.  Frame-to-frame, both
offsets redraw freely, which is the adversarial regime the ratio-based
cancellation has to survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .arrays import steering_matrix

SPEED_OF_LIGHT = 299_792_458.0

_LOS_DOMINANCE_DB = 10.0 * math.log10(2.0)  # LoS power >= 2x any NLoS path


class ConfigError(ValueError):
    """Raised when a configuration violates its invariants."""


@dataclass(frozen=True)
class PathParams:
    """One propagation path."""

    aoa: float        # radians, in (-pi/2, pi/2)
    delay: float      # seconds, >= 0
    doppler: float    # Hz; exactly 0.0 for static paths
    gain: complex     # linear complex amplitude
    is_static: bool


@dataclass(frozen=True)
class PathSet:
    """Ordered multipath set; index 0 is the LoS path (static, first-arriving,
    and at least 3 dB above every other path)."""

    paths: tuple[PathParams, ...]
    l_s: int
    l_d: int

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def aoas(self) -> np.ndarray:
        return np.array([p.aoa for p in self.paths])

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths])

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.paths])

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths])

    @property
    def relative_delays(self) -> np.ndarray:
        """Delays relative to the LoS path (what the estimator can observe)."""
        return self.delays - self.paths[0].delay


@dataclass(frozen=True)
class ClockRealization:
    """Per-frame CFO/TO values; constant within a frame, free across frames."""

    cfo_per_frame: np.ndarray  # Hz
    to_per_frame: np.ndarray   # seconds

    @property
    def n_frames(self) -> int:
        return len(self.cfo_per_frame)

    def offset_phase(self, frame_idx: int, f_k: float, t_f: float) -> complex:
        """Combined unit-modulus CFO/TO term for one frame and subcarrier."""
        cfo = self.cfo_per_frame[frame_idx]
        to = self.to_per_frame[frame_idx]
        return np.exp(2j * np.pi * (cfo * frame_idx * t_f - to * f_k))


@dataclass(frozen=True)
class SymbolGrid:
    """Unit-modulus transmitted symbols indexed (frame, symbol, subcarrier)."""

    values: np.ndarray


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class ScenarioConfig:
    """Full experiment parameterization.

    Fields left at ``None`` are derived in ``__post_init__`` (``delta_f`` from
    bandwidth/``k``, symbol/frame periods from ``delta_f``, ambiguity limits
    ``tau_max``/``f_max`` from the numerology, offset ranges from ``delta_f``).
    All values are SI (Hz, s, dB).
    """

    n_r: int = 16               # receive antennas
    n_rf: int = 2               # analog subarrays (fixed at 2)
    f0: float = 26e9            # first-subcarrier frequency, Hz
    bandwidth: float = 100e6    # Hz
    k: int = 32                 # subcarriers
    delta_f: float | None = None    # subcarrier spacing, Hz (= bandwidth/k)
    t_s: float | None = None        # OFDM symbol period, s (= 1/delta_f)
    t_b: float | None = None        # beam-switching timeslot, s (= t_s)
    m_s: int | None = None          # scan timeslots per S-frame (= n_r/2)
    m_c: int = 32                   # symbols per C-frame
    m_f: int = 1024                 # symbols between frame starts
    t_f: float | None = None        # frame interval, s (= m_f * t_s)
    p: int = 4                      # S-frame snapshots for AoA estimation
    l_s: int = 2                    # static paths (including LoS)
    l_d: int = 3                    # dynamic paths
    tau_max: float | None = None    # max path delay, s (= t_s)
    f_max: float | None = None      # max |Doppler|, Hz (= 1/(2*t_f))
    snr_db: float = 10.0            # per-antenna SNR, referenced to LoS gain
    cfo_range: float | None = None  # CFO drawn from [-cfo_range, +cfo_range]
    to_range: float | None = None   # TO drawn from [0, to_range)
    g_theta: int = 2048             # AoA search grid (uniform in sin(theta))
    g_d: int = 1024                 # Doppler grid (power of two)
    g_tau: int = 1024               # delay grid (power of two)
    n_prime: int = 4096             # zero-padded FFT size for LoS detection
    rng_seed: int = 20260809
    min_aoa_sep_deg: float = 5.0
    clock_model: str = "per_frame"  # "per_frame" | "constant"
    ref_subcarrier: int = 0         # subcarrier feeding the beam designs
    ratio_floor_scale: float = 1e-3
    max_invalid_frac: float = 0.25
    refine_dde_aoa: bool = False    # re-search +/-1 deg around scan AoAs
    refine_peaks: bool = False      # parabolic sub-bin Doppler/delay refinement

    def __post_init__(self) -> None:
        if self.delta_f is None:
            self.delta_f = self.bandwidth / self.k
        if self.t_s is None:
            self.t_s = 1.0 / self.delta_f
        if self.t_b is None:
            self.t_b = self.t_s
        if self.m_s is None:
            self.m_s = self.n_r // 2
        if self.t_f is None:
            self.t_f = self.m_f * self.t_s
        if self.tau_max is None:
            self.tau_max = self.t_s
        if self.f_max is None:
            self.f_max = 1.0 / (2.0 * self.t_f)
        if self.cfo_range is None:
            self.cfo_range = self.delta_f / 2.0
        if self.to_range is None:
            self.to_range = 1.0 / self.delta_f
        self.validate()

    @property
    def n_paths(self) -> int:
        return self.l_s + self.l_d

    @property
    def k_tilde(self) -> int:
        return self.k // 2

    def subcarrier_freq(self, k) -> np.ndarray | float:
        return self.f0 + np.asarray(k) * self.delta_f

    def noise_sigma(self) -> float:
        """Per-antenna noise std for the configured SNR (unit LoS gain)."""
        return 10.0 ** (-self.snr_db / 20.0)

    def validate(self) -> None:
        def fail(msg: str) -> None:
            raise ConfigError(msg)

        if self.n_rf != 2:
            fail(f"n_rf must be 2, got {self.n_rf}")
        if self.n_r < 4 or self.n_r % 2:
            fail(f"n_r must be even and >= 4, got {self.n_r}")
        if self.m_s * 2 != self.n_r:
            fail(f"m_s must be n_r/2 (full scan per S-frame): m_s={self.m_s}, n_r={self.n_r}")
        if self.k < 2 or self.k % 2:
            fail(f"k must be even and >= 2, got {self.k}")
        if not math.isclose(self.delta_f * self.k, self.bandwidth, rel_tol=1e-9):
            fail(f"delta_f*k={self.delta_f * self.k} != bandwidth={self.bandwidth}")
        if not math.isclose(self.t_s * self.delta_f, 1.0, rel_tol=1e-9):
            fail(f"t_s={self.t_s} != 1/delta_f={1.0 / self.delta_f}")
        if not math.isclose(self.t_f, self.m_f * self.t_s, rel_tol=1e-9):
            fail(f"t_f={self.t_f} != m_f*t_s={self.m_f * self.t_s}")
        if self.f_max > 1.0 / (2.0 * self.t_f) * (1 + 1e-12):
            fail(f"f_max={self.f_max} exceeds 1/(2*t_f)={1.0 / (2.0 * self.t_f)}")
        if self.tau_max > self.t_s * (1 + 1e-12):
            fail(f"tau_max={self.tau_max} exceeds t_s={self.t_s}")
        if self.l_s < 1:
            fail("l_s must be >= 1 (the LoS path is static)")
        if self.l_d < 0:
            fail("l_d must be >= 0")
        if self.n_paths > 5:
            fail(f"l_s + l_d must be <= 5, got {self.n_paths}")
        if self.k < self.n_paths:
            fail(f"k={self.k} must be >= path count {self.n_paths}")
        if self.p < 1:
            fail("p must be >= 1")
        if self.m_c < 1:
            fail("m_c must be >= 1")
        if not (_is_pow2(self.g_d) and self.g_d >= self.n_r):
            fail(f"g_d must be a power of two >= n_r, got {self.g_d}")
        if not (_is_pow2(self.g_tau) and self.g_tau >= self.k_tilde):
            fail(f"g_tau must be a power of two >= k/2, got {self.g_tau}")
        if self.g_theta < 16:
            fail(f"g_theta too small: {self.g_theta}")
        if self.n_prime < 8 * self.n_r:
            fail(f"n_prime must be >= 8*n_r, got {self.n_prime}")
        if self.cfo_range < 0 or self.to_range < 0:
            fail("cfo_range and to_range must be >= 0")
        if self.clock_model not in ("per_frame", "constant"):
            fail(f"clock_model must be per_frame|constant, got {self.clock_model!r}")
        if not 0 <= self.ref_subcarrier < self.k:
            fail(f"ref_subcarrier out of range: {self.ref_subcarrier}")
        if not 0.0 < self.min_aoa_sep_deg < 180.0:
            fail(f"min_aoa_sep_deg out of range: {self.min_aoa_sep_deg}")

    def with_snr(self, snr_db: float) -> "ScenarioConfig":
        return replace(self, snr_db=snr_db)


def sample_scenario(cfg: ScenarioConfig, seed) -> PathSet:
    """Draw a random multipath scenario.

    AoAs are uniform on [-80, 80] degrees, redrawn until pairwise separation
    reaches ``cfg.min_aoa_sep_deg``; delays are uniform on (0, tau_max) with
    the LoS path forced to arrive first; dynamic Dopplers are uniform on
    (-f_max, f_max).  NLoS amplitudes are log-uniform between -10 dB and
    ~-3.01 dB of the LoS gain so that the LoS path carries at least twice any
    NLoS power.  Deterministic given ``seed``.
    """
    rng = np.random.default_rng(seed)
    n = cfg.n_paths

    min_sep = np.deg2rad(cfg.min_aoa_sep_deg)
    aoas = None
    for _ in range(100 * n):
        cand = np.deg2rad(rng.uniform(-80.0, 80.0, size=n))
        if n == 1 or np.min(np.diff(np.sort(cand))) >= min_sep:
            aoas = cand
            break
    if aoas is None:
        raise ConfigError(
            f"could not place {n} AoAs with {cfg.min_aoa_sep_deg} deg separation"
        )

    while True:
        delays = rng.uniform(0.0, cfg.tau_max, size=n)
        if np.all(delays > 0.0) and len(np.unique(delays)) == n:
            break
    i_min = int(np.argmin(delays))
    delays[[0, i_min]] = delays[[i_min, 0]]

    dopplers = np.zeros(n)
    if cfg.l_d > 0:
        while True:
            dyn = rng.uniform(-cfg.f_max, cfg.f_max, size=cfg.l_d)
            if np.all(dyn != 0.0) and len(np.unique(dyn)) == cfg.l_d:
                break
        dopplers[cfg.l_s :] = dyn

    phases = rng.uniform(0.0, 2.0 * np.pi, size=n)
    amps = np.ones(n)
    if n > 1:
        nlos_db = rng.uniform(-10.0, -_LOS_DOMINANCE_DB, size=n - 1)
        amps[1:] = 10.0 ** (nlos_db / 20.0)
    gains = amps * np.exp(1j * phases)

    paths = tuple(
        PathParams(
            aoa=float(aoas[i]),
            delay=float(delays[i]),
            doppler=float(dopplers[i]),
            gain=complex(gains[i]),
            is_static=i < cfg.l_s,
        )
        for i in range(n)
    )
    return PathSet(paths=paths, l_s=cfg.l_s, l_d=cfg.l_d)


def sample_clock(cfg: ScenarioConfig, n_frames: int, seed) -> ClockRealization:
    """Draw per-frame CFO/TO values (or one value repeated, for the
    ``constant`` clock model)."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    rng = np.random.default_rng(seed)
    draws = 1 if cfg.clock_model == "constant" else n_frames
    cfo = rng.uniform(-cfg.cfo_range, cfg.cfo_range, size=draws)
    to = rng.uniform(0.0, cfg.to_range, size=draws)
    if draws == 1:
        cfo = np.repeat(cfo, n_frames)
        to = np.repeat(to, n_frames)
    return ClockRealization(cfo_per_frame=cfo, to_per_frame=to)


def zero_clock(n_frames: int) -> ClockRealization:
    """Fully synchronous clock (useful as a control)."""
    return ClockRealization(np.zeros(n_frames), np.zeros(n_frames))


def channel_coeffs(cfg: ScenarioConfig, paths: PathSet, k: int, t: float) -> np.ndarray:
    """Offset-free channel coefficients of all paths at subcarrier ``k``,
    time ``t``: entry ``l`` is ``gain_l * exp(-2j*pi*delay_l*f_k)
    * exp(2j*pi*doppler_l*t)``."""
    if not 0 <= k < cfg.k:
        raise ValueError(f"subcarrier {k} out of range 0..{cfg.k - 1}")
    f_k = cfg.subcarrier_freq(k)
    return paths.gains * np.exp(
        2j * np.pi * (paths.dopplers * t - paths.delays * f_k)
    )


def receive(
    cfg: ScenarioConfig,
    paths: PathSet,
    clock: ClockRealization,
    w: np.ndarray,
    x: complex,
    k: int,
    frame_idx: int,
    symbol_idx: int,
    noise_sigma: float,
    rng: np.random.Generator,
    symbol_period: float | None = None,
) -> np.ndarray:
    """One post-beamforming received sample pair (reference implementation).

    ``w`` is the ``(n_r, 2)`` analog beamforming matrix with unit-norm
    columns.  The output is ``eta * w^H (A h) x + w^H n`` where ``eta`` is the
    frame's clock-offset phase, ``h`` the offset-free channel coefficients at
    the absolute symbol time, and ``n`` circular complex Gaussian noise with
    per-antenna variance ``noise_sigma**2``.

    The batched generators below are what the pipeline actually uses; this
    per-sample form exists as the contract oracle they are tested against.
    """
    w = np.asarray(w)
    norms = np.linalg.norm(w, axis=0)
    if not np.allclose(norms, 1.0, atol=1e-9):
        raise ValueError(f"beam columns must have unit norm, got norms {norms}")
    step = cfg.t_s if symbol_period is None else symbol_period
    t = frame_idx * cfg.t_f + symbol_idx * step
    h = channel_coeffs(cfg, paths, k, t)
    a = steering_matrix(paths.aoas, cfg.n_r)
    eta = clock.offset_phase(frame_idx, cfg.subcarrier_freq(k), cfg.t_f)
    y = eta * (w.conj().T @ (a @ h)) * x
    if noise_sigma > 0.0:
        z = rng.standard_normal((cfg.n_r, 2)) @ np.array([1.0, 1.0j])
        y = y + w.conj().T @ (noise_sigma / np.sqrt(2.0) * z)
    return y


def pilot_grid(n_frames: int, n_symbols: int, k: int) -> SymbolGrid:
    """All-ones pilot symbols for the AoA-scanning frames."""
    return SymbolGrid(values=np.ones((n_frames, n_symbols, k), dtype=complex))


def qpsk_grid(n_frames: int, n_symbols: int, k: int, rng: np.random.Generator) -> SymbolGrid:
    """Uniform random QPSK data symbols (unit modulus)."""
    sym = rng.integers(0, 4, size=(n_frames, n_symbols, k))
    return SymbolGrid(values=np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * sym)))


def _offset_phases(cfg: ScenarioConfig, clock: ClockRealization, frames: np.ndarray) -> np.ndarray:
    """Clock-offset phases, shape (len(frames), k)."""
    f_k = cfg.subcarrier_freq(np.arange(cfg.k))
    cfo = clock.cfo_per_frame[frames]
    to = clock.to_per_frame[frames]
    t_start = frames * cfg.t_f
    return np.exp(2j * np.pi * (cfo * t_start)[:, None]) * np.exp(
        -2j * np.pi * np.outer(to, f_k)
    )


def simulate_scan_outputs(
    cfg: ScenarioConfig,
    paths: PathSet,
    clock: ClockRealization,
    codebook,
    noise_sigma: float,
    rng: np.random.Generator,
    first_frame: int = 0,
) -> np.ndarray:
    """Simulate the beam-scanning stage: all S-frame subarray outputs.

    Returns a complex array of shape ``(p, k, m_s, 2)``: for every snapshot
    (S-frame), subcarrier, and scan timeslot, the two subarray outputs under
    the codebook beam pair of that timeslot.  Pilot symbols are all-ones.
    """
    a = steering_matrix(paths.aoas, cfg.n_r)                  # (n_r, L)
    g = codebook.matrix.conj().T @ a                          # (n_r, L) beamspace responses
    g_pairs = g.reshape(cfg.m_s, 2, len(paths))               # timeslot m uses rows 2m, 2m+1

    frames = first_frame + np.arange(cfg.p)
    eta = _offset_phases(cfg, clock, frames)                  # (p, k)

    f_k = cfg.subcarrier_freq(np.arange(cfg.k))
    delay_ph = np.exp(-2j * np.pi * np.outer(f_k, paths.delays))        # (k, L)
    t = frames[:, None] * cfg.t_f + np.arange(cfg.m_s)[None, :] * cfg.t_b
    dopp_ph = np.exp(2j * np.pi * t[..., None] * paths.dopplers)        # (p, m_s, L)

    h = (paths.gains[None, None, None, :] * delay_ph[None, :, None, :]
         * dopp_ph[:, None, :, :])                            # (p, k, m_s, L)
    sig = np.einsum("mcl,pkml->pkmc", g_pairs, h)             # (p, k, m_s, 2)
    sig *= eta[:, :, None, None]

    if noise_sigma > 0.0:
        z = rng.standard_normal((cfg.p, cfg.k, cfg.m_s, cfg.n_r, 2)) @ np.array([1.0, 1.0j])
        z *= noise_sigma / np.sqrt(2.0)
        w_pairs = codebook.matrix.reshape(cfg.n_r, cfg.m_s, 2)
        sig = sig + np.einsum("nmc,pkmn->pkmc", w_pairs.conj(), z)
    return sig


def simulate_dd_outputs(
    cfg: ScenarioConfig,
    paths: PathSet,
    clock: ClockRealization,
    codebook,
    w_c: np.ndarray,
    symbols: SymbolGrid,
    noise_sigma: float,
    rng: np.random.Generator,
    first_frame: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate one Doppler-delay snapshot: ``n_r`` consecutive C-frames.

    The fixed communication/reference beam ``w_c`` feeds one subarray; the
    other cycles the codebook, beam ``b`` during frame ``b``.  Returns
    ``(y_c, y_s)``, each of shape ``(k, n_r, m_c)`` indexed (subcarrier,
    frame, symbol).
    """
    w_c = np.asarray(w_c)
    n_fr = cfg.n_r
    a = steering_matrix(paths.aoas, cfg.n_r)
    c_resp = w_c.conj() @ a                                   # (L,)
    s_resp = codebook.matrix.conj().T @ a                     # (n_r frames, L)

    frames = first_frame + np.arange(n_fr)
    eta = _offset_phases(cfg, clock, frames)                  # (n_fr, k)

    f_k = cfg.subcarrier_freq(np.arange(cfg.k))
    delay_ph = np.exp(-2j * np.pi * np.outer(f_k, paths.delays))        # (k, L)
    t = frames[:, None] * cfg.t_f + np.arange(cfg.m_c)[None, :] * cfg.t_s
    dopp_ph = np.exp(2j * np.pi * t[..., None] * paths.dopplers)        # (n_fr, m_c, L)

    h = delay_ph[:, None, None, :] * dopp_ph[None, :, :, :] * paths.gains
    x = symbols.values.transpose(2, 0, 1)                     # (k, n_fr, m_c)
    common = eta.T[:, :, None] * x                            # (k, n_fr, m_c)

    y_c = np.einsum("l,kbml->kbm", c_resp, h) * common
    y_s = np.einsum("bl,kbml->kbm", s_resp, h) * common

    if noise_sigma > 0.0:
        z = rng.standard_normal((cfg.k, n_fr, cfg.m_c, cfg.n_r, 2)) @ np.array([1.0, 1.0j])
        z *= noise_sigma / np.sqrt(2.0)
        y_c = y_c + np.einsum("n,kbmn->kbm", w_c.conj(), z)
        y_s = y_s + np.einsum("bn,kbmn->kbm", codebook.matrix.conj().T, z)
    return y_c, y_s
