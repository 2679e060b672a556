"""Single-trial pipeline: scenario -> scan AoAs -> reference beam -> ratios
-> joint Doppler/delay estimates.

One trial draws a scenario, a clock realization spanning the scanning
S-frames and the following C-frames, and the data symbols, all from
independent child streams of one seed; runs the AoA stage; designs the
requested reference beam from the estimated angles; then runs the
ratio-cancellation Doppler/delay stage.  ``use_ratio=False`` skips the
division (scanning-beam samples enter the snapshot raw), which is the
negative control showing that un-cancelled clock offsets wreck the
estimates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import aoa, beams, ddest, scenario
from .arrays import build_codebook, reconstruct_virtual_array
from .scenario import ClockRealization, PathSet, ScenarioConfig


@dataclass
class TrialResult:
    paths: PathSet
    failed: bool = False
    failure_stage: str | None = None
    aoa_estimate: aoa.AoaEstimate | None = None
    dd_estimate: ddest.DdEstimate | None = None
    beam_gains: dict[str, float] = field(default_factory=dict)
    aes_ms: float = float("nan")
    dde_ms: float = float("nan")


def _child_rngs(seed, n: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(c) for c in ss.spawn(n)]


def run_trial(
    cfg: ScenarioConfig,
    seed,
    beam_design: str = "ns",
    rho: float = 0.5,
    use_ratio: bool = True,
    paths: PathSet | None = None,
    clock: ClockRealization | None = None,
    noiseless: bool = False,
    skip_dde: bool = False,
) -> TrialResult:
    """Run one full sensing trial; deterministic given (cfg, seed).

    ``paths`` / ``clock`` may be injected to rerun the same scene under a
    different clock realization (the cancellation experiments do this).
    """
    rng_paths, rng_clock, rng_sym, rng_naes, rng_ndde = _child_rngs(seed, 5)
    if paths is None:
        paths = scenario.sample_scenario(cfg, rng_paths)
    n_frames = cfg.p + cfg.n_r
    if clock is None:
        clock = scenario.sample_clock(cfg, n_frames, rng_clock)
    codebook = build_codebook(cfg.n_r)
    sigma = 0.0 if noiseless else cfg.noise_sigma()
    n_paths = cfg.n_paths

    t0 = time.perf_counter()
    raw = scenario.simulate_scan_outputs(cfg, paths, clock, codebook, sigma, rng_naes)
    snaps = aoa.stack_snapshots(raw, cfg)
    result = TrialResult(paths=paths)
    try:
        angles = aoa.estimate_aoas(snaps, n_paths, cfg, codebook)
    except aoa.EstimationFailure:
        result.failed = True
        result.failure_stage = "aoa"
        result.aes_ms = (time.perf_counter() - t0) * 1e3
        return result
    los = aoa.detect_los(snaps, angles, cfg, codebook)
    result.aoa_estimate = aoa.AoaEstimate(angles=angles, los_angle=los)
    result.aes_ms = (time.perf_counter() - t0) * 1e3

    scan_cov = aoa.smoothed_covariance(snaps)
    sigma2_hat = beams.estimate_noise_power(scan_cov, n_paths)
    virt = reconstruct_virtual_array(snaps.data[0, cfg.ref_subcarrier], codebook)
    elem_cov = codebook.matrix @ scan_cov @ codebook.matrix.conj().T
    design_input = beams.BeamDesignInput(
        los_angle=los,
        nlos_angles=result.aoa_estimate.nlos_angles,
        virtual_snapshot=virt,
        noise_power=sigma2_hat,
        sample_covariance=elem_cov,
    )
    true_los_angle = paths.paths[0].aoa
    chosen = None
    for name in beams.BEAM_DESIGNS:
        try:
            bv = beams.design_beam(name, design_input, cfg.n_r, rho=rho)
        except ValueError:
            result.beam_gains[name] = float("nan")
            continue
        result.beam_gains[name] = beams.beam_gain(bv.weights, true_los_angle)
        if name == beam_design:
            chosen = bv
    if chosen is None:
        result.failed = True
        result.failure_stage = "beam"
        return result

    if skip_dde:
        return result

    t1 = time.perf_counter()
    symbols = scenario.qpsk_grid(cfg.n_r, cfg.m_c, cfg.k, rng_sym)
    y_c, y_s = scenario.simulate_dd_outputs(
        cfg, paths, clock, codebook, chosen.weights, symbols, sigma, rng_ndde,
        first_frame=cfg.p,
    )
    if use_ratio:
        valid = ddest.ratio_valid_mask(y_c, cfg.ratio_floor_scale)
        with np.errstate(divide="ignore", invalid="ignore"):
            zeta = np.where(valid, ddest.signal_ratio(y_s, np.where(valid, y_c, 1.0)), 0.0)
    else:
        zeta = y_s
        valid = None
    try:
        snap = ddest.build_dd_snapshot(zeta, cfg, valid)
    except ddest.SnapshotRejected:
        result.failed = True
        result.failure_stage = "dde"
        result.dde_ms = (time.perf_counter() - t1) * 1e3
        return result
    result.dd_estimate = ddest.estimate_doppler_delay(snap, result.aoa_estimate, cfg, codebook)
    result.dde_ms = (time.perf_counter() - t1) * 1e3
    return result
