"""Monte Carlo experiment runner.

Experiments are described by a flat ``key = value`` config file (keys are the
:class:`~upsense.scenario.ScenarioConfig` / :class:`ExperimentSpec` field
names, SI units).  ``run_experiment`` sweeps SNR points, runs seeded trials
(optionally across a process pool), writes one record row per (trial, path)
to ``trials.csv``, and aggregates accuracy/NMSE/CCDF/beam-gain curves into
CSV files.

Determinism: every trial's seed derives from (root seed, snr index, trial
index), results are written in canonical order, and floats are serialized
with ``repr`` -- output bytes depend only on the config, never on the worker
count.  Record files are append-only with a trailing ``#sha256=`` line, so an
interrupted run leaves a valid prefix that a later run resumes from.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import types
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import ddest, metrics, scenario
from .arrays import build_codebook
from .beams import BEAM_DESIGNS, bartlett
from .pipeline import TrialResult, run_trial
from .scenario import ConfigError, ScenarioConfig

TRIALS_SCHEMA = (
    "seed,snr_db,trial,path_idx,true_aoa_deg,true_doppler_hz,true_delay_s,"
    "est_aoa_deg,est_doppler_hz,est_delay_s,matched,aes_ms,dde_ms"
)
GAINS_SCHEMA = "seed,snr_db,trial,beam_design,gain_linear"

PRESETS: dict[str, dict] = {
    "fig4": {"snr_sweep_db": tuple(range(-10, 21, 2)), "trials": 100, "beam_design": "ns"},
    "fig5": {"snr_sweep_db": (2.0, 18.0), "trials": 200, "beam_design": "ns"},
    "fig6": {"snr_sweep_db": tuple(range(-10, 21, 2)), "trials": 200, "beam_design": "ns"},
    "fig7": {"snr_sweep_db": (-6.0, 18.0), "trials": 100, "beam_design": "ns"},
}
PRESETS["fig6-desk"] = PRESETS["fig6"]


@dataclass
class ExperimentSpec:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    snr_sweep_db: tuple = (0.0,)
    trials: int = 100
    beam_design: str = "ns"
    rho: float = 0.5
    preset: str | None = None
    output_dir: str = "results"
    auto_snapshots: bool = True   # p = 4 at snr >= 0 dB, 16 below

    def __post_init__(self) -> None:
        self.snr_sweep_db = tuple(float(s) for s in self.snr_sweep_db)
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_sweep_db:
            raise ConfigError("snr_sweep_db must be nonempty")
        if self.beam_design not in BEAM_DESIGNS:
            raise ConfigError(
                f"beam_design must be one of {BEAM_DESIGNS}, got {self.beam_design!r}"
            )
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must be in [0, 1], got {self.rho}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")

    def cfg_for_snr(self, snr_db: float) -> ScenarioConfig:
        cfg = self.scenario.with_snr(snr_db)
        if self.auto_snapshots:
            cfg = replace(cfg, p=4 if snr_db >= 0.0 else 16)
        return cfg


def apply_preset(spec: ExperimentSpec, name: str) -> ExperimentSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(spec, preset=name, **PRESETS[name])


# ---------------------------------------------------------------------------
# config file parsing (flat key = value)
# ---------------------------------------------------------------------------

_EXPERIMENT_KEYS = ("snr_sweep_db", "trials", "beam_design", "preset", "output_dir", "auto_snapshots")


def _field_types(cls) -> dict[str, type]:
    hints = typing.get_type_hints(cls)
    out = {}
    for f in dataclasses.fields(cls):
        t = hints[f.name]
        if isinstance(t, types.UnionType):
            t = next(a for a in typing.get_args(t) if a is not type(None))
        out[f.name] = t
    return out


def _parse_scalar(t: type, raw: str, key: str):
    raw = raw.strip()
    if t is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key!r}: expected a boolean, got {raw!r}")
    try:
        if t is int:
            return int(raw)
        if t is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: {exc}") from None
    return raw


def load_config(path: str) -> ExperimentSpec:
    """Parse and validate an experiment config file.

    Unknown keys are rejected with a diagnostic naming the key.
    """
    scen_types = _field_types(ScenarioConfig)
    scen_kwargs: dict = {}
    exp_kwargs: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key in scen_types:
                scen_kwargs[key] = _parse_scalar(scen_types[key], raw, key)
            elif key == "snr_sweep_db":
                exp_kwargs[key] = tuple(float(tok) for tok in raw.split(",") if tok.strip())
            elif key == "trials":
                exp_kwargs[key] = int(raw)
            elif key == "beam_design":
                design, rho = parse_beam_arg(raw)
                exp_kwargs["beam_design"] = design
                if rho is not None:
                    exp_kwargs["rho"] = rho
            elif key == "preset":
                exp_kwargs[key] = raw
            elif key == "output_dir":
                exp_kwargs[key] = raw
            elif key == "auto_snapshots":
                exp_kwargs[key] = _parse_scalar(bool, raw, key)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    try:
        scen = ScenarioConfig(**scen_kwargs)
        return ExperimentSpec(scenario=scen, **exp_kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def save_config(spec: ExperimentSpec, path: str) -> None:
    """Serialize a spec so that ``load_config`` round-trips it exactly."""
    lines = []
    for f in dataclasses.fields(ScenarioConfig):
        lines.append(f"{f.name} = {_fmt_cfg(getattr(spec.scenario, f.name))}")
    lines.append(f"snr_sweep_db = {','.join(repr(s) for s in spec.snr_sweep_db)}")
    lines.append(f"trials = {spec.trials}")
    if spec.beam_design == "hybrid":
        lines.append(f"beam_design = hybrid:{spec.rho!r}")
    else:
        lines.append(f"beam_design = {spec.beam_design}")
    if spec.preset is not None:
        lines.append(f"preset = {spec.preset}")
    lines.append(f"output_dir = {spec.output_dir}")
    lines.append(f"auto_snapshots = {str(spec.auto_snapshots).lower()}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt_cfg(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_beam_arg(arg: str) -> tuple[str, float | None]:
    """Parse a beam selector like ``ns`` or ``hybrid:0.35``."""
    if ":" in arg:
        name, _, rtok = arg.partition(":")
        if name != "hybrid":
            raise ConfigError(f"only hybrid takes a parameter, got {arg!r}")
        try:
            return "hybrid", float(rtok)
        except ValueError:
            raise ConfigError(f"bad hybrid energy factor in {arg!r}") from None
    if arg not in BEAM_DESIGNS:
        raise ConfigError(f"unknown beam design {arg!r}; expected one of {BEAM_DESIGNS}")
    return arg, None


# ---------------------------------------------------------------------------
# trial records
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    x = float(x)
    return repr(x) if np.isfinite(x) else "NA"


def _parse_f(tok: str) -> float:
    return float("nan") if tok == "NA" else float(tok)


@dataclass
class TrialRecord:
    """Truth, matched estimates, and timings for one trial (one row per path
    in the CSV schema)."""

    seed: int
    snr_db: float
    trial: int
    true_aoa_deg: list
    true_doppler_hz: list
    true_delay_s: list
    est_aoa_deg: list
    est_doppler_hz: list
    est_delay_s: list
    matched: list
    aes_ms: float
    dde_ms: float
    beam_gains: dict

    @property
    def n_paths(self) -> int:
        return len(self.true_aoa_deg)

    def rows(self) -> list[str]:
        out = []
        for i in range(self.n_paths):
            out.append(
                f"{self.seed},{_fmt(self.snr_db)},{self.trial},{i},"
                f"{_fmt(self.true_aoa_deg[i])},{_fmt(self.true_doppler_hz[i])},"
                f"{_fmt(self.true_delay_s[i])},{_fmt(self.est_aoa_deg[i])},"
                f"{_fmt(self.est_doppler_hz[i])},{_fmt(self.est_delay_s[i])},"
                f"{self.matched[i]},{_fmt(self.aes_ms)},{_fmt(self.dde_ms)}"
            )
        return out

    def gain_rows(self) -> list[str]:
        return [
            f"{self.seed},{_fmt(self.snr_db)},{self.trial},{d},{_fmt(g)}"
            for d, g in sorted(self.beam_gains.items())
        ]


def trial_seed_sequence(root_seed: int, snr_idx: int, trial_idx: int) -> np.random.SeedSequence:
    """Independent, reproducible child stream for one (SNR point, trial)."""
    return np.random.SeedSequence([int(root_seed), int(snr_idx), int(trial_idx)])


def record_from_result(
    res: TrialResult, seed: int, snr_db: float, trial: int
) -> TrialRecord:
    truth = res.paths
    n = len(truth)
    nan = float("nan")
    est_aoa = [nan] * n
    est_dopp = [nan] * n
    est_delay = [nan] * n
    matched = [0] * n

    if res.aoa_estimate is not None:
        for ti, ei in metrics.match_by_value(truth.aoas, res.aoa_estimate.angles):
            est_aoa[ti] = float(np.degrees(res.aoa_estimate.angles[ei]))
            matched[ti] = 1
    if res.dd_estimate is not None and res.dd_estimate.aoas.size:
        for ti, ei in metrics.match_by_value(truth.aoas[1:], res.dd_estimate.aoas):
            est_dopp[ti + 1] = float(res.dd_estimate.dopplers[ei])
            est_delay[ti + 1] = float(res.dd_estimate.rel_delays[ei])

    return TrialRecord(
        seed=seed,
        snr_db=snr_db,
        trial=trial,
        true_aoa_deg=list(np.degrees(truth.aoas)),
        true_doppler_hz=list(truth.dopplers),
        true_delay_s=list(truth.delays),
        est_aoa_deg=est_aoa,
        est_doppler_hz=est_dopp,
        est_delay_s=est_delay,
        matched=matched,
        aes_ms=res.aes_ms,
        dde_ms=res.dde_ms,
        beam_gains=dict(res.beam_gains),
    )


def _run_one(args) -> TrialRecord:
    spec, snr_idx, trial_idx = args
    snr = spec.snr_sweep_db[snr_idx]
    cfg = spec.cfg_for_snr(snr)
    ss = trial_seed_sequence(cfg.rng_seed, snr_idx, trial_idx)
    seed_int = int(ss.generate_state(1, dtype=np.uint64)[0])
    res = run_trial(cfg, ss, beam_design=spec.beam_design, rho=spec.rho)
    return record_from_result(res, seed_int, snr, trial_idx)


# ---------------------------------------------------------------------------
# record files: append-only + trailing checksum, resumable
# ---------------------------------------------------------------------------

def _checksum_line(body: str) -> str:
    return "#sha256=" + hashlib.sha256(body.encode("utf-8")).hexdigest()


class _RecordWriter:
    """Append-only CSV writer that finishes with a checksum trailer line.

    The file is rewritten from ``initial_rows`` on open (resume keeps the
    already-valid prefix), then rows append and flush as trials complete, so
    a crash leaves a parsable prefix.
    """

    def __init__(self, path: str, header: str, initial_rows: list[str]):
        self._hash = hashlib.sha256()
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._write(header + "\n")
        for row in initial_rows:
            self._write(row + "\n")
        self._fh.flush()

    def _write(self, text: str) -> None:
        self._fh.write(text)
        self._hash.update(text.encode("utf-8"))

    def append(self, rows: list[str]) -> None:
        for row in rows:
            self._write(row + "\n")
        self._fh.flush()

    def finalize(self) -> None:
        self._fh.write("#sha256=" + self._hash.hexdigest() + "\n")
        self._fh.close()


def _read_record_rows(path: str, header: str) -> tuple[list[str], bool]:
    """Return (data rows, file_complete).  Tolerates a truncated tail."""
    if not os.path.exists(path):
        return [], False
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0] != header:
        return [], False
    complete = False
    if lines[-1].startswith("#sha256="):
        body = "\n".join(lines[:-1]) + "\n"
        complete = lines[-1] == _checksum_line(body)
        lines = lines[:-1]
    return lines[1:], complete


def _records_from_rows(
    rows: list[str], gain_rows: list[str], n_paths: int
) -> list[TrialRecord]:
    """Rebuild records from persisted rows (complete trial groups only)."""
    recs = []
    gains_by_key: dict[tuple, dict] = {}
    for g in gain_rows:
        seed, snr, trial, design, gain = g.split(",")
        gains_by_key.setdefault((seed, snr, trial), {})[design] = _parse_f(gain)
    for start in range(0, len(rows) - n_paths + 1, n_paths):
        group = [rows[start + i].split(",") for i in range(n_paths)]
        head = group[0]
        if any(r[0] != head[0] or r[2] != head[2] for r in group):
            break
        recs.append(
            TrialRecord(
                seed=int(head[0]),
                snr_db=_parse_f(head[1]),
                trial=int(head[2]),
                true_aoa_deg=[_parse_f(r[4]) for r in group],
                true_doppler_hz=[_parse_f(r[5]) for r in group],
                true_delay_s=[_parse_f(r[6]) for r in group],
                est_aoa_deg=[_parse_f(r[7]) for r in group],
                est_doppler_hz=[_parse_f(r[8]) for r in group],
                est_delay_s=[_parse_f(r[9]) for r in group],
                matched=[int(r[10]) for r in group],
                aes_ms=_parse_f(head[11]),
                dde_ms=_parse_f(head[12]),
                beam_gains=gains_by_key.get((head[0], head[1], head[2]), {}),
            )
        )
    return recs


# ---------------------------------------------------------------------------
# aggregation and curve emission
# ---------------------------------------------------------------------------

def _pairs_for(records: list[TrialRecord]):
    """Matched (truth, estimate) value pairs per parameter.

    Misses keep a NaN estimate so downstream accuracy counts them as
    incorrect; NMSE drops them (the exclusion count is reported).
    """
    out = {name: {"true": [], "est": []} for name in ("aoa", "doppler", "delay")}
    n_failed = 0
    for r in records:
        if not any(r.matched):
            n_failed += 1
        for i in range(r.n_paths):
            out["aoa"]["true"].append(r.true_aoa_deg[i])
            out["aoa"]["est"].append(r.est_aoa_deg[i])
            if i == 0:
                continue  # the LoS path is the delay reference, not a target
            out["doppler"]["true"].append(r.true_doppler_hz[i])
            out["doppler"]["est"].append(r.est_doppler_hz[i])
            out["delay"]["true"].append(r.true_delay_s[i] - r.true_delay_s[0])
            out["delay"]["est"].append(r.est_delay_s[i])
    for d in out.values():
        d["true"] = np.asarray(d["true"], dtype=float)
        d["est"] = np.asarray(d["est"], dtype=float)
        d["err"] = np.abs(d["est"] - d["true"])
    return out, n_failed


def default_epsilons(cfg: ScenarioConfig) -> dict[str, float]:
    """Detection thresholds: 3 deg AoA, 1 permille of the detectable Doppler
    and delay spans."""
    return {
        "aoa": 3.0,
        "doppler": 0.001 * (2.0 * cfg.f_max),
        "delay": 0.001 * cfg.t_s,
    }


def aggregate(records: list[TrialRecord], cfg: ScenarioConfig) -> metrics.MetricReport:
    pairs, n_failed = _pairs_for(records)
    eps = default_epsilons(cfg)
    thresholds = _ccdf_thresholds(cfg)
    rep = metrics.MetricReport(n_trials=len(records), n_failed=n_failed)
    for name in ("aoa", "doppler", "delay"):
        d = pairs[name]
        if d["err"].size == 0:
            continue
        setattr(rep, f"accuracy_{name}", metrics.detection_accuracy(d["err"], eps[name]))
        ok = np.isfinite(d["est"])
        if ok.any():
            setattr(rep, f"nmse_{name}", metrics.nmse(d["true"][ok], d["est"][ok]))
        rep.ccdf_points[name] = list(
            zip(thresholds[name].tolist(), metrics.ccdf(d["err"], thresholds[name]).tolist())
        )
    return rep


def _ccdf_thresholds(cfg: ScenarioConfig) -> dict[str, np.ndarray]:
    frac = np.logspace(-5.0, 0.0, 26)
    return {
        "aoa": np.logspace(-3.0, 2.0, 26),            # degrees
        "doppler": frac * (2.0 * cfg.f_max),          # Hz
        "delay": frac * cfg.t_s,                      # seconds
    }


def emit_curves(
    records: list[TrialRecord], spec: ExperimentSpec, out_dir: str
) -> dict[str, str]:
    """Write nmse.csv, ccdf.csv, accuracy.csv, and gain.csv."""
    os.makedirs(out_dir, exist_ok=True)
    by_snr: dict[float, list[TrialRecord]] = {}
    for r in records:
        by_snr.setdefault(r.snr_db, []).append(r)
    snrs = sorted(by_snr)

    nmse_rows = ["snr_db,parameter,beam_design,nmse,n_pairs,n_missed"]
    acc_rows = ["snr_db,parameter,beam_design,epsilon,accuracy,n_detections"]
    ccdf_rows = ["snr_db,parameter,beam_design,threshold,probability"]
    gain_rows = ["snr_db,beam_design,p10_db,p25_db,p50_db,p75_db,p90_db"]

    design = spec.beam_design if spec.beam_design != "hybrid" else f"hybrid:{spec.rho!r}"
    for snr in snrs:
        recs = by_snr[snr]
        cfg = spec.cfg_for_snr(snr)
        eps = default_epsilons(cfg)
        thresholds = _ccdf_thresholds(cfg)
        pairs, _ = _pairs_for(recs)
        for name in ("aoa", "doppler", "delay"):
            d = pairs[name]
            err, ok = d["err"], np.isfinite(d["est"])
            nm = metrics.nmse(d["true"][ok], d["est"][ok]) if ok.any() else float("nan")
            nmse_rows.append(
                f"{_fmt(snr)},{name},{design},{_fmt(nm)},{int(ok.sum())},{int((~ok).sum())}"
            )
            acc = metrics.detection_accuracy(err, eps[name]) if err.size else float("nan")
            acc_rows.append(
                f"{_fmt(snr)},{name},{design},{_fmt(eps[name])},{_fmt(acc)},{err.size}"
            )
            probs = metrics.ccdf(err, thresholds[name]) if err.size else None
            for x, prob in zip(thresholds[name], probs if probs is not None else []):
                ccdf_rows.append(f"{_fmt(snr)},{name},{design},{_fmt(x)},{_fmt(prob)}")
        for d in BEAM_DESIGNS:
            gains = np.array([r.beam_gains.get(d, float("nan")) for r in recs])
            gains = gains[np.isfinite(gains) & (gains > 0)]
            if gains.size == 0:
                gain_rows.append(f"{_fmt(snr)},{d},NA,NA,NA,NA,NA")
                continue
            gdb = 10.0 * np.log10(gains)
            pcts = np.percentile(gdb, [10, 25, 50, 75, 90])
            gain_rows.append(
                f"{_fmt(snr)},{d}," + ",".join(_fmt(p) for p in pcts)
            )

    paths = {}
    for fname, rows in (
        ("nmse.csv", nmse_rows),
        ("ccdf.csv", ccdf_rows),
        ("accuracy.csv", acc_rows),
        ("gain.csv", gain_rows),
    ):
        p = os.path.join(out_dir, fname)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(rows) + "\n")
        paths[fname] = p
    return paths


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

def run_experiment(
    spec: ExperimentSpec, workers: int = 1, resume: bool = False, out_dir: str | None = None
) -> dict[str, str]:
    """Run the full sweep and write record + curve files.

    Returns a mapping of output file names to paths.  Per-trial estimation
    failures are recorded as missed paths and never abort the sweep.
    """
    out_dir = out_dir or spec.output_dir
    os.makedirs(out_dir, exist_ok=True)
    trials_path = os.path.join(out_dir, "trials.csv")
    gains_path = os.path.join(out_dir, "trials_gains.csv")
    n_paths = spec.scenario.n_paths

    done: list[TrialRecord] = []
    if resume:
        rows, _ = _read_record_rows(trials_path, TRIALS_SCHEMA)
        grows, _ = _read_record_rows(gains_path, GAINS_SCHEMA)
        done = _records_from_rows(rows, grows, n_paths)
        done = done[: len(spec.snr_sweep_db) * spec.trials]

    tasks = [
        (si, ti)
        for si in range(len(spec.snr_sweep_db))
        for ti in range(spec.trials)
    ]
    pending = tasks[len(done):]

    records = list(done)
    trial_writer = _RecordWriter(trials_path, TRIALS_SCHEMA, [r for rec in done for r in rec.rows()])
    gain_writer = _RecordWriter(gains_path, GAINS_SCHEMA, [r for rec in done for r in rec.gain_rows()])
    try:
        if workers > 1 and pending:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(_run_one, [(spec, si, ti) for si, ti in pending], chunksize=1)
                for rec in results:
                    records.append(rec)
                    trial_writer.append(rec.rows())
                    gain_writer.append(rec.gain_rows())
        else:
            for si, ti in pending:
                rec = _run_one((spec, si, ti))
                records.append(rec)
                trial_writer.append(rec.rows())
                gain_writer.append(rec.gain_rows())
    finally:
        trial_writer.finalize()
        gain_writer.finalize()

    paths = emit_curves(records, spec, out_dir)
    paths["trials.csv"] = trials_path
    paths["trials_gains.csv"] = gains_path
    return paths


# ---------------------------------------------------------------------------
# fast-vs-direct spectrum verification (the `oracle-check` CLI command)
# ---------------------------------------------------------------------------

def run_oracle_check(
    cfg: ScenarioConfig | None = None,
    n_snapshots: int = 10,
    grid: int = 64,
    seed: int = 7,
) -> list[float]:
    """Max relative deviation between the FFT-evaluated spectrum and the
    direct noise-subspace spectrum, per random noisy snapshot."""
    cfg = cfg or ScenarioConfig()
    devs = []
    for i in range(n_snapshots):
        ss = np.random.SeedSequence([seed, i])
        r_paths, r_clock, r_sym, r_noise = [np.random.default_rng(c) for c in ss.spawn(4)]
        paths = scenario.sample_scenario(cfg, r_paths)
        clock = scenario.sample_clock(cfg, cfg.n_r, r_clock)
        codebook = build_codebook(cfg.n_r)
        w_c = bartlett(paths.paths[0].aoa, cfg.n_r).weights
        symbols = scenario.qpsk_grid(cfg.n_r, cfg.m_c, cfg.k, r_sym)
        y_c, y_s = scenario.simulate_dd_outputs(
            cfg, paths, clock, codebook, w_c, symbols, cfg.noise_sigma(), r_noise
        )
        valid = ddest.ratio_valid_mask(y_c, cfg.ratio_floor_scale)
        zeta = np.where(valid, y_s / np.where(valid, y_c, 1.0), 0.0)
        snap = ddest.build_dd_snapshot(zeta, cfg, valid)

        cov = ddest.smoothed_covariance(snap)
        dec = ddest.subspace_decomposition(cov, cfg.n_paths)
        theta = paths.paths[1].aoa
        fast = ddest.fft2_music_spectrum(
            dec.signal_basis, theta, snap, codebook, grid, grid
        )
        f_grid = ddest.doppler_grid(snap, grid)
        tau_grid = ddest.delay_grid(snap, grid)
        direct = ddest.music3d_spectrum(
            snap, theta, f_grid, tau_grid, noise_basis=dec.noise_basis
        )
        devs.append(float(np.max(np.abs(fast - direct) / np.abs(direct))))
    return devs
