"""Monte Carlo probability-of-detection sweeps and single-trial snapshots."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .scene import (
    AUTHORIZED,
    EAVESDROPPER,
    SceneConfig,
    VitalSignProfile,
    scene_steering,
    synthesize_trace,
)
from .selection import (
    SCHEMES,
    Mpv1Solution,
    Mpv2Solution,
    enumerate_phase_set,
    generate_schedule,
    solve_mpv1,
    solve_mpv2,
)
from .spectral import (
    DEFAULT_BAND_HZ,
    PeakReport,
    Spectrum,
    compensate_schedule_phase,
    extract_unwrapped_phase,
    pick_top_two_peaks,
    power_spectrum,
)

DEFAULT_MPV2_ACTIVE = 12
DEFAULT_MPV2_THETA_C_RAD = math.radians(41.0)

_Z95 = NormalDist().inv_cdf(0.975)


def derive_seeds(master_seed: int, *keys: int, n: int = 2) -> tuple[int, ...]:
    """Counter-style child seeds; independent of the order trials are run in."""
    ss = np.random.SeedSequence([int(master_seed), *map(int, keys)])
    return tuple(int(x) for x in ss.generate_state(n))


def wilson_interval(successes: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    if trials <= 0:
        return (0.0, 1.0)
    p = successes / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return (lo, hi)


def trial_success(report: PeakReport, v: VitalSignProfile, resolution_hz: float, tol_bins: int = 1) -> bool:
    """Top-two peaks equal {f_b, f_h} in either order, each within ``tol_bins`` bins."""
    tol = tol_bins * resolution_hz + 1e-9 * resolution_hz
    a, b = report.top_freqs_hz
    truth_b, truth_h = v.breath_freq_hz, v.heart_freq_hz
    straight = abs(a - truth_b) <= tol and abs(b - truth_h) <= tol
    swapped = abs(a - truth_h) <= tol and abs(b - truth_b) <= tol
    return bool(straight or swapped)


@dataclass(frozen=True)
class PodConfig:
    n_trials: int = 2000
    snr_grid_db: tuple[float, ...] = (-30.0, -20.0, -10.0, 0.0, 10.0, 20.0)
    schemes: tuple[str, ...] = SCHEMES
    match_tolerance_bins: int = 1
    master_seed: int = 0
    band_hz: tuple[float, float] = DEFAULT_BAND_HZ
    anneal_seed: int = 0
    mpv2_active_count: int = DEFAULT_MPV2_ACTIVE
    mpv2_theta_c_rad: float = DEFAULT_MPV2_THETA_C_RAD

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        grid = tuple(float(s) for s in self.snr_grid_db)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("snr_grid_db must be non-empty and strictly increasing")
        object.__setattr__(self, "snr_grid_db", grid)
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ValueError(f"unknown schemes {sorted(bad)}")
        if self.match_tolerance_bins < 0:
            raise ValueError("match_tolerance_bins must be >= 0")


@dataclass(frozen=True)
class PodPoint:
    scheme: str
    snr_db: float
    successes: int
    trials: int

    @property
    def pod(self) -> float:
        return self.successes / self.trials

    @property
    def wilson_ci95(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)


@dataclass
class PodCurve:
    points: list[PodPoint] = field(default_factory=list)

    def point(self, scheme: str, snr_db: float) -> PodPoint:
        for p in self.points:
            if p.scheme == scheme and p.snr_db == float(snr_db):
                return p
        raise KeyError((scheme, snr_db))

    def pod(self, scheme: str, snr_db: float) -> float:
        return self.point(scheme, snr_db).pod

    def rows(self) -> list[tuple]:
        out = []
        for p in self.points:
            lo, hi = p.wilson_ci95
            out.append((p.scheme, p.snr_db, p.trials, p.successes, p.pod, lo, hi))
        return out


def solve_schemes(scene: SceneConfig, cfg: PodConfig) -> dict[str, Mpv1Solution | Mpv2Solution | None]:
    """Design every requested scheme once; trials reuse the designs."""
    out: dict[str, Mpv1Solution | Mpv2Solution | None] = {}
    for scheme in cfg.schemes:
        if scheme == "conventional":
            out[scheme] = None
        elif scheme == "mpv1":
            out[scheme] = solve_mpv1(scene.geometry, scene.theta0_rad, rng_seed=cfg.anneal_seed)
        else:
            ps = enumerate_phase_set(scene.geometry, scene.theta0_rad, cfg.mpv2_theta_c_rad,
                                     cfg.mpv2_active_count, sampling=True)
            out[scheme] = solve_mpv2(ps)
    return out


def _run_trials(args) -> int:
    scene, v, scheme, solution, cfg, scheme_idx, snr_idx, trials = args
    hits = 0
    res = scene.sample_rate_hz / scene.n_samples
    for trial in trials:
        sched_seed, noise_seed = derive_seeds(cfg.master_seed, scheme_idx, snr_idx, trial)
        schedule = generate_schedule(scheme, scene.geometry, scene.theta0_rad, solution,
                                     scene.n_samples, sched_seed)
        trace = synthesize_trace(scene, v, schedule, EAVESDROPPER, noise_seed)
        phase = extract_unwrapped_phase(trace)
        report = pick_top_two_peaks(power_spectrum(phase, scene.sample_rate_hz), cfg.band_hz)
        hits += trial_success(report, v, res, cfg.match_tolerance_bins)
    return hits


def run_pod_sweep(
    scene: SceneConfig,
    v: VitalSignProfile,
    cfg: PodConfig,
    *,
    solutions: dict | None = None,
    workers: int = 1,
    chunk_size: int = 250,
) -> PodCurve:
    """Eavesdropper POD for every (scheme, SNR) cell of the sweep.

    Each trial draws its schedule and noise from seeds derived from
    ``(master_seed, scheme, snr index, trial index)``, so results do not
    depend on ``workers`` or chunking.
    """
    solutions = solutions if solutions is not None else solve_schemes(scene, cfg)
    jobs, cells = [], []
    for scheme in cfg.schemes:
        scheme_idx = SCHEMES.index(scheme)
        for snr_idx, snr in enumerate(cfg.snr_grid_db):
            cell_scene = scene.with_snr(snr)
            for start in range(0, cfg.n_trials, chunk_size):
                trials = range(start, min(start + chunk_size, cfg.n_trials))
                jobs.append((cell_scene, v, scheme, solutions[scheme], cfg, scheme_idx, snr_idx, trials))
                cells.append((scheme, snr))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            hits = list(pool.map(_run_trials, jobs))
    else:
        hits = [_run_trials(j) for j in jobs]
    totals: dict[tuple[str, float], int] = {}
    for cell, h in zip(cells, hits):
        totals[cell] = totals.get(cell, 0) + h
    curve = PodCurve()
    for scheme in cfg.schemes:
        for snr in cfg.snr_grid_db:
            curve.points.append(PodPoint(scheme, snr, totals[(scheme, snr)], cfg.n_trials))
    return curve


def run_spectrum_snapshot(
    scene: SceneConfig,
    v: VitalSignProfile,
    scheme: str,
    receiver: str = EAVESDROPPER,
    seed: int = 0,
    *,
    solution: Mpv1Solution | Mpv2Solution | None = None,
    band_hz=DEFAULT_BAND_HZ,
    theta_c_rad: float | None = None,
) -> tuple[Spectrum, PeakReport, np.ndarray]:
    """One trace through the receiver's pipeline; the authorized side compensates."""
    if scheme != "conventional" and solution is None:
        raise ValueError(f"scheme {scheme!r} needs a precomputed solution")
    sched_seed, noise_seed = derive_seeds(seed, SCHEMES.index(scheme))
    schedule = generate_schedule(scheme, scene.geometry, scene.theta0_rad, solution,
                                 scene.n_samples, sched_seed, theta_c_rad=theta_c_rad)
    trace = synthesize_trace(scene, v, schedule, receiver, noise_seed)
    if receiver == AUTHORIZED:
        trace = compensate_schedule_phase(trace, schedule, scene_steering(scene, schedule))
    phase = extract_unwrapped_phase(trace)
    spec = power_spectrum(phase, scene.sample_rate_hz)
    return spec, pick_top_two_peaks(spec, band_hz), phase


def write_pod_table(curve: PodCurve, path) -> None:
    with open(path, "w") as fh:
        fh.write("scheme,snr_db,trials,successes,pod,ci_low,ci_high\n")
        for scheme, snr, trials, hits, pod, lo, hi in curve.rows():
            fh.write(f"{scheme},{float(snr)!r},{trials},{hits},{float(pod)!r},{float(lo)!r},{float(hi)!r}\n")
