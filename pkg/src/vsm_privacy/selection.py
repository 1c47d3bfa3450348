"""Phase sets of antenna subsets and the two phase-variance maximizing schemes.

MPV-I picks the number of active antennas and the steering angle that
maximize the variance of the phase under a uniform draw over all subsets
(simulated annealing). MPV-II keeps both fixed and reallocates the draw
probabilities, whose optimum is a fair coin between the two extreme phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence
import logging

import numpy as np

from .array_model import (
    EPS_AMP,
    ActivationVector,
    ArrayGeometry,
    masked_sums,
    principal_angle,
    steering_vector,
)

logger = logging.getLogger(__name__)

ENUMERATION_CAP = 1_000_000
SAMPLED_SUBSETS = 100_000

SCHEMES = ("conventional", "mpv1", "mpv2")


class EnumerationTooLargeError(ValueError):
    """binomial(N, L) exceeds the enumeration cap; pass ``sampling=True``."""


@lru_cache(maxsize=64)
def _subset_masks(n: int, active_count: int) -> tuple[np.ndarray, np.ndarray]:
    """All L-subsets of N antennas as (bool masks, int bitmasks), ascending bitmask."""
    idx = np.array(list(combinations(range(n), active_count)), dtype=np.int64)
    masks = np.zeros((idx.shape[0], n), dtype=bool)
    np.put_along_axis(masks, idx, True, axis=1)
    bitmasks = (masks.astype(np.int64) << np.arange(n, dtype=np.int64)).sum(axis=1)
    order = np.argsort(bitmasks, kind="stable")
    masks, bitmasks = masks[order], bitmasks[order]
    masks.setflags(write=False)
    bitmasks.setflags(write=False)
    return masks, bitmasks


def _sampled_masks(n: int, active_count: int, size: int, rng_seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(rng_seed)
    seen: set[int] = set()
    total = math.comb(n, active_count)
    size = min(size, total)
    while len(seen) < size:
        batch = np.argsort(rng.random((2 * (size - len(seen)) + 16, n)), axis=1)[:, :active_count]
        for row in batch:
            seen.add(int(sum(1 << int(k) for k in row)))
            if len(seen) == size:
                break
    bitmasks = np.array(sorted(seen), dtype=np.int64)
    masks = ((bitmasks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)
    return masks, bitmasks


@dataclass(frozen=True)
class PhaseSet:
    """Reachable array phases for one (theta0, theta_c, L), one row per subset."""

    masks: np.ndarray  # (M, N) bool
    bitmasks: np.ndarray  # (M,) int
    phases: np.ndarray  # (M,) principal values
    amplitudes: np.ndarray  # (M,)
    theta0_rad: float
    theta_c_rad: float
    active_count: int
    n_degenerate: int = 0
    sampled: bool = False

    @property
    def m(self) -> int:
        return int(self.phases.shape[0])

    @property
    def n_antennas(self) -> int:
        return int(self.masks.shape[1])

    def config(self, i: int) -> ActivationVector:
        return ActivationVector(tuple(self.masks[i]))

    @property
    def entries(self) -> list[tuple[ActivationVector, float]]:
        return [(self.config(i), float(self.phases[i])) for i in range(self.m)]


@lru_cache(maxsize=256)
def _phase_set_cached(geometry, theta0_rad, theta_c_rad, active_count, sampling, sample_seed):
    n = geometry.n_antennas
    if not 1 <= active_count <= n - 1:
        raise ValueError(f"active_count must lie in [1, {n - 1}], got {active_count}")
    total = math.comb(n, active_count)
    if total > ENUMERATION_CAP:
        if not sampling:
            raise EnumerationTooLargeError(
                f"binomial({n}, {active_count}) = {total} exceeds the cap of {ENUMERATION_CAP}; "
                "call with sampling=True to estimate the phase set from random subsets"
            )
        masks, bitmasks = _sampled_masks(n, active_count, SAMPLED_SUBSETS, sample_seed)
        sampled = True
    else:
        masks, bitmasks = _subset_masks(n, active_count)
        sampled = False
    z = masked_sums(masks, steering_vector(geometry, theta0_rad, theta_c_rad))
    amps = np.abs(z)
    keep = amps >= EPS_AMP
    phases = principal_angle(np.angle(z[keep]))
    arrays = [masks[keep], bitmasks[keep], np.atleast_1d(phases), amps[keep]]
    for a in arrays:
        a.setflags(write=False)
    return PhaseSet(*arrays, theta0_rad=theta0_rad, theta_c_rad=theta_c_rad,
                    active_count=active_count, n_degenerate=int((~keep).sum()), sampled=sampled)


def enumerate_phase_set(
    geometry: ArrayGeometry,
    theta0_rad: float,
    theta_c_rad: float,
    active_count: int,
    *,
    sampling: bool = False,
    sample_seed: int = 0,
) -> PhaseSet:
    """Phase of every non-degenerate ``active_count``-subset, ascending bitmask order.

    Above the enumeration cap a ``sampling=True`` call estimates the set from
    ``SAMPLED_SUBSETS`` distinct random subsets drawn with ``sample_seed``.
    """
    if math.comb(geometry.n_antennas, int(active_count)) <= ENUMERATION_CAP:
        sampling, sample_seed = False, 0
    return _phase_set_cached(geometry, float(theta0_rad), float(theta_c_rad), int(active_count),
                             bool(sampling), int(sample_seed))


def uniform_phase_variance(ps: PhaseSet) -> float:
    if ps.m < 1:
        raise ValueError("phase set is empty")
    return float(np.var(ps.phases))


@dataclass(frozen=True)
class ProbabilityAllocation:
    """Sparse probability weights over phase-set indices."""

    indices: tuple[int, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.probabilities) or not self.indices:
            raise ValueError("indices and probabilities must be non-empty and of equal length")
        p = np.asarray(self.probabilities, dtype=float)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")

    @classmethod
    def uniform(cls, m: int) -> "ProbabilityAllocation":
        p = np.full(m, 1.0 / m)
        p[-1] = 1.0 - p[:-1].sum()
        return cls(tuple(range(m)), tuple(p))

    @property
    def weights(self) -> list[tuple[int, float]]:
        return list(zip(self.indices, self.probabilities))


def _two_moment_variance(p: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """sum p phi^2 - (sum p phi)^2 for each row of ``p``."""
    mean = p @ phases
    return p @ (phases * phases) - mean * mean


def allocation_variance(ps: PhaseSet, alloc: ProbabilityAllocation) -> float:
    idx = np.asarray(alloc.indices)
    if idx.min() < 0 or idx.max() >= ps.m:
        raise IndexError(f"allocation index out of range for a phase set of size {ps.m}")
    return float(_two_moment_variance(np.asarray(alloc.probabilities), ps.phases[idx]))


@dataclass(frozen=True)
class Mpv2Solution:
    config_low: ActivationVector
    config_high: ActivationVector
    index_low: int
    index_high: int
    phi_min_rad: float
    phi_max_rad: float
    theta_c_rad: float
    active_count: int

    @property
    def variance(self) -> float:
        return 0.25 * (self.phi_max_rad - self.phi_min_rad) ** 2

    @property
    def allocation(self) -> ProbabilityAllocation:
        if self.index_low == self.index_high:
            return ProbabilityAllocation((self.index_low,), (1.0,))
        return ProbabilityAllocation((self.index_low, self.index_high), (0.5, 0.5))


def solve_mpv2(ps: PhaseSet) -> Mpv2Solution:
    """Fair two-point draw on the extreme phases; ties go to the lowest bitmask."""
    if ps.m < 1:
        raise ValueError("phase set is empty")
    # argmin/argmax return the first hit, and rows are in ascending bitmask order
    lo = int(np.argmin(ps.phases))
    hi = int(np.argmax(ps.phases))
    return Mpv2Solution(
        config_low=ps.config(lo),
        config_high=ps.config(hi),
        index_low=lo,
        index_high=hi,
        phi_min_rad=float(ps.phases[lo]),
        phi_max_rad=float(ps.phases[hi]),
        theta_c_rad=ps.theta_c_rad,
        active_count=ps.active_count,
    )


def mpv2_oracle(
    ps: PhaseSet,
    n_random_allocations: int,
    rng_seed: int = 0,
    *,
    max_support: int = 64,
    n_extreme: int = 64,
    chunk: int = 4096,
) -> float:
    """Largest two-moment variance found by searching the probability simplex.

    Candidates are every point mass, fair and skewed two-point draws among the
    ``n_extreme`` lowest and highest phases, and ``n_random_allocations`` flat
    Dirichlet draws. When the set is larger than ``max_support`` each random
    draw lives on a random support of 2..``max_support`` indices, so the
    sampling reaches the sparse corners of the simplex.

    This never uses the closed-form extremes; it only evaluates the variance
    of explicit allocations.
    """
    if n_random_allocations < 1:
        raise ValueError("n_random_allocations must be >= 1")
    phases = np.asarray(ps.phases, dtype=float)
    m = phases.shape[0]
    if m == 0:
        raise ValueError("phase set is empty")
    best = 0.0  # any point mass has zero variance

    order = np.argsort(phases, kind="stable")
    cand = np.unique(np.concatenate([order[:n_extreme], order[-n_extreme:]]))
    a, b = np.meshgrid(cand, cand, indexing="ij")
    gap = (phases[a] - phases[b]).ravel()
    for q in (0.5, 0.25, 0.1, 0.01):
        best = max(best, float(np.max(q * (1 - q) * gap * gap)))

    rng = np.random.default_rng(rng_seed)
    remaining = n_random_allocations
    while remaining > 0:
        k = min(chunk, remaining)
        remaining -= k
        if m <= max_support:
            p = rng.dirichlet(np.ones(m), size=k)
            best = max(best, float(np.max(_two_moment_variance(p, phases))))
            continue
        sizes = rng.integers(2, max_support + 1, size=k)
        # repeated indices just merge their weights, still a valid allocation
        support = rng.integers(0, m, size=(k, max_support))
        w = rng.exponential(size=(k, max_support))
        w[np.arange(max_support)[None, :] >= sizes[:, None]] = 0.0
        w /= w.sum(axis=1, keepdims=True)
        sub = phases[support]
        mean = np.einsum("ij,ij->i", w, sub)
        var = np.einsum("ij,ij->i", w, sub * sub) - mean * mean
        best = max(best, float(np.max(var)))
    return best


@dataclass(frozen=True)
class AnnealParams:
    iterations: int = 5000
    cooling: float = 0.999
    n_probes: int = 50
    p_change_l: float = 0.3
    sigma_start_deg: float = 60.0
    sigma_end_deg: float = 0.05

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling must lie in (0, 1)")
        if self.n_probes < 1:
            raise ValueError("n_probes must be >= 1")


@dataclass(frozen=True)
class Mpv1Solution:
    active_count: int
    theta_c_rad: float
    achieved_variance: float
    anneal_trace: tuple[tuple[int, float], ...] = field(repr=False, default=())


def _reflect_angle(x: float) -> float:
    x = math.fmod(abs(x), 2.0 * math.pi)
    return 2.0 * math.pi - x if x > math.pi else x


def solve_mpv1(
    geometry: ArrayGeometry,
    theta0_rad: float,
    anneal: AnnealParams | None = None,
    rng_seed: int = 0,
) -> Mpv1Solution:
    """Simulated annealing over (L, theta_c) of the uniform-draw phase variance.

    Returns the best state visited. The chain starts from the best of the
    random probes whose objective spread sets the initial temperature.
    """
    anneal = anneal or AnnealParams()
    n = geometry.n_antennas
    rng = np.random.default_rng(rng_seed)

    def objective(l: int, thc: float) -> float:
        ps = enumerate_phase_set(geometry, theta0_rad, thc, l, sampling=True)
        return uniform_phase_variance(ps) if ps.m else 0.0

    probes = [(int(rng.integers(1, n)), float(rng.uniform(0.0, math.pi))) for _ in range(anneal.n_probes)]
    values = [objective(l, t) for l, t in probes]
    temp = float(np.var(values)) or 1e-6
    start = int(np.argmax(values))
    cur_l, cur_t = probes[start]
    cur_v = values[start]
    best = (cur_v, cur_l, cur_t)

    sig0, sig1 = math.radians(anneal.sigma_start_deg), math.radians(anneal.sigma_end_deg)
    trace = []
    for it in range(anneal.iterations):
        frac = it / max(anneal.iterations - 1, 1)
        sigma = sig0 * (sig1 / sig0) ** frac
        # either step L at fixed angle or jitter the angle at fixed L
        new_l, new_t = cur_l, cur_t
        if rng.random() < anneal.p_change_l:
            new_l = min(max(cur_l + (1 if rng.random() < 0.5 else -1), 1), n - 1)
        else:
            new_t = _reflect_angle(cur_t + sigma * rng.standard_normal())
        new_v = objective(new_l, new_t)
        delta = new_v - cur_v
        if delta >= 0 or rng.random() < math.exp(delta / temp):
            cur_l, cur_t, cur_v = new_l, new_t, new_v
            if cur_v > best[0]:
                best = (cur_v, cur_l, cur_t)
        trace.append((it, cur_v))
        temp *= anneal.cooling
    logger.debug("mpv1 best variance %.6f at L=%d theta_c=%.4f", *best)
    return Mpv1Solution(active_count=best[1], theta_c_rad=best[2], achieved_variance=best[0],
                        anneal_trace=tuple(trace))


@dataclass(frozen=True)
class SelectionSchedule:
    """One activation vector per receiver sample."""

    scheme: str
    masks: np.ndarray  # (S, N) bool
    theta0_rad: float
    theta_c_rad: float
    rng_seed: int
    active_count: int

    def __len__(self) -> int:
        return int(self.masks.shape[0])

    @property
    def n_antennas(self) -> int:
        return int(self.masks.shape[1])

    @property
    def per_sample(self) -> list[ActivationVector]:
        return [ActivationVector(tuple(row)) for row in self.masks]


def generate_schedule(
    scheme: str,
    geometry: ArrayGeometry,
    theta0_rad: float,
    solution: Mpv1Solution | Mpv2Solution | None,
    n_samples: int,
    rng_seed: int = 0,
    *,
    theta_c_rad: float | None = None,
) -> SelectionSchedule:
    """Sample an i.i.d. activation sequence for the given scheme.

    ``theta_c_rad`` is only read for the conventional array (default: the
    user direction); MPV schemes take it from their solution.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = geometry.n_antennas
    rng = np.random.default_rng(rng_seed)
    if scheme == "conventional":
        thc = theta0_rad if theta_c_rad is None else theta_c_rad
        masks = np.ones((n_samples, n), dtype=bool)
        l = n
    elif scheme == "mpv1":
        if not isinstance(solution, Mpv1Solution):
            raise TypeError("mpv1 schedule needs an Mpv1Solution")
        thc, l = solution.theta_c_rad, solution.active_count
        ps = enumerate_phase_set(geometry, theta0_rad, thc, l, sampling=True)
        if ps.m == 0:
            raise ValueError("every configuration is degenerate at this steering angle")
        masks = ps.masks[rng.integers(0, ps.m, size=n_samples)]
    elif scheme == "mpv2":
        if not isinstance(solution, Mpv2Solution):
            raise TypeError("mpv2 schedule needs an Mpv2Solution")
        thc, l = solution.theta_c_rad, solution.active_count
        pair = np.stack([solution.config_low.as_array(), solution.config_high.as_array()])
        masks = pair[rng.integers(0, 2, size=n_samples)]
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    masks.setflags(write=False)
    return SelectionSchedule(scheme, masks, float(theta0_rad), float(thc), int(rng_seed), int(l))


def write_schedule(schedule: SelectionSchedule, path) -> None:
    lines = [
        f"# scheme = {schedule.scheme}",
        f"# n_antennas = {schedule.n_antennas}",
        f"# active_count = {schedule.active_count}",
        f"# theta0_rad = {schedule.theta0_rad!r}",
        f"# theta_c_rad = {schedule.theta_c_rad!r}",
        f"# rng_seed = {schedule.rng_seed}",
    ]
    lines += ["".join("1" if b else "0" for b in row) for row in schedule.masks]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_schedule(path) -> SelectionSchedule:
    header: dict[str, str] = {}
    rows: list[Sequence[bool]] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                header[key.strip()] = value.strip()
            else:
                rows.append(ActivationVector.from_string(line).bits)
    masks = np.array(rows, dtype=bool)
    masks.setflags(write=False)
    if masks.shape[1] != int(header["n_antennas"]):
        raise ValueError("schedule rows do not match the n_antennas header")
    return SelectionSchedule(
        scheme=header["scheme"],
        masks=masks,
        theta0_rad=float(header["theta0_rad"]),
        theta_c_rad=float(header["theta_c_rad"]),
        rng_seed=int(header["rng_seed"]),
        active_count=int(header["active_count"]),
    )


def popoviciu_bound(phases: Iterable[float]) -> float:
    p = np.asarray(list(phases), dtype=float)
    return 0.25 * float(p.max() - p.min()) ** 2
