"""Command-line driver: ``vsm-privacy {spectrum,optimize,pod}``.

Values resolve as flag > config file > default. Every run writes a
``manifest.txt`` first; feeding that manifest back through ``--config``
reproduces the run.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import re
import sys
from dataclasses import dataclass

from . import __version__
from .array_model import ArrayGeometry
from .evaluation import (
    DEFAULT_MPV2_ACTIVE,
    PodConfig,
    run_pod_sweep,
    run_spectrum_snapshot,
    write_pod_table,
)
from .scene import AUTHORIZED, EAVESDROPPER, SceneConfig, VitalSignProfile
from .selection import (
    SCHEMES,
    AnnealParams,
    allocation_variance,
    enumerate_phase_set,
    mpv2_oracle,
    popoviciu_bound,
    solve_mpv1,
    solve_mpv2,
)
from .spectral import write_peak_report, write_spectrum

logger = logging.getLogger("vsm_privacy")

RECEIVER_ALIASES = {"eaves": EAVESDROPPER, EAVESDROPPER: EAVESDROPPER, AUTHORIZED: AUTHORIZED}


class UsageError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"argument --{flag}: {message}")
        self.flag = flag


@dataclass(frozen=True)
class Param:
    name: str
    kind: type
    default: object
    help: str


SHARED = [
    Param("fc-hz", float, 2.2e9, "carrier frequency [Hz]"),
    Param("n-antennas", int, 16, "number of array elements"),
    Param("theta0-deg", float, 30.0, "user direction [deg, 0..180]"),
    Param("theta-c-deg", str, "auto", "steering angle [deg]; auto = theta0 (conventional) or 41 (mpv2)"),
    Param("ra-m", float, 1.0, "radar-to-user range [m]"),
    Param("re-m", float, 1.0, "user-to-eavesdropper range [m]"),
    Param("fs-hz", float, 100.0, "receiver sample rate [Hz]"),
    Param("duration-s", float, 20.0, "observation window [s]"),
    Param("heart-amp-m", float, 0.5e-3, "heartbeat displacement amplitude [m]"),
    Param("heart-freq-hz", float, 1.3, "heartbeat frequency [Hz]"),
    Param("breath-amp-m", float, 1e-3, "breathing displacement amplitude [m]"),
    Param("breath-freq-hz", float, 0.4, "breathing frequency [Hz]"),
    Param("seed", int, 0, "master seed"),
    Param("anneal-seed", int, 0, "seed of the MPV-I annealing run"),
    Param("anneal-iterations", int, 5000, "MPV-I annealing iterations"),
    Param("out-dir", str, "out", "output directory"),
]

COMMANDS = {
    "spectrum": SHARED + [
        Param("snr-db", float, 10.0, "SNR [dB]; inf for noiseless"),
        Param("scheme", str, "conventional", "conventional | mpv1 | mpv2"),
        Param("receiver", str, "eaves", "eaves | authorized"),
        Param("l", int, DEFAULT_MPV2_ACTIVE, "active antennas for mpv2"),
    ],
    "optimize": SHARED + [
        Param("scheme", str, "mpv2", "mpv1 | mpv2"),
        Param("l", int, DEFAULT_MPV2_ACTIVE, "active antennas for mpv2"),
        Param("oracle-samples", int, 100_000, "random simplex points for the mpv2 oracle"),
    ],
    "pod": SHARED + [
        Param("snr-db", str, "-30:10:20", "SNR grid start:step:stop (inclusive) or comma list"),
        Param("scheme", str, ",".join(SCHEMES), "comma list of schemes"),
        Param("l", int, DEFAULT_MPV2_ACTIVE, "active antennas for mpv2"),
        Param("trials", int, 2000, "Monte Carlo trials per (scheme, SNR)"),
        Param("full-scale", bool, False, "use 10000 trials per point"),
        Param("tol-bins", int, 1, "frequency match tolerance in DFT bins"),
        Param("workers", int, 1, "worker processes (results do not depend on it)"),
    ],
}

META_KEYS = {"subcommand", "tool_version", "master_seed", "out_dir"}


def parse_grid(text: str) -> tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("expected start:step:stop")
        start, step, stop = map(float, parts)
        if step <= 0:
            raise ValueError("step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        if n < 1:
            raise ValueError("empty grid")
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(x) for x in text.split(","))


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; keys are flag names, ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError("config", f"{path}:{lineno}: expected key = value")
            key = key.strip().lstrip("-")
            if key.startswith("source.") or key in META_KEYS:
                continue
            key = key.removeprefix("param.")
            out[key] = value.strip()
    return out


def _convert(p: Param, raw) -> object:
    if p.kind is bool:
        if isinstance(raw, bool):
            return raw
        lowered = str(raw).strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise UsageError(p.name, f"invalid boolean {raw!r}")
    try:
        return p.kind(raw)
    except (TypeError, ValueError):
        raise UsageError(p.name, f"invalid {p.kind.__name__} value {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsm-privacy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, params in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="flat key = value file")
        for p in params:
            if p.kind is bool:
                sp.add_argument(f"--{p.name}", action="store_const", const=True, default=None, help=p.help)
            else:
                sp.add_argument(f"--{p.name}", default=None, help=f"{p.help} (default: {p.default})")
    return parser


def resolve(command: str, args: argparse.Namespace) -> tuple[dict, dict]:
    params = COMMANDS[command]
    known = {p.name for p in params}
    config = read_config(args.config) if args.config else {}
    unknown = sorted(set(config) - known)
    if unknown:
        raise UsageError(unknown[0], f"unknown key in config file {args.config}")
    values, sources = {}, {}
    for p in params:
        flag = getattr(args, p.name.replace("-", "_"))
        if flag is not None:
            values[p.name], sources[p.name] = _convert(p, flag), "flag"
        elif p.name in config:
            values[p.name], sources[p.name] = _convert(p, config[p.name]), "config"
        else:
            values[p.name], sources[p.name] = p.default, "default"
    return values, sources


def _validate_common(vals: dict) -> None:
    if vals["n-antennas"] < 2:
        raise UsageError("n-antennas", "must be >= 2")
    for key in ("fc-hz", "ra-m", "re-m", "fs-hz", "duration-s"):
        if not vals[key] > 0:
            raise UsageError(key, "must be positive")
    if not 0.0 <= vals["theta0-deg"] <= 180.0:
        raise UsageError("theta0-deg", "angle out of [0, 180]")
    if vals["theta-c-deg"] != "auto":
        try:
            thc = float(vals["theta-c-deg"])
        except ValueError:
            raise UsageError("theta-c-deg", f"invalid value {vals['theta-c-deg']!r}") from None
        if not 0.0 <= thc <= 180.0:
            raise UsageError("theta-c-deg", "angle out of [0, 180]")
    if vals["anneal-iterations"] < 1:
        raise UsageError("anneal-iterations", "must be >= 1")
    if "l" in vals and not 1 <= vals["l"] <= vals["n-antennas"] - 1:
        raise UsageError("l", f"L out of [1, {vals['n-antennas'] - 1}]")
    s = vals["duration-s"] * vals["fs-hz"]
    if abs(s - round(s)) > 1e-9 * s or round(s) < 2:
        raise UsageError("duration-s", "duration-s * fs-hz must be an integer >= 2")


def _theta_c_rad(vals: dict, scheme: str) -> float:
    if vals["theta-c-deg"] != "auto":
        return math.radians(float(vals["theta-c-deg"]))
    if scheme == "mpv2":
        return math.radians(41.0)
    return math.radians(vals["theta0-deg"])


def _scene(vals: dict, snr_db: float) -> SceneConfig:
    try:
        return SceneConfig(
            geometry=ArrayGeometry(vals["n-antennas"], vals["fc-hz"]),
            theta0_rad=math.radians(vals["theta0-deg"]),
            range_auth_m=vals["ra-m"],
            range_eaves_m=vals["re-m"],
            sample_rate_hz=vals["fs-hz"],
            duration_s=vals["duration-s"],
            snr_db=snr_db,
        )
    except ValueError as exc:
        raise UsageError("config", str(exc)) from None


def _profile(vals: dict) -> VitalSignProfile:
    try:
        return VitalSignProfile(
            heart_amp_m=vals["heart-amp-m"], heart_freq_hz=vals["heart-freq-hz"],
            breath_amp_m=vals["breath-amp-m"], breath_freq_hz=vals["breath-freq-hz"],
        )
    except ValueError as exc:
        raise UsageError("heart-freq-hz", str(exc)) from None


def write_manifest(command: str, vals: dict, sources: dict) -> str:
    out_dir = vals["out-dir"]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "manifest.txt")
    with open(path, "w") as fh:
        fh.write(f"subcommand = {command}\n")
        fh.write(f"tool_version = {__version__}\n")
        fh.write(f"master_seed = {vals['seed']}\n")
        fh.write(f"out_dir = {out_dir}\n")
        for key in sorted(vals):
            fh.write(f"param.{key} = {vals[key]}\n")
        for key in sorted(sources):
            fh.write(f"source.{key} = {sources[key]}\n")
    return path


def _write_kv(path: str, record: dict) -> None:
    with open(path, "w") as fh:
        for k, v in record.items():
            fh.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")


def _solve_for(scheme: str, vals: dict, scene: SceneConfig):
    if scheme == "conventional":
        return None
    if scheme == "mpv1":
        return solve_mpv1(scene.geometry, scene.theta0_rad,
                          AnnealParams(iterations=vals["anneal-iterations"]), vals["anneal-seed"])
    ps = enumerate_phase_set(scene.geometry, scene.theta0_rad, _theta_c_rad(vals, scheme),
                             vals["l"], sampling=True)
    if ps.m == 0:
        raise RuntimeError("every configuration is degenerate at this steering angle")
    return solve_mpv2(ps)


def cmd_spectrum(vals: dict, sources: dict) -> int:
    _validate_common(vals)
    scheme = vals["scheme"]
    if scheme not in SCHEMES:
        raise UsageError("scheme", f"expected one of {', '.join(SCHEMES)}")
    receiver = RECEIVER_ALIASES.get(vals["receiver"])
    if receiver is None:
        raise UsageError("receiver", "expected eaves or authorized")
    scene = _scene(vals, vals["snr-db"])
    v = _profile(vals)
    write_manifest("spectrum", vals, sources)
    solution = _solve_for(scheme, vals, scene)
    spec, report, phase = run_spectrum_snapshot(
        scene, v, scheme, receiver, vals["seed"], solution=solution,
        theta_c_rad=_theta_c_rad(vals, scheme) if scheme == "conventional" else None,
    )
    out = vals["out-dir"]
    with open(os.path.join(out, "phase.csv"), "w") as fh:
        fh.write("sample_index,t_s,phase_rad\n")
        for i, ph in enumerate(phase):
            fh.write(f"{i},{i / scene.sample_rate_hz!r},{float(ph)!r}\n")
    write_spectrum(spec, os.path.join(out, "spectrum.csv"))
    write_peak_report(report, os.path.join(out, "peaks.txt"))
    print(f"top peaks: {report.top_freqs_hz[0]:.3f} Hz, {report.top_freqs_hz[1]:.3f} Hz")
    return 0


def cmd_optimize(vals: dict, sources: dict) -> int:
    _validate_common(vals)
    scheme = vals["scheme"]
    if scheme not in ("mpv1", "mpv2"):
        raise UsageError("scheme", "expected mpv1 or mpv2")
    if vals["oracle-samples"] < 1:
        raise UsageError("oracle-samples", "must be >= 1")
    scene = _scene(vals, math.inf)
    write_manifest("optimize", vals, sources)
    out = vals["out-dir"]
    if scheme == "mpv1":
        sol = _solve_for("mpv1", vals, scene)
        ps = enumerate_phase_set(scene.geometry, scene.theta0_rad, sol.theta_c_rad,
                                 sol.active_count, sampling=True)
        bound = popoviciu_bound(ps.phases)
        record = {
            "scheme": "mpv1",
            "active_count": sol.active_count,
            "theta_c_rad": sol.theta_c_rad,
            "theta_c_deg": math.degrees(sol.theta_c_rad),
            "variance": sol.achieved_variance,
            "popoviciu_bound": bound,
            "within_bound": sol.achieved_variance <= bound + 1e-12,
            "n_configurations": ps.m,
            "n_degenerate": ps.n_degenerate,
        }
        with open(os.path.join(out, "anneal_trace.csv"), "w") as fh:
            fh.write("iteration,objective\n")
            for it, obj in sol.anneal_trace:
                fh.write(f"{it},{obj!r}\n")
    else:
        sol = _solve_for("mpv2", vals, scene)
        ps = enumerate_phase_set(scene.geometry, scene.theta0_rad, sol.theta_c_rad,
                                 sol.active_count, sampling=True)
        oracle = mpv2_oracle(ps, vals["oracle-samples"], vals["seed"])
        record = {
            "scheme": "mpv2",
            "active_count": sol.active_count,
            "theta_c_rad": sol.theta_c_rad,
            "theta_c_deg": math.degrees(sol.theta_c_rad),
            "config_low": sol.config_low.to_string(),
            "config_high": sol.config_high.to_string(),
            "phi_min_rad": sol.phi_min_rad,
            "phi_max_rad": sol.phi_max_rad,
            "variance": sol.variance,
            "two_point_allocation_variance": allocation_variance(ps, sol.allocation),
            "oracle_max_variance": oracle,
            "oracle_gap": sol.variance - oracle,
            "uniform_variance": float(ps.phases.var()),
            "n_configurations": ps.m,
            "n_degenerate": ps.n_degenerate,
        }
    _write_kv(os.path.join(out, "solution.txt"), record)
    print(f"{scheme}: L={record['active_count']} theta_c={record['theta_c_deg']:.3f} deg "
          f"variance={record['variance']:.6f} rad^2")
    return 0


def cmd_pod(vals: dict, sources: dict) -> int:
    _validate_common(vals)
    try:
        grid = parse_grid(vals["snr-db"])
    except ValueError as exc:
        raise UsageError("snr-db", str(exc)) from None
    schemes = tuple(s.strip() for s in vals["scheme"].split(",") if s.strip())
    if not schemes or set(schemes) - set(SCHEMES):
        raise UsageError("scheme", f"expected a comma list drawn from {', '.join(SCHEMES)}")
    trials = 10_000 if vals["full-scale"] else vals["trials"]
    if trials < 1:
        raise UsageError("trials", "must be >= 1")
    if vals["tol-bins"] < 0:
        raise UsageError("tol-bins", "must be >= 0")
    if vals["workers"] < 1:
        raise UsageError("workers", "must be >= 1")
    try:
        cfg = PodConfig(
            n_trials=trials, snr_grid_db=grid, schemes=schemes,
            match_tolerance_bins=vals["tol-bins"], master_seed=vals["seed"],
            anneal_seed=vals["anneal-seed"], mpv2_active_count=vals["l"],
            mpv2_theta_c_rad=_theta_c_rad(vals, "mpv2"),
        )
    except ValueError as exc:
        raise UsageError("snr-db", str(exc)) from None
    scene = _scene(vals, grid[0])
    v = _profile(vals)
    write_manifest("pod", vals, sources)
    solutions = {s: _solve_for(s, vals, scene) for s in schemes}
    curve = run_pod_sweep(scene, v, cfg, solutions=solutions, workers=vals["workers"])
    write_pod_table(curve, os.path.join(vals["out-dir"], "pod.csv"))
    for scheme, snr, n, hits, pod, lo, hi in curve.rows():
        print(f"{scheme:>12s} {snr:7.1f} dB  pod={pod:.4f}  [{lo:.4f}, {hi:.4f}]")
    return 0


HANDLERS = {"spectrum": cmd_spectrum, "optimize": cmd_optimize, "pod": cmd_pod}


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--flag -30:5:20`` as ``--flag=-30:5:20`` so argparse keeps the value."""
    out: list[str] = []
    for tok in argv:
        if (out and out[-1].startswith("--") and "=" not in out[-1]
                and re.match(r"^-(\d|\.\d|inf)", tok)):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_attach_negative_values(argv))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        vals, sources = resolve(args.command, args)
        return HANDLERS[args.command](vals, sources)
    except UsageError as exc:
        print(f"vsm-privacy {args.command}: error: {exc}", file=sys.stderr)
        print(f"usage: vsm-privacy {args.command} [options]; see --help", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError) as exc:
        print(f"vsm-privacy {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
