"""Batch experiment driver: declarative YAML configs in, CSV + JSON sidecar out.

Experiments
-----------
sweep_trap_fig1    infidelity vs trap frequency, single-pulse scheme
                   (single / bare composite / pre-compensated + re-targeted)
sweep_trap_fig2    same for the frequency-comb scheme
sweep_sts_fig3a    infidelity vs shot-to-shot noise, single-pulse scheme
sweep_sts_fig3b    infidelity vs shot-to-shot noise, comb scheme
composite_verify   first-order noise coefficient vs composite phase
gate_eval          searched kick-schedule gate, per kick model
calibrate          theta calibration sweep or comb-train calibration

Every experiment writes one CSV (RFC-4180-style, UTF-8, header row) plus a
JSON sidecar holding the fully resolved configuration, the package version
and the seed.  Outputs are written to a temp file and renamed, so partial
files are never left behind.  Re-running with the same config and seed is
byte-identical.

Exit codes: 0 success, 2 config error, 3 numerical-convergence failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from . import __version__
from .composite import THETA_SDK, calibrate_theta, error_series, five_pulse_sdk
from .dynamics import (
    CalibrationError,
    NonConvergenceError,
    PulseSpec,
    TrapSpec,
    calibrate_train,
    default_train,
    integrate_comb_train,
    integrate_pulse_sequence,
    integrate_rotating_frame,
    train_nominal_target,
)
from .fidelity import process_fidelity, target_sdk
from .hilbert import AccuracyError, HilbertSpace
from .kickalgebra import (
    SearchError,
    compose_schedule,
    gate_infidelity,
    gate_schedule_search,
    simulate_schedule_numeric,
)
from .noise import NoiseModel, sample_shots
from .optimize import adjust_displacement

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "run", "main"]

_EXPERIMENTS = (
    "sweep_trap_fig1",
    "sweep_trap_fig2",
    "sweep_sts_fig3a",
    "sweep_sts_fig3b",
    "composite_verify",
    "gate_eval",
    "calibrate",
)

_FIVE_PHASES = (0.0, THETA_SDK, THETA_SDK, -THETA_SDK, -THETA_SDK)


class ConfigError(ValueError):
    """Config failed to parse or validate; message carries the field."""


def _log_grid(lo: float, hi: float, n: int) -> list[float]:
    return [float(x) for x in np.geomspace(lo, hi, n)]


def _default_physical(experiment: str) -> dict[str, Any]:
    common = {"n_ions": 2, "fock_cutoff": 30, "eval_fock_levels": 7, "tau": 1.0e-8}
    if experiment == "sweep_trap_fig1":
        return common | {"eta": 0.012, "nu_grid": _log_grid(1e3, 1e6, 7),
                         "pulse_spacing_tau": 15.0, "budget": 400}
    if experiment == "sweep_trap_fig2":
        return common | {"eta": 0.08, "tau": 1.0e-11, "n_splitters": 8,
                         "omega_hf_over_2pi": 12.6e9, "nu_grid": _log_grid(1e3, 1e5, 3),
                         "steps_per_window": 150, "budget": 400}
    if experiment == "sweep_sts_fig3a":
        return common | {"eta": 0.1, "nu_over_2pi": 1e5,
                         "eps_grid": [round(0.005 * k, 4) for k in range(11)],
                         "pulse_spacing_tau": 15.0, "budget": 400,
                         "adjust_mode": "per_point"}
    if experiment == "sweep_sts_fig3b":
        return common | {"eta": 0.08, "tau": 1.0e-11, "n_splitters": 8,
                         "omega_hf_over_2pi": 12.6e9, "nu_over_2pi": 1e5,
                         "eps_grid": [round(0.01 * k, 4) for k in range(6)],
                         "steps_per_window": 150, "budget": 400,
                         "adjust_mode": "per_point"}
    if experiment == "composite_verify":
        return {"n_ions": 1, "fock_cutoff": 1, "eta": 0.0,
                "theta_grid": [THETA_SDK, 0.0, math.pi / 2]}
    if experiment == "gate_eval":
        return common | {"eta": 0.1, "nu_over_2pi": 1e5, "n_kicks": 28,
                         "target_chi": math.pi / 4, "tau": 1.0e-8,
                         "kick_models": ["ideal", "composite_five"]}
    # calibrate
    return {"what": "theta", "kind": "single_body",
            "g_times_tau_grid": [0.5, 1.0, math.pi, 2 * math.pi],
            "n_ions": 2, "fock_cutoff": 8, "eval_fock_levels": 4, "eta": 0.1,
            "tau": 1.0e-11, "n_splitters": 8, "omega_hf_over_2pi": 12.6e9,
            "steps_per_window": 100}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    physical: dict[str, Any]
    noise: NoiseModel
    output_path: str
    seed: int
    workers: int = 1
    resolved: dict[str, Any] = field(default_factory=dict)


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _validate_grid(values, name: str, positive: bool = True) -> list[float]:
    _require(isinstance(values, (list, tuple)) and len(values) > 0,
             f"physical.{name}: non-empty list required")
    out = []
    for i, v in enumerate(values):
        _require(isinstance(v, (int, float)) and math.isfinite(v),
                 f"physical.{name}[{i}]: finite number required, got {v!r}")
        _require((v > 0) if positive else (v >= 0),
                 f"physical.{name}[{i}]: must be {'positive' if positive else '>= 0'}")
        out.append(float(v))
    return out


def load_config(path: str, seed_override: int | None = None,
                output_override: str | None = None, workers: int = 1) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"YAML parse error{loc}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    known = {"experiment", "physical", "noise", "output_path", "seed"}
    unknown = set(raw) - known
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")

    experiment = raw.get("experiment")
    _require(experiment in _EXPERIMENTS,
             f"experiment: must be one of {_EXPERIMENTS}, got {experiment!r}")

    physical = _default_physical(experiment)
    user_phys = raw.get("physical") or {}
    _require(isinstance(user_phys, dict), "physical: mapping required")
    unknown = set(user_phys) - set(physical)
    _require(not unknown, f"unknown physical keys for {experiment}: {sorted(unknown)}")
    physical.update(user_phys)

    for key in ("nu_grid", "eps_grid", "theta_grid", "g_times_tau_grid"):
        if key in physical:
            physical[key] = _validate_grid(
                physical[key], key, positive=(key == "nu_grid" or key == "g_times_tau_grid"))
    for key in ("eta", "tau", "nu_over_2pi", "omega_hf_over_2pi"):
        if key in physical:
            v = physical[key]
            _require(isinstance(v, (int, float)) and math.isfinite(v) and v >= 0,
                     f"physical.{key}: non-negative finite number required, got {v!r}")
            physical[key] = float(v)
    for key in ("n_ions", "fock_cutoff", "eval_fock_levels", "n_splitters",
                "n_kicks", "budget", "steps_per_window"):
        if key in physical:
            v = physical[key]
            _require(isinstance(v, int) and v >= 1,
                     f"physical.{key}: positive integer required, got {v!r}")

    noise_raw = raw.get("noise") or {"kind": "deterministic_sweep", "magnitude": 0.0}
    _require(isinstance(noise_raw, dict), "noise: mapping required")
    seed = seed_override if seed_override is not None else int(raw.get("seed", 0))
    try:
        noise = NoiseModel(
            kind=noise_raw.get("kind", "deterministic_sweep"),
            magnitude=float(noise_raw.get("magnitude", 0.0)),
            n_samples=int(noise_raw.get("n_samples", 1)),
            seed=int(noise_raw.get("seed", seed)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"noise: {exc}") from exc

    output_path = output_override or raw.get("output_path")
    _require(isinstance(output_path, str) and output_path,
             "output_path: non-empty string required (or pass --output)")

    resolved = {
        "experiment": experiment,
        "physical": physical,
        "noise": {"kind": noise.kind, "magnitude": noise.magnitude,
                  "n_samples": noise.n_samples, "seed": noise.seed},
        "output_path": output_path,
        "seed": seed,
    }
    return ExperimentConfig(experiment, physical, noise, output_path, seed,
                            workers, resolved)


# --------------------------------------------------------------------------
# experiment implementations: each returns (columns, list of grid points);
# _point_row computes one CSV row from one grid point.
# --------------------------------------------------------------------------

def _space(phys) -> HilbertSpace:
    return HilbertSpace(phys["n_ions"], phys["fock_cutoff"])


def _single_pulse_if(phys, nu, eps) -> float:
    space = _space(phys)
    trap = TrapSpec(nu, phys["eta"])
    pulse = PulseSpec(tau=phys["tau"], area=math.pi)
    u = integrate_rotating_frame(pulse, trap, space, amplitude_error=eps)
    tgt = target_sdk(space, phys["eta"], 0.0)
    return process_fidelity(u, tgt, space, phys["eval_fock_levels"]).infidelity


def _composite_if(phys, nu, eps, precompensate: bool):
    space = _space(phys)
    trap = TrapSpec(nu, phys["eta"])
    u = integrate_pulse_sequence(
        _FIVE_PHASES, trap, space, amplitude_error=eps, tau=phys["tau"],
        spacing=phys["pulse_spacing_tau"] * phys["tau"],
        precompensate_displacement=precompensate,
    )
    tgt = target_sdk(space, phys["eta"], 0.0)
    return u, process_fidelity(u, tgt, space, phys["eval_fock_levels"]).infidelity


def _adjusted_if(phys, u) -> float:
    space = _space(phys)
    res = adjust_displacement(u, space, phys["eta"], budget=phys["budget"],
                              eval_fock_levels=phys["eval_fock_levels"])
    return 1.0 - res.fidelity_after


def _row_fig1(phys, noise, nu_over_2pi: float) -> dict:
    nu = 2 * math.pi * nu_over_2pi
    if_single = _single_pulse_if(phys, nu, 0.0)
    _, if_comp = _composite_if(phys, nu, 0.0, precompensate=False)
    u_der, _ = _composite_if(phys, nu, 0.0, precompensate=True)
    return {
        "nu_over_2pi_hz": nu_over_2pi,
        "if_single": if_single,
        "if_composite5": if_comp,
        "if_adjusted": _adjusted_if(phys, u_der),
    }


def _train_setup(phys):
    train = default_train(
        phys["n_splitters"], tau=phys["tau"],
        hyperfine_gap=2 * math.pi * phys["omega_hf_over_2pi"],
    )
    return train


def _train_if(phys, train, trap, space, eps, aom_phase=0.0):
    u = integrate_comb_train(train, trap, space, amplitude_error=eps,
                             aom_phase=aom_phase,
                             steps_per_window=phys["steps_per_window"])
    return u


def _comb_point(phys, nu, eps, adjust_budget):
    """single / bare composite / precompensated+retargeted comb-train IFs."""
    space = _space(phys)
    trap = TrapSpec(nu, phys["eta"])
    train = _train_setup(phys)
    tgt = train_nominal_target(train, trap, space)
    n_eval = phys["eval_fock_levels"]

    u1 = _train_if(phys, train, trap, space, eps)
    if_single = process_fidelity(u1, tgt, space, n_eval).infidelity

    # unique spin phases of the five-pulse sequence; frames advance by the
    # grid-aligned train spacing for the uncompensated (green) composite
    uniq = {}
    for ph in set(_FIVE_PHASES):
        uniq[ph] = _train_if(phys, train, trap, space, eps, aom_phase=ph)
    grid_step = 4 * train.inter_pulse_delay
    spacing = math.ceil(train.total_duration / grid_step) * grid_step
    u_green = np.eye(space.dim, dtype=complex)
    u_derot = np.eye(space.dim, dtype=complex)
    dvec = _comb_dvec(space, trap, train)
    for j, ph in enumerate(_FIVE_PHASES):
        uj = uniq[ph]
        t_off = j * spacing
        shift = np.exp(1j * dvec * t_off)
        u_green = (shift[:, None] * uj * shift.conj()[None, :]) @ u_green
        u_derot = uj @ u_derot
    if_green = process_fidelity(u_green, tgt, space, n_eval).infidelity
    # re-target from the train's own nominal family point (phase -pi/2,
    # displacement along the resonant sideband)
    from .dynamics import train_resonance
    sign, _ = train_resonance(train)
    if sign > 0:
        res = adjust_displacement(u_derot, space, phys["eta"], budget=adjust_budget,
                                  eval_fock_levels=n_eval,
                                  initial=(phys["eta"], -math.pi / 2))
        best = 1.0 - res.fidelity_after
    else:
        best = _adjust_signed(u_derot, space, phys["eta"], adjust_budget, n_eval, sign)
    return if_single, if_green, best


def _adjust_signed(u, space, eta, budget, n_eval, sign):
    from scipy.optimize import minimize as _mini

    def neg(p):
        f = process_fidelity(
            u, _signed_target(space, sign * p[0], p[1]), space, n_eval).fidelity
        return -f

    r = _mini(neg, [eta, -math.pi / 2], method="Nelder-Mead",
              bounds=[(0.0, 3 * eta), (-math.pi, math.pi)],
              options={"maxfev": budget, "xatol": 1e-12, "fatol": 1e-15})
    return float(1.0 + r.fun)


def _signed_target(space, eta_signed, phase):
    from ._kickstep import KickKernel
    return KickKernel(space, eta_signed).kick_exp(math.pi / 2, phase)


def _comb_dvec(space, trap, train):
    n = np.arange(space.fock_cutoff)
    if space.n_ions == 1:
        sz = np.array([1.0, -1.0])
    else:
        sz = np.array([2.0, 0.0, 0.0, -2.0])
    return (trap.nu * np.tile(n, space.qubit_dim)
            + 0.5 * train.hyperfine_gap * np.repeat(sz, space.fock_cutoff))


def _row_fig2(phys, noise, nu_over_2pi: float) -> dict:
    nu = 2 * math.pi * nu_over_2pi
    if_single, if_green, if_adj = _comb_point(phys, nu, 0.0, phys["budget"])
    return {
        "nu_over_2pi_hz": nu_over_2pi,
        "if_single_train": if_single,
        "if_composite5_train": if_green,
        "if_adjusted_train": if_adj,
    }


def _frozen_adjust_params(phys):
    nu = 2 * math.pi * phys["nu_over_2pi"]
    u0, _ = _composite_if(phys, nu, 0.0, precompensate=True)
    space = _space(phys)
    res = adjust_displacement(u0, space, phys["eta"], budget=phys["budget"],
                              eval_fock_levels=phys["eval_fock_levels"])
    return res.eta_eff, res.phase_eff


def _row_fig3a(phys, noise, eps: float, frozen=None) -> dict:
    nu = 2 * math.pi * phys["nu_over_2pi"]
    space = _space(phys)

    def one_shot(e):
        if_single = _single_pulse_if(phys, nu, e)
        _, if_comp = _composite_if(phys, nu, e, precompensate=False)
        u_der, _ = _composite_if(phys, nu, e, precompensate=True)
        if frozen is not None:
            eta_f, ph_f = frozen
            if_adj = process_fidelity(
                u_der, target_sdk(space, eta_f, ph_f), space,
                phys["eval_fock_levels"]).infidelity
        else:
            if_adj = _adjusted_if(phys, u_der)
        return if_single, if_comp, if_adj

    if noise.kind == "deterministic_sweep":
        s, c, a = one_shot(eps)
        return {"eps": eps, "if_single": s, "if_composite5": c, "if_adjusted": a}
    shots = sample_shots(NoiseModel(noise.kind, eps, noise.n_samples, noise.seed))
    vals = np.array([one_shot(e) for e in shots])
    mean = vals.mean(axis=0)
    serr = vals.std(axis=0, ddof=1) / math.sqrt(len(shots)) if len(shots) > 1 else 0 * mean
    return {"eps": eps,
            "if_single": mean[0], "if_single_stderr": serr[0],
            "if_composite5": mean[1], "if_composite5_stderr": serr[1],
            "if_adjusted": mean[2], "if_adjusted_stderr": serr[2]}


def _row_fig3b(phys, noise, eps: float) -> dict:
    nu = 2 * math.pi * phys["nu_over_2pi"]
    if_single, if_green, if_adj = _comb_point(phys, nu, eps, phys["budget"])
    return {"eps": eps, "if_single_train": if_single,
            "if_composite5_train": if_green, "if_adjusted_train": if_adj}


def _row_composite_verify(phys, noise, theta: float) -> dict:
    series = error_series(five_pulse_sdk(theta), _space(phys), phys["eta"])
    return {"theta": theta, "cos_theta": math.cos(theta),
            "first_coeff": series.first_coeff}


def _row_gate_eval(phys, noise, model: str) -> dict:
    nu = 2 * math.pi * phys["nu_over_2pi"]
    schedule = gate_schedule_search(phys["n_kicks"], nu, phys["eta"],
                                    phys["target_chi"], seed=0)
    branches = compose_schedule(schedule)
    space = _space(phys)
    kwargs = {"tau": phys["tau"]} if model == "finite_pulse" else {}
    u = simulate_schedule_numeric(schedule, space, kick_model=model,
                                  noise_epsilon=noise.magnitude, **kwargs)
    return {
        "model": model,
        "closure": branches.max_closure_residual,
        "chi": branches.conditional_phase,
        "infidelity": gate_infidelity(u, space, phys["target_chi"],
                                      phys["eval_fock_levels"]),
    }


def _row_calibrate_theta(phys, noise, g_times_tau: float) -> dict:
    theta = calibrate_theta(phys["kind"], g_times_tau)
    from .composite import single_body_sequence, two_body_sequence
    builder = single_body_sequence if phys["kind"] == "single_body" else two_body_sequence
    series = error_series(builder(g_times_tau, theta))
    return {"g_times_tau": g_times_tau, "theta": theta,
            "cos_theta": math.cos(theta), "first_coeff": series.first_coeff}


def _row_calibrate_train(phys, noise, _point) -> dict:
    space = _space(phys)
    trap = TrapSpec(0.0, phys["eta"])
    template = _train_setup(phys)
    train, infid = calibrate_train(template, trap, space,
                                   steps_per_window=phys["steps_per_window"],
                                   eval_fock_levels=phys["eval_fock_levels"])
    return {"inter_pulse_delay_s": train.inter_pulse_delay,
            "aom_frequency_rad_s": train.aom_frequency,
            "per_pulse_area_rad": train.per_pulse_area,
            "infidelity_nu0": infid}


def _row_fn_name(cfg: ExperimentConfig) -> str:
    if cfg.experiment == "calibrate":
        return ("_row_calibrate_train" if cfg.physical.get("what") == "train"
                else "_row_calibrate_theta")
    return {
        "sweep_trap_fig1": "_row_fig1",
        "sweep_trap_fig2": "_row_fig2",
        "sweep_sts_fig3a": "_row_fig3a",
        "sweep_sts_fig3b": "_row_fig3b",
        "composite_verify": "_row_composite_verify",
        "gate_eval": "_row_gate_eval",
    }[cfg.experiment]


def _experiment_plan(cfg: ExperimentConfig):
    phys = cfg.physical
    extra = {}
    if cfg.experiment in ("sweep_trap_fig1", "sweep_trap_fig2"):
        points = phys["nu_grid"]
    elif cfg.experiment == "sweep_sts_fig3a":
        points = phys["eps_grid"]
        if phys.get("adjust_mode") == "frozen":
            extra["frozen"] = _frozen_adjust_params(phys)
    elif cfg.experiment == "sweep_sts_fig3b":
        points = phys["eps_grid"]
    elif cfg.experiment == "composite_verify":
        points = phys["theta_grid"]
    elif cfg.experiment == "gate_eval":
        points = list(phys["kick_models"])
    elif phys.get("what") == "train":
        points = [0]
    else:
        points = phys["g_times_tau_grid"]
    return points, globals()[_row_fn_name(cfg)], extra


def _point_job(args):
    row_fn_name, phys, noise_tuple, point, extra = args
    noise = NoiseModel(*noise_tuple)
    return globals()[row_fn_name](phys, noise, point, **extra)


def _format_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run(cfg: ExperimentConfig) -> str:
    """Execute the experiment; returns the output path.  Raises ConfigError
    or the numerical-failure exceptions; callers map those to exit codes."""
    points, row_fn, extra = _experiment_plan(cfg)
    noise_tuple = (cfg.noise.kind, cfg.noise.magnitude, cfg.noise.n_samples,
                   cfg.noise.seed)
    if cfg.workers > 1:
        jobs = [(_row_fn_name(cfg), cfg.physical, noise_tuple, p, extra) for p in points]
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_point_job, jobs))
    else:
        rows = [row_fn(cfg.physical, cfg.noise, p, **extra) for p in points]

    columns = list(rows[0].keys())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(row[c]) for c in columns])

    out_dir = os.path.dirname(os.path.abspath(cfg.output_path)) or "."
    os.makedirs(out_dir, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, cfg.output_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

    sidecar = {"resolved_config": cfg.resolved, "version": __version__,
               "seed": cfg.seed}
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, cfg.output_path + ".meta.json")
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return cfg.output_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdkrefocus",
        description="Spin-dependent-kick refocusing experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run an experiment config")
    runp.add_argument("config", help="YAML experiment config")
    runp.add_argument("--seed", type=int, default=None, help="override config seed")
    runp.add_argument("--workers", type=int, default=1, help="worker processes")
    runp.add_argument("--output", default=None, help="override output path")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, seed_override=args.seed,
                          output_override=args.output, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        path = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergenceError, CalibrationError, SearchError, AccuracyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
