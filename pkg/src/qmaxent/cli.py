"""Experiment drivers: deterministic data-file producers for each study.

Every command reads a flat key=value config (or the JSON summary of a
previous run), writes CSV curves plus a JSON summary into --out, and exits 0
on success, 2 on a configuration error, 3 on a numeric failure. Outputs are
byte-identical given (config, seed) regardless of --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .andersen import (
    EnsembleResult,
    ThermostatConfig,
    ensemble_relaxation,
    fit_relaxation,
    predicted_rate,
    run_trajectory,
)
from .cl_limit import limit_check
from .entropy import StepLedger
from .propagator import (
    NoiseModel,
    RATE_PER_DIFFUSION,
    build_noise_propagator,
    energy_weight,
    flux_cumulants,
    kinetic_free_energy,
    step_per_state,
)
from .qm import DensityMatrix, fock_state, harmonic_hamiltonian, position_operator, sample_pure_state
from .spin import collapse_timecourse, isotropic_state, x_superposition_state
from .stationary import reference_equilibrium, temperature_scan
from .superop import SuperOperator, load_superop, save_superop


class ConfigError(Exception):
    pass


class NumericError(Exception):
    pass


# ---------------------------------------------------------------------------
# Config handling: flat key=value text, or the JSON summary of a prior run.


def _parse_scalar(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def load_config(path: Path) -> dict:
    """Read key=value lines, or a JSON object (its 'config' entry if present)."""
    text = path.read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: JSON config must be an object")
        return dict(obj.get("config", obj))
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if "," in value:
            out[key] = [_parse_scalar(v) for v in value.split(",") if v.strip()]
        else:
            out[key] = _parse_scalar(value)
    return out


def _as_float(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}")
    return float(v)


def _as_int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}")
    return v


def _as_bool(v) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(f"expected true/false, got {v!r}")
    return v


def _as_str(v) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"expected a string, got {v!r}")
    return v


def _as_float_list(v) -> list[float]:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [float(v)]
    if isinstance(v, list):
        return [_as_float(x) for x in v]
    raise ConfigError(f"expected a number list, got {v!r}")


def apply_schema(raw: dict, schema: dict[str, tuple], command: str) -> dict:
    """Defaults plus strict unknown-key rejection."""
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        valid = ", ".join(sorted(schema))
        raise ConfigError(
            f"{command}: unknown config key(s) {', '.join(unknown)}; valid keys: {valid}"
        )
    out = {}
    for key, (default, caster) in schema.items():
        try:
            out[key] = caster(raw[key]) if key in raw else default
        except ConfigError as err:
            raise ConfigError(f"{command}: key {key!r}: {err}") from None
    return out


# ---------------------------------------------------------------------------
# Output helpers. No timestamps anywhere: outputs must be reproducible bytes.


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, command: str, config: dict, columns: list[str], rows) -> None:
    lines = [f"# {command} v{__version__} " + " ".join(f"{k}={_fmt(v)}" for k, v in config.items())]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_summary(path: Path, command: str, config: dict, seed: int, results: dict) -> None:
    payload = {
        "artifact": f"qmaxent {__version__}",
        "command": command,
        "config": config,
        "results": results,
        "seed": seed,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cached_superop(cache_dir: Path | None, key: str, builder) -> SuperOperator:
    if cache_dir is None:
        return builder()
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{key}.json"
    if path.exists():
        return load_superop(path)
    g = builder()
    save_superop(g, path)
    return g


def _oscillator_g0(
    cache_dir: Path | None,
    n_levels: int,
    hbar_omega: float,
    diffusion: float,
    dt: float,
    order: int,
) -> tuple[SuperOperator, np.ndarray]:
    h = harmonic_hamiltonian(n_levels, hbar_omega)
    x = position_operator(n_levels, 1.0, hbar_omega, 1.0)
    model = NoiseModel.from_diffusion(h, x, diffusion, dt=dt, quadrature_order=order)
    key = f"g0_osc_n{n_levels}_hw{hbar_omega!r}_D{diffusion!r}_dt{dt!r}_q{order}"
    return _cached_superop(cache_dir, key, lambda: build_noise_propagator(model)), h


def _resolve_lam(cfg: dict, command: str) -> float:
    if cfg["lam"] is not None and cfg["beta"] is not None:
        raise ConfigError(f"{command}: give either lam or beta, not both")
    if cfg["lam"] is not None:
        return _as_float(cfg["lam"])
    if cfg["beta"] is not None:
        beta = _as_float(cfg["beta"])
        if cfg["regime"] == "weak":
            return beta / 2.0
        if cfg["regime"] == "strong":
            return beta
        raise ConfigError(f"{command}: regime must be weak or strong, got {cfg['regime']!r}")
    raise ConfigError(f"{command}: one of lam or beta is required")


def _optional_float(v):
    if v is None:
        return None
    return _as_float(v)


# ---------------------------------------------------------------------------
# ref-traj: the measured-cavity thermostat.

REF_TRAJ_SCHEMA = {
    "mode": ("ensemble", _as_str),
    "n_levels": (10, _as_int),
    "hbar_omega": (1.0, _as_float),
    "coupling": (0.01, _as_float),
    "beta": (1.0, _as_float),
    "t_reset": (10.0, _as_float),
    "n_traj": (200, _as_int),
    "run_length": (300, _as_int),
}


def cmd_ref_traj(cfg: dict, out: Path, seed: int, threads: int, cache: Path | None) -> dict:
    config = ThermostatConfig(
        n_levels=cfg["n_levels"],
        hbar_omega=cfg["hbar_omega"],
        coupling=cfg["coupling"],
        beta=cfg["beta"],
        t_reset=cfg["t_reset"],
        n_traj=cfg["n_traj"],
        run_length=cfg["run_length"],
    )
    columns = ["t"] + [f"p{n}" for n in range(config.n_levels)]
    results: dict = {"predicted_rate": predicted_rate(config)}
    if cfg["mode"] == "single":
        rng = np.random.default_rng([seed, 0])
        record = run_trajectory(config, rng)
        rows = [[t, *pops] for t, pops in zip(record.times, record.populations)]
        write_csv(out / "ref_traj.csv", "ref-traj", cfg, columns, rows)
        results["measured_levels_head"] = [int(m) for m in record.measured_levels[:20]]
    elif cfg["mode"] == "ensemble":
        ens: EnsembleResult = ensemble_relaxation(config, master_seed=seed, threads=threads)
        if not ens.converged:
            raise NumericError("relaxation fit did not converge")
        rows = [[t, *pops] for t, pops in zip(ens.times, ens.mean_populations)]
        write_csv(out / "ref_traj.csv", "ref-traj", cfg, columns, rows)
        results.update(
            fitted_rate=ens.rate,
            rate_error=ens.rate_error,
            fit_residual=ens.fit_residual,
        )
    else:
        raise ConfigError(f"ref-traj: mode must be single or ensemble, got {cfg['mode']!r}")
    write_summary(out / "ref_traj.json", "ref-traj", cfg, seed, results)
    return results


# ---------------------------------------------------------------------------
# wt-traj: weighted-propagator relaxation.

WT_TRAJ_SCHEMA = {
    "mode": ("density", _as_str),
    "n_levels": (10, _as_int),
    "hbar_omega": (1.0, _as_float),
    "diffusion": (1e-3, _as_float),
    "dt": (1.0, _as_float),
    "lam": (None, _optional_float),
    "beta": (None, _optional_float),
    "regime": ("weak", _as_str),
    "target_rate": (None, _optional_float),
    "n_steps": (2000, _as_int),
    "start_level": (0, _as_int),
    "quadrature_order": (20, _as_int),
    "compare": (False, _as_bool),
    "compare_coupling": (0.01, _as_float),
    "compare_beta": (1.0, _as_float),
    "compare_t_reset": (10.0, _as_float),
    "compare_n_traj": (200, _as_int),
    "compare_run_length": (300, _as_int),
}


def cmd_wt_traj(cfg: dict, out: Path, seed: int, threads: int, cache: Path | None) -> dict:
    results: dict = {}
    diffusion = cfg["diffusion"]
    compare_config = None
    if cfg["compare"]:
        compare_config = ThermostatConfig(
            n_levels=cfg["n_levels"],
            hbar_omega=cfg["hbar_omega"],
            coupling=cfg["compare_coupling"],
            beta=cfg["compare_beta"],
            t_reset=cfg["compare_t_reset"],
            n_traj=cfg["compare_n_traj"],
            run_length=cfg["compare_run_length"],
        )
        if cfg["target_rate"] is None:
            cfg = dict(cfg)
            cfg["target_rate"] = predicted_rate(compare_config)
    if cfg["target_rate"] is not None:
        # rate per unit time -> rate per step -> diffusion constant
        diffusion = cfg["target_rate"] * cfg["dt"] / RATE_PER_DIFFUSION
        results["calibrated_diffusion"] = diffusion
    lam = _resolve_lam(cfg, "wt-traj")
    results["lam"] = lam
    n = cfg["n_levels"]
    if not 0 <= cfg["start_level"] < n:
        raise ConfigError(f"wt-traj: start_level must be in [0, {n})")
    g0, h = _oscillator_g0(cache, n, cfg["hbar_omega"], diffusion, cfg["dt"], cfg["quadrature_order"])
    wp = energy_weight(g0, h, lam)
    columns = ["step", "t"] + [f"p{k}" for k in range(n)]
    rows = []
    if cfg["mode"] == "density":
        rho = DensityMatrix.pure(fock_state(n, cfg["start_level"]))
        for k in range(cfg["n_steps"] + 1):
            pops = np.real(np.diag(rho.matrix))
            rows.append([k, k * cfg["dt"], *pops])
            if k < cfg["n_steps"]:
                rho = step_per_state(wp, rho)
        times = np.array([r[1] for r in rows])
        p0_curve = np.array([r[2] for r in rows])
        rate, rate_err, _, ok = fit_relaxation(times, p0_curve)
        if ok:
            results["fitted_rate"] = rate
            results["fitted_rate_error"] = rate_err
            results["rate_per_diffusion"] = rate * cfg["dt"] / diffusion
    elif cfg["mode"] == "sampled":
        rng = np.random.default_rng([seed, 0])
        psi = fock_state(n, cfg["start_level"])
        for k in range(cfg["n_steps"] + 1):
            rows.append([k, k * cfg["dt"], *np.abs(psi) ** 2])
            if k < cfg["n_steps"]:
                rho = step_per_state(wp, DensityMatrix.pure(psi))
                picked, _ = sample_pure_state(rho, rng)
                psi = picked.amplitudes
    else:
        raise ConfigError(f"wt-traj: mode must be density or sampled, got {cfg['mode']!r}")
    write_csv(out / "wt_traj.csv", "wt-traj", cfg, columns, rows)
    if compare_config is not None:
        ens = ensemble_relaxation(compare_config, master_seed=seed, threads=threads)
        ref_columns = ["t"] + [f"p{k}" for k in range(n)]
        ref_rows = [[t, *pops] for t, pops in zip(ens.times, ens.mean_populations)]
        write_csv(out / "wt_compare_ref.csv", "wt-traj", cfg, ref_columns, ref_rows)
        results["compare_fitted_rate"] = ens.rate
        results["compare_predicted_rate"] = predicted_rate(compare_config)
    write_summary(out / "wt_traj.json", "wt-traj", cfg, seed, results)
    return results


# ---------------------------------------------------------------------------
# stationary-scan: fixed points over a bias/diffusion grid.

STATIONARY_SCHEMA = {
    "n_levels": (10, _as_int),
    "hbar_omega": (1.0, _as_float),
    "diffusions": ([1e-3], _as_float_list),
    "dt": (1.0, _as_float),
    "lams": ([0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], _as_float_list),
    "tol": (1e-4, _as_float),
    "max_iter": (200, _as_int),
    "quadrature_order": (20, _as_int),
    "ref_coupling": (0.0, _as_float),
    "ref_betas": ([], _as_float_list),
}


def cmd_stationary_scan(cfg: dict, out: Path, seed: int, threads: int, cache: Path | None) -> dict:
    n = cfg["n_levels"]
    h = harmonic_hamiltonian(n, cfg["hbar_omega"])
    x = position_operator(n, 1.0, cfg["hbar_omega"], 1.0)

    def scan_one(diffusion: float):
        model = NoiseModel.from_diffusion(h, x, diffusion, dt=cfg["dt"], quadrature_order=cfg["quadrature_order"])
        return temperature_scan(model, np.array(cfg["lams"]), tol=cfg["tol"], max_iter=cfg["max_iter"])

    diffusions = cfg["diffusions"]
    if threads > 1 and len(diffusions) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scans = list(pool.map(scan_one, diffusions))
    else:
        scans = [scan_one(d) for d in diffusions]
    columns = ["lambda", "D", "log_p1_p0", "log_p2_p0", "offdiag_mag", "iterations", "converged"]
    rows = []
    residuals = []
    failures = 0
    for scan in scans:
        for r in scan:
            rows.append([r.lam, r.diffusion, r.log_p1_p0, r.log_p2_p0, r.offdiag_mag, r.iterations, r.converged])
            residuals.append({"lambda": r.lam, "D": r.diffusion, "rotation": r.rotation})
            failures += 0 if r.converged else 1
    if failures == len(rows):
        raise NumericError("no stationary point converged")
    write_csv(out / "stationary_scan.csv", "stationary-scan", cfg, columns, rows)
    results: dict = {"n_points": len(rows), "n_unconverged": failures, "rotation_residuals": residuals}
    if cfg["ref_coupling"] > 0.0 and cfg["ref_betas"]:
        ref_rows = []
        for beta in cfg["ref_betas"]:
            marginal = reference_equilibrium(n, cfg["hbar_omega"], cfg["ref_coupling"], beta)
            pops = np.real(np.diag(marginal.matrix))
            ref_rows.append([beta, float(np.log(pops[1] / pops[0])), float(np.log(pops[2] / pops[0]))])
        write_csv(out / "reference_marginal.csv", "stationary-scan", cfg, ["beta", "log_p1_p0", "log_p2_p0"], ref_rows)
    write_summary(out / "stationary_scan.json", "stationary-scan", cfg, seed, results)
    return results


# ---------------------------------------------------------------------------
# flux: kinetic free energy and per-eigenstate cumulants.

FLUX_SCHEMA = {
    "n_levels": (10, _as_int),
    "hbar_omega": (1.0, _as_float),
    "diffusion": (1e-3, _as_float),
    "dt": (1.0, _as_float),
    "lams": ([0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0], _as_float_list),
    "n_states": (4, _as_int),
    "quadrature_order": (20, _as_int),
}


def cmd_flux(cfg: dict, out: Path, seed: int, threads: int, cache: Path | None) -> dict:
    n = cfg["n_levels"]
    if not 1 <= cfg["n_states"] <= n:
        raise ConfigError(f"flux: n_states must be in [1, {n}]")
    g0, h = _oscillator_g0(cache, n, cfg["hbar_omega"], cfg["diffusion"], cfg["dt"], cfg["quadrature_order"])
    rows = []
    free_energies = []
    for lam in cfg["lams"]:
        wp = energy_weight(g0, h, lam)
        for m in range(cfg["n_states"]):
            rho = DensityMatrix.pure(fock_state(n, m))
            cums = flux_cumulants(wp, rho)
            rows.append([lam, m, cums.k1[0], cums.k2[0]])
            free_energies.append(
                {"lambda": lam, "state": m, "free_energy": kinetic_free_energy(wp, rho)}
            )
    write_csv(out / "flux.csv", "flux", cfg, ["lambda", "state", "k1", "k2"], rows)
    results = {"free_energies": free_energies}
    write_summary(out / "flux.json", "flux", cfg, seed, results)
    return results


# ---------------------------------------------------------------------------
# spin-collapse: entropy ledgers during collapse, both bias conventions.

SPIN_SCHEMA = {
    "beta": (2.0, _as_float),
    "diffusion": (1e-3, _as_float),
    "dt": (1.0, _as_float),
    "n_steps": (200, _as_int),
    "energy": (1.0, _as_float),
    "quadrature_order": (20, _as_int),
    "start": ("both", _as_str),
    "convention": ("both", _as_str),
}

_START_STATES = {
    "x": x_superposition_state,
    "isotropic": isotropic_state,
}


def _ledger_rows(ledgers: list[StepLedger], dt: float):
    rows = []
    for k, led in enumerate(ledgers, start=1):
        rows.append(
            [k, k * dt, led.mean_energy_change, led.info_entropy_change, led.total_entropy, led.heat]
        )
    return rows


def cmd_spin_collapse(cfg: dict, out: Path, seed: int, threads: int, cache: Path | None) -> dict:
    starts = ["x", "isotropic"] if cfg["start"] == "both" else [cfg["start"]]
    conventions = ["beta", "half"] if cfg["convention"] == "both" else [cfg["convention"]]
    for s in starts:
        if s not in _START_STATES:
            raise ConfigError(f"spin-collapse: start must be x, isotropic, or both; got {s!r}")
    for c in conventions:
        if c not in ("beta", "half"):
            raise ConfigError(f"spin-collapse: convention must be beta, half, or both; got {c!r}")
    columns = ["step", "t", "dH", "dS_inf", "dS_tot", "dQ"]
    results: dict = {}
    for s in starts:
        for c in conventions:
            lam = cfg["beta"] if c == "beta" else cfg["beta"] / 2.0
            ledgers = collapse_timecourse(
                _START_STATES[s](),
                beta=cfg["beta"],
                diffusion=cfg["diffusion"],
                dt=cfg["dt"],
                n_steps=cfg["n_steps"],
                energy=cfg["energy"],
                lam=lam,
                order=cfg["quadrature_order"],
            )
            write_csv(out / f"spin_{s}_{c}.csv", "spin-collapse", cfg, columns, _ledger_rows(ledgers, cfg["dt"]))
            heats = [led.heat for led in ledgers]
            first_neg = next((k + 1 for k, q in enumerate(heats) if q < 0), None)
            recovery = None
            if first_neg is not None:
                recovery = next((k + 1 for k, q in enumerate(heats) if k + 1 > first_neg and q > 0), None)
            results[f"{s}_{c}"] = {
                "first_step_heat": heats[0],
                "first_negative_heat_step": first_neg,
                "heat_recovery_step": recovery,
                "min_total_entropy": min(led.total_entropy for led in ledgers),
            }
    write_summary(out / "spin_collapse.json", "spin-collapse", cfg, seed, results)
    return results


# ---------------------------------------------------------------------------
# cl-check: master-equation limit convergence.

CL_SCHEMA = {
    "n_levels": (20, _as_int),
    "hbar_omega": (1.0, _as_float),
    "mass": (1.0, _as_float),
    "lam": (0.05, _as_float),
    "sigma": (1.0, _as_float),
    "dts": ([1e-1, 3e-2, 1e-2, 3e-3], _as_float_list),
    "quadrature_order": (20, _as_int),
}


def cmd_cl_check(cfg: dict, out: Path, seed: int, threads: int, cache: Path | None) -> dict:
    report = limit_check(
        n_levels=cfg["n_levels"],
        hbar_omega=cfg["hbar_omega"],
        mass=cfg["mass"],
        lam=cfg["lam"],
        sigma=cfg["sigma"],
        dt_grid=np.array(cfg["dts"]),
        quadrature_order=cfg["quadrature_order"],
    )
    columns = ["dt", "lambda", "sigma", "max_discrepancy", "order_estimate"]
    rows = [[r.dt, r.lam, r.sigma, r.max_discrepancy, r.order_estimate] for r in report.rows]
    write_csv(out / "cl_check.csv", "cl-check", cfg, columns, rows)
    if not report.monotonic:
        raise NumericError("discrepancy did not decrease monotonically along the dt grid")
    results = {
        "overall_order": report.overall_order,
        "monotonic": report.monotonic,
        "term_norms": report.term_norms,
    }
    write_summary(out / "cl_check.json", "cl-check", cfg, seed, results)
    return results


# ---------------------------------------------------------------------------

COMMANDS = {
    "ref-traj": (REF_TRAJ_SCHEMA, cmd_ref_traj),
    "wt-traj": (WT_TRAJ_SCHEMA, cmd_wt_traj),
    "stationary-scan": (STATIONARY_SCHEMA, cmd_stationary_scan),
    "flux": (FLUX_SCHEMA, cmd_flux),
    "spin-collapse": (SPIN_SCHEMA, cmd_spin_collapse),
    "cl-check": (CL_SCHEMA, cmd_cl_check),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmaxent",
        description="Energy-weighted stochastic propagator experiment drivers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="key=value file or prior JSON summary")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, default=0, help="worker threads; 0 = available cores")
        p.add_argument("--cache", type=Path, default=None, help="directory for cached propagator tensors")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    schema, runner = COMMANDS[args.command]
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    try:
        raw = load_config(args.config) if args.config is not None else {}
        cfg = apply_schema(raw, schema, args.command)
        args.out.mkdir(parents=True, exist_ok=True)
        runner(cfg, args.out, args.seed, threads, args.cache)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
