"""Command-line front end.

    iontrap <kind> [--config PATH] [--seed N] [--out DIR] [--threads N]
    iontrap validate --config PATH [--kind KIND]

Each run writes its artifacts, ``resolved_config.json`` and ``manifest.json``
into the output directory.  Failures write ``error.json`` there (if the
directory is known), print the same record to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np
from scipy import constants

from . import __version__
from .config import KINDS, ConfigError, Scenario, resolve_defaults, validate_config

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def fmt(v) -> str:
    return f"{float(v):.12g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    path.write_text(buf.getvalue())


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _round(x):
    """Floats at 12 significant digits so JSON artifacts are byte-stable."""
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(fmt(x)) if np.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _coupling(s: Scenario):
    from .dynamics import CouplingParams

    c = s.section("coupling")
    return CouplingParams(c["g"], c["eta"], c["omega_x"], c["delta"], c["ld_limit"])


def _motional_state(p: dict):
    from .fockspace import FockSpace, MotionalDensityMatrix, coherent_amplitudes
    from .protocols import thermal_state

    space = FockSpace(p["n_max"])
    kind = p["state"]
    if kind == "fock":
        if p["fock_n"] > space.n_max:
            raise ValueError(f"fock_n={p['fock_n']} exceeds n_max={space.n_max}")
        return MotionalDensityMatrix.pure(space.basis(p["fock_n"]))
    if kind == "coherent":
        if "alpha_re" in p:
            alpha = complex(p["alpha_re"], p["alpha_im"])
        else:
            alpha = np.sqrt(p["n_bar"])
        return MotionalDensityMatrix.pure(coherent_amplitudes(alpha, space))
    if kind == "thermal":
        return thermal_state(p["n_bar"], space)
    if kind == "cat02":
        v = np.zeros(space.dim, dtype=complex)
        v[0], v[2] = 1, -1j
        return MotionalDensityMatrix.pure(v)
    raise ValueError(kind)


# ------------------------------------------------------------------ runners


def run_trap(s: Scenario, out: Path, threads: int) -> dict:
    from .trapphysics import TrapParams, compare_to_secular_approx, fit_secular_motion, integrate_trajectory, \
        q_parameter, secular_frequency

    p = s.section("trap")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tp = TrapParams.from_q(p["q_x"], p["Omega_T"], p["R"], p["mass_u"] * constants.atomic_mass,
                               p["charge_e"] * constants.e)
    w = secular_frequency(tp)
    traj = integrate_trajectory(tp, p["x0"], p["y0"], (0.0, 0.0), p["periods"] * 2 * np.pi / w)
    traj.to_csv(out / "trajectory.csv")
    fit = fit_secular_motion(traj, tp)
    summary = {
        "q_x": q_parameter(tp),
        "V_o": tp.V_o,
        "secular_frequency": w,
        "fitted_secular_frequency": fit.omega,
        "secular_frequency_rel_error": abs(fit.omega / w - 1),
        "micromotion_ratio": fit.micromotion_ratio,
        "micromotion_ratio_over_half_q": fit.micromotion_ratio / (q_parameter(tp) / 2),
        "max_deviation": compare_to_secular_approx(traj, tp),
    }
    write_json(out / "summary.json", _round(summary))
    return summary


def run_cool(s: Scenario, out: Path, threads: int) -> dict:
    from .fockspace import FockSpace
    from .protocols import cooling_trajectory, sideband_cooling_limit, thermal_state

    p = s.section("cool")
    c = _coupling(s)
    hist = cooling_trajectory(thermal_state(p["n_bar"], FockSpace(p["n_max"])), c, p["cycles"])
    write_csv(out / "cooling.csv", ["cycle", "p0", "mean_n"],
              [(str(i), r.populations()[0], r.mean_n()) for i, r in enumerate(hist)])
    summary = {
        "final_p0": hist[-1].populations()[0],
        "final_mean_n": hist[-1].mean_n(),
        "sideband_cooling_limit": sideband_cooling_limit(p["gamma_linewidth"], c.omega_x),
    }
    write_json(out / "summary.json", _round(summary))
    return summary


def run_flop(s: Scenario, out: Path, threads: int) -> dict:
    from .signals import default_tau_grid, detect_revival, fit_poissonian, invert_populations, revival_time, \
        sample_signal, synthesize_signal

    p = s.section("flop")
    c = _coupling(s)
    rho = _motional_state(p)
    P = rho.populations()
    P = P / P.sum()
    if p["tau_max"] > 0:
        n_pts = p["tau_points"] or 1001
        tau = np.linspace(0.0, p["tau_max"], n_pts)
    else:
        tau = default_tau_grid(c, p["n_fit"])
    clean = synthesize_signal(P, c, p["gamma0"], p["decay_exponent"], tau)
    noisy = sample_signal(clean, p["shots"], s.seed)
    noisy.save(out / "signal.csv")
    est = invert_populations(noisy, p["n_fit"], c, p["gamma0"], p["decay_exponent"])
    write_csv(out / "populations.csv", ["n", "p", "stderr"],
              [(str(n), v, e) for n, (v, e) in enumerate(zip(est.populations, est.stderr))])
    fit = fit_poissonian(est.populations)
    rev = detect_revival(noisy)
    summary = {
        "fitted_n_bar": fit.n_bar,
        "fitted_n_bar_stderr": fit.stderr,
        "true_mean_n": float(np.arange(P.size) @ P),
        "condition_number": est.condition_number,
        "revival_detected": rev is not None,
        "revival_time": rev.revival_time if rev else None,
        "collapse_time": rev.collapse_time if rev else None,
        "revival_time_estimate": revival_time(c, float(np.arange(P.size) @ P)),
    }
    write_json(out / "summary.json", _round(summary))
    return summary


def run_cat(s: Scenario, out: Path, threads: int) -> dict:
    from .fockspace import FockSpace, fidelity
    from .protocols import cat_interference, cat_target, fringe_visibility, prepare_cat

    p = s.section("cat")
    c = _coupling(s)
    space = FockSpace(p["n_max"])
    a1, a2 = complex(p["alpha1_re"], p["alpha1_im"]), complex(p["alpha2_re"], p["alpha2_im"])
    state = prepare_cat(a1, a2, p["phi"], c, space)
    target = cat_target(a1, a2, p["phi"], space)
    phases = 2 * np.pi * np.arange(p["probe_phases"]) / p["probe_phases"]
    write_csv(out / "fringe.csv", ["probe_phase", "p_down"], [(ph, cat_interference(state, ph, c)) for ph in phases])
    summary = {
        "fidelity": abs(state.overlap(target)) ** 2,
        "visibility": fringe_visibility(state, c, p["probe_phases"]),
        "branch_overlap": float(np.exp(-abs(a1 - a2) ** 2 / 2)),
    }
    write_json(out / "summary.json", _round(summary))
    return summary


def _grid(p: dict):
    from .tomography import PhaseSpaceGrid

    return PhaseSpaceGrid(tuple(p["radii"]), p["phases_per_radius"], p["include_origin"])


def run_wigner(s: Scenario, out: Path, threads: int) -> dict:
    from .tomography import WignerSurface, measured_data, quasiprobability, wigner_map

    p = s.section("wigner")
    rho = _motional_state(p)
    grid = _grid(p)
    if p["pipeline"] == "ideal":
        surf = wigner_map(rho, grid)
    else:
        data = measured_data(rho, grid, _coupling(s), p["n_fit"], p["shots"], s.seed)
        surf = WignerSurface(grid.points(), np.array([quasiprobability(d, 0.0) for d in data]))
    surf.to_csv(out / "wigner.csv")
    i_min = int(np.argmin(surf.w))
    summary = {"w_min": surf.w[i_min], "alpha_at_min": [surf.alpha[i_min].real, surf.alpha[i_min].imag],
               "w_max": float(np.max(surf.w)), "points": int(surf.w.size)}
    write_json(out / "summary.json", _round(summary))
    return summary


def run_densmat(s: Scenario, out: Path, threads: int) -> dict:
    from .fockspace import fidelity
    from .tomography import reconstruct_density_matrix, synthetic_data

    p = s.section("densmat")
    rho = _motional_state(p)
    data = synthetic_data(rho, _grid(p), shots=p["shots"] or None, seed=s.seed)
    rec = reconstruct_density_matrix(data, p["n_fit"])
    rec.to_json(out / "densmat.json")
    summary = {
        "fidelity": fidelity(rec.rho.embed(rho.space), rho),
        "min_eigenvalue": float(rec.eigenvalues.min()),
        "residual": rec.residual,
        "condition_number": rec.condition_number,
    }
    write_json(out / "summary.json", _round(summary))
    return summary


_LEVEL_NAME = {0: "down", 1: "up", 2: "aux"}


def run_cngate(s: Scenario, out: Path, threads: int) -> dict:
    from .fockspace import FockSpace, HybridState, InternalLevel
    from .protocols import cn_gate

    c = _coupling(s)
    space = FockSpace(s.section("cngate")["n_max"])
    rows, worst = [], 0.0
    for n in (0, 1):
        for lvl in (InternalLevel.DOWN, InternalLevel.UP):
            o = cn_gate(HybridState.basis(lvl, n, space), c)
            expected = InternalLevel.UP if (n ^ int(lvl)) else InternalLevel.DOWN
            amp = o.amplitudes[expected, n]
            worst = max(worst, 1 - abs(amp) ** 2)
            rows.append((str(n), _LEVEL_NAME[int(lvl)], str(n), _LEVEL_NAME[int(expected)], amp.real, amp.imag))
    write_csv(out / "truth_table.csv", ["n_in", "spin_in", "n_out", "spin_out", "amp_re", "amp_im"], rows)
    summary = {"max_infidelity": worst, "ld_limit": c.ld_limit}
    write_json(out / "summary.json", _round(summary))
    return summary


def run_register(s: Scenario, out: Path, threads: int) -> dict:
    import itertools

    from .fockspace import FockSpace, InternalLevel
    from .protocols import RegisterState, cn_between_ions, ghz_target, prepare_ghz

    p = s.section("register")
    c = _coupling(s)
    N, m, k = p["n_ions"], p["control"], p["target"]
    space = FockSpace(p["n_max"])
    rows, worst, com = [], 0.0, 0.0
    for bits in itertools.product((0, 1), repeat=N):
        levels = [InternalLevel(b) for b in bits]
        o = cn_between_ions(RegisterState.basis(levels, 0, space), m, k, c)
        out_bits = list(bits)
        out_bits[k] ^= bits[m]
        amp = o.amplitude([InternalLevel(b) for b in out_bits], 0)
        worst = max(worst, 1 - abs(amp) ** 2)
        com = max(com, o.com_excitation())
        rows.append(("".join("du"[b] for b in bits), "".join("du"[b] for b in out_bits), amp.real, amp.imag))
    write_csv(out / "mapping.csv", ["input", "output", "amp_re", "amp_im"], rows)
    ghz = prepare_ghz(N, p["ghz_phase"], c, p["n_max"])
    summary = {"max_infidelity": worst, "max_com_excitation": com,
               "ghz_fidelity": ghz.fidelity(ghz_target(N, p["ghz_phase"], p["n_max"]))}
    write_json(out / "summary.json", _round(summary))
    return summary


def run_ramsey(s: Scenario, out: Path, threads: int) -> dict:
    from .spectroscopy import RamseyConfig, max_slope_detuning, monte_carlo_clock, ramsey_pair

    p = s.section("ramsey")
    det = p["detuning"]
    if det == "max_slope":
        det = max_slope_detuning(p["N"], p["T_R"], p["mode"])
    cfg = RamseyConfig(p["N"], p["omega_o"] + det, p["omega_o"], p["T_R"], p["mode"], p["shots"], s.seed, p["runs"])
    span = np.pi / p["T_R"]
    rows, worst = [], 0.0
    for d in np.linspace(-span, span, p["fringe_points"]):
        closed, sim = ramsey_pair(RamseyConfig(p["N"], p["omega_o"] + d, p["omega_o"], p["T_R"], p["mode"]))
        worst = max(worst, abs(closed - sim))
        rows.append((d, closed, sim))
    write_csv(out / "fringe.csv", ["detuning", "closed_form", "simulated"], rows)
    result = monte_carlo_clock(cfg, threads=threads)
    payload = _round(result.to_dict())
    write_json(out / "clock.json", payload)
    return {**payload, "max_fringe_mismatch": worst}


RUNNERS = {
    "trap": run_trap, "cool": run_cool, "flop": run_flop, "cat": run_cat, "wigner": run_wigner,
    "densmat": run_densmat, "cngate": run_cngate, "register": run_register, "ramsey": run_ramsey,
}


def run_scenario(s: Scenario, out: Path, threads: int = 1) -> dict:
    """Run one scenario and write artifacts, resolved config and manifest to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = RUNNERS[s.kind](s, out, threads)
    wall = time.perf_counter() - t0
    write_json(out / "resolved_config.json", s.resolved())
    write_json(out / "manifest.json", {
        "version": __version__,
        "kind": s.kind,
        "seed": s.seed,
        "config_hash": s.config_hash(),
        "wall_time_s": round(wall, 6),
    })
    return summary


# ------------------------------------------------------------------ entry


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iontrap", description="Trapped-ion simulation scenarios.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} scenario")
        sp.add_argument("--config", type=Path, help="INI or JSON scenario file (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--out", type=Path, default=None, help="output directory (default ./out/<kind>)")
        sp.add_argument("--threads", type=int, default=1, help="maximum worker threads")
    vp = sub.add_parser("validate", help="validate a scenario file and print the resolved config")
    vp.add_argument("--config", type=Path, required=True)
    vp.add_argument("--kind", choices=KINDS, default=None)
    vp.add_argument("--seed", type=int, default=None)
    return ap


def _fail(record: dict, out: Path | None, code: int) -> int:
    text = json.dumps(record, indent=2, sort_keys=True)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass
    print(text, file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        try:
            s = validate_config(args.config, args.kind, args.seed)
        except ConfigError as exc:
            return _fail({"error": "ConfigError", "errors": [e.as_dict() for e in exc.errors]}, None, EXIT_CONFIG)
        print(json.dumps(s.resolved(), indent=2, sort_keys=True))
        return 0
    out = args.out if args.out is not None else Path("out") / args.command
    if args.threads < 1:
        return _fail({"error": "ConfigError", "errors": [{"section": "cli", "key": "threads", "line": None,
                                                          "message": "must be >= 1"}]}, out, EXIT_CONFIG)
    try:
        if args.config is not None:
            s = validate_config(args.config, args.command, args.seed)
        else:
            s = resolve_defaults(args.command, args.seed)
    except ConfigError as exc:
        return _fail({"error": "ConfigError", "errors": [e.as_dict() for e in exc.errors]}, out, EXIT_CONFIG)
    try:
        summary = run_scenario(s, out, args.threads)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        return _fail({"error": type(exc).__name__, "message": str(exc), "kind": s.kind}, out, EXIT_RUNTIME)
    print(json.dumps(_round(summary), indent=2, sort_keys=True, default=_json_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
