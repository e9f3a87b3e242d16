"""Command-line entry point: ``rydkit <command> --config FILE --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 numerical convergence failure.
Heavy modules are imported inside the commands so that ``--threads`` can cap
the BLAS pools before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from rydkit.config import load_config, require_file, snapshot
from rydkit.errors import ConfigError, ConvergenceError, IntegrationError

COMMANDS = ("ghz-optimize", "ghz-evolve", "gate-bench", "decay", "mpp", "analyze")
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text)
    return path


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=float) + "\n"


# ----------------------------------------------------------------- builders


def _geometry(cfg: dict):
    from rydkit.rydberg import chain, ladder, read_geometry

    g = cfg["geometry"]
    given = [k for k in ("file", "ladder", "chain") if g.get(k) is not None]
    if len(given) != 1:
        raise ConfigError("exactly one of geometry.file, geometry.ladder, geometry.chain is required", "geometry")
    kind = given[0]
    if kind == "file":
        return read_geometry(require_file(cfg, "geometry.file"))
    spec = g[kind]
    if not isinstance(spec, dict):
        raise ConfigError(f"geometry.{kind} must be a mapping", f"geometry.{kind}")
    try:
        if kind == "ladder":
            return ladder(int(spec["rungs"]), float(spec.get("ax", 3.7)), spec.get("ay"))
        return chain(int(spec["n"]), float(spec.get("spacing", 3.7)))
    except KeyError as exc:
        raise ConfigError(f"geometry.{kind}.{exc.args[0]} is required", f"geometry.{kind}.{exc.args[0]}") from exc


def _interaction(cfg: dict):
    from rydkit.rydberg import InteractionModel

    kw = {k: v for k, v in cfg["interaction"].items() if v is not None}
    for key in ("anisotropy_angles", "anisotropy_scales"):
        if key in kw:
            kw[key] = tuple(kw[key])
    return InteractionModel(**kw)


def _decay(section: dict):
    from rydkit.decay import DecayModel

    return DecayModel.from_mapping({k: v for k, v in section.items() if k not in ("mode", "enabled")})


# ----------------------------------------------------------------- commands


def cmd_ghz_optimize(cfg: dict, out: Path) -> None:
    import numpy as np

    from rydkit.grape import (
        GrapeConfig,
        default_target,
        linear_ramp_pulse,
        optimize_pulse,
        read_pulse,
        sweep_profile_report,
        trace_dumps,
        write_pulse,
    )

    geo = _geometry(cfg)
    model = _interaction(cfg)
    p = cfg["pulse"]
    two_pi = 2 * np.pi
    if p["file"] is not None:
        initial = read_pulse(require_file(cfg, "pulse.file"))
    else:
        initial = linear_ramp_pulse(
            float(p["duration_us"]),
            int(p["n_segments"]),
            two_pi * float(p["omega_mhz"]),
            two_pi * float(p["start_mhz"]),
            two_pi * float(p["stop_mhz"]),
            float(p["taper_fraction"]),
        )
    try:
        gcfg = GrapeConfig(**cfg["grape"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grape: {exc}", "grape") from exc
    target = default_target(geo)
    res = optimize_pulse(initial, geo, model, target, gcfg)
    write_pulse(res.pulse, out / "pulse.csv", eta=gcfg.eta, seed=gcfg.seed)
    _write(out, "trace.csv", trace_dumps(res.trace))
    summary = {
        "cost": res.cost,
        "stalled": res.stalled,
        "duration_us": res.pulse.duration,
        "crossings_us": sweep_profile_report(res.pulse),
    }
    _write(out, "summary.json", _json(summary))


def _evolve_one(geo, model, pulse, decay, mode):
    from rydkit.core.state import StateVector, propagate
    from rydkit.decay import no_jump_segments, pulse_segments
    from rydkit.rydberg import default_basis, rydberg_terms

    basis = default_basis(geo, model)
    terms = rydberg_terms(geo, model, basis)
    segs = pulse_segments(terms, pulse)
    psi = StateVector.from_config(basis, 0)
    if decay is None:
        return propagate(psi, segs).normalized(), 1.0, 1.0
    nj = no_jump_segments(psi, segs, decay)
    s = nj.norm2()
    p = decay.detection_fidelity(mode)
    return nj.normalized(), s, s + (1 - p) * (1 - s)


def cmd_ghz_evolve(cfg: dict, out: Path) -> None:
    import numpy as np

    from rydkit import analysis as an
    from rydkit.core.basis import FULL, enumerate_basis
    from rydkit.core.state import StateVector
    from rydkit.grape import GhzTarget, read_pulse
    from rydkit.rydberg import DisorderSampler, sample_disordered_geometry

    geo = _geometry(cfg)
    model = _interaction(cfg)
    n = geo.n_sites
    if n > 22:
        raise ConfigError("ghz-evolve supports at most 22 sites", "geometry")
    basis = enumerate_basis(n, FULL)
    target = GhzTarget.from_geometry(geo, basis)
    pulse_cfg = cfg["pulse"]
    dec_cfg = cfg["decay"]
    decay = _decay(dec_cfg) if dec_cfg["enabled"] else None
    inject = pulse_cfg.get("inject")
    states, acceptance, no_jump = [], [], []
    if inject is not None:
        if inject != "ghz":
            raise ConfigError("pulse.inject must be 'ghz'", "pulse.inject")
        states.append(StateVector(basis, target.vector))
        acceptance.append(1.0)
        no_jump.append(1.0)
    else:
        pulse = read_pulse(require_file(cfg, "pulse.file"))
        d = cfg["disorder"]
        sampler = DisorderSampler(float(d["delta_r_nm"]), int(d["seed"]))
        for k in range(int(d["n_samples"])):
            g = sample_disordered_geometry(geo, sampler, k)
            psi, s, acc = _evolve_one(g, model, pulse, decay, dec_cfg["mode"])
            # embed constrained states in the full basis for the parity analysis
            full = np.zeros(basis.dim, dtype=complex)
            full[basis.indices(psi.basis.configs)] = psi.amplitudes
            states.append(StateVector(basis, full))
            acceptance.append(acc)
            no_jump.append(s)

    a = cfg["analysis"]
    phis = an.default_phis(int(a["parity_points"]))
    rng = np.random.default_rng(int(a["seed"]))
    per = []
    for k, st in enumerate(states):
        fid = an.ghz_fidelity_exact(st, target)
        scan = an.parity_scan(st, phis)
        bound = an.coherence_lower_bound(scan, st.probabilities(), target)
        osc = {
            str(dn): an.oscillation_amplitude(st, dn)[1]
            for dn in range(2, int(a["max_oscillation_dn"]) + 1, 2)
            if dn <= n
        }
        # post-selected fidelity weights the no-jump state by its share of kept shots
        weight = no_jump[k] / acceptance[k]
        per.append(
            {
                "instance": k,
                "fidelity": weight * fid.fidelity,
                "fidelity_no_jump": fid.fidelity,
                "coherence_2re": 2 * fid.coherence,
                "coherence_bound": bound,
                "parity_offset": scan.offset,
                "z2_population": an.z2_population(st, geo),
                "acceptance": acceptance[k],
                "oscillation_bound": osc,
            }
        )
    mean = {key: float(np.mean([p[key] for p in per])) for key in ("fidelity", "coherence_bound", "z2_population", "acceptance", "parity_offset")}
    _write(out, "report.json", _json({"mean": mean, "instances": per}))

    # shots from the first instance feed the correlation tables
    shots = an.sample_shots(states[0], int(a["shots"]), rng)
    an.write_shots(shots, out / "shots.csv")
    rows = ["dx,dy,g2_exact,g2_shots"]
    for dx, dy in ((1, 0), (0, 1), (1, 1), (2, 0)):
        if not an.displacement_pairs(geo, dx, dy):
            continue
        rows.append(f"{dx},{dy},{an.g2(states[0], geo, dx, dy)!r},{an.g2(shots, geo, dx, dy)!r}")
    _write(out, "g2.csv", "\n".join(rows) + "\n")
    dist = an.staggered_distribution(states[0], geo)
    _write(out, "staggered.csv", "M,probability\n" + "".join(f"{m},{p!r}\n" for m, p in dist.items()))
    scan = an.parity_scan(states[0], phis)
    _write(out, "parity.csv", "phi_rad,parity\n" + "".join(f"{f!r},{v!r}\n" for f, v in zip(scan.phis, scan.parity)))


def _noise(section: dict):
    from rydkit.gate.noise import NoiseModel

    s = dict(section)
    preset = s.pop("preset")
    given = {k: v for k, v in s.items() if v is not None}
    try:
        if preset == "reference":
            return NoiseModel.reference_scale(**{k: tuple(v) if k == "dc_field" else v for k, v in given.items()})
        if preset in (None, "none"):
            return NoiseModel.from_mapping(given)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"noise: {exc}", "noise") from exc
    raise ConfigError(f"unknown noise preset {preset!r}", "noise.preset")


def cmd_gate_bench(cfg: dict, out: Path) -> None:
    from dataclasses import replace

    import numpy as np

    from rydkit.gate import error_breakdown, run_grb, simulate_gate_fidelity, synthesize_tog

    g = cfg["gate"]
    omega = 2 * np.pi * float(g["omega_mhz"])
    tog = synthesize_tog(omega, float(g["blockade_ratio"]) * omega, int(g["n_slices"]))
    noise = _noise(cfg["noise"])
    decay = _decay(cfg["decay"]) if cfg["decay"]["enabled"] else None
    f = cfg["fidelity"]
    n_states = int(f["n_states"])
    if f["breakdown"]:
        raw = error_breakdown(tog, noise, decay, False, n_states)
        det = error_breakdown(tog, noise, decay, True, n_states)
    else:
        raw = {"total": simulate_gate_fidelity(tog, noise, decay, False, n_states).infidelity}
        det = {"total": simulate_gate_fidelity(tog, noise, decay, True, n_states).infidelity}
    r = cfg["grb"]
    grb_noise = replace(noise, n_realizations=int(r["realizations"]))
    data = run_grb(
        tog,
        grb_noise,
        decay,
        r["depths"],
        int(r["instances"]),
        bool(r["echo"]),
        tuple(r["detection"]),
        int(r["seed"]),
        float(r["single_qubit_error"]),
    )
    _write(out, "grb.csv", data.to_csv())
    fits = {}
    for mode in data.success:
        fit = data.fit(mode)
        fits[mode] = {**fit.params, "errors": fit.errors, "degenerate": fit.degenerate, "fidelity": 1 - fit.params["epg"]}
    report = {
        "gate": {
            "omega_rad_per_us": tog.omega,
            "duration_us": tog.duration,
            "amplitude": tog.amplitude,
            "frequency_rad_per_us": tog.frequency,
            "offset": tog.offset,
            "slope_rad_per_us": tog.slope,
            "compensation": tog.compensation,
        },
        "without_loss_detection": raw,
        "with_loss_detection": det,
        "grb_fits": fits,
    }
    _write(out, "fidelity.json", _json(report))


def cmd_decay(cfg: dict, out: Path) -> None:
    import numpy as np

    from rydkit.decay import decay_csv, decay_curve_analysis

    decay = _decay(cfg["decay"])
    p_det = cfg["p_det"]
    if p_det is None:
        p_det = decay.detection_fidelity(cfg["decay"]["mode"])
    t = np.linspace(0.0, float(cfg["t_stop_us"]), int(cfg["t_points"]))
    shots = cfg["shots"]
    fits = decay_curve_analysis(
        [float(v) for v in cfg["p0"]], decay.gamma, float(p_det), t,
        shots=None if shots is None else int(shots), seed=int(cfg["seed"]),
    )
    _write(out, "decay.csv", decay_csv(fits))


def cmd_mpp(cfg: dict, out: Path) -> None:
    import numpy as np

    from rydkit.mpp import TrapPair, sweep_csv, sweep_inhomogeneity

    t = cfg["traps"]
    kw = {"omega_g": 2 * np.pi * float(t["omega_g_mhz"]), "n_levels": int(t["n_levels"])}
    if t["k_per_um"] is not None:
        kw["k"] = float(t["k_per_um"])
    if t["omega_drive"] is not None:
        kw["omega_drive"] = float(t["omega_drive"])
    try:
        traps = TrapPair(**kw)
    except ValueError as exc:
        raise ConfigError(f"traps: {exc}", "traps") from exc
    grid = cfg["grid"]
    p = cfg["pulse"]
    rows = sweep_inhomogeneity(
        traps,
        ratios=grid["ratios"],
        deltas=grid["deltas"],
        pairs=grid["pairs"],
        shape=p["shape"],
        duration=float(p["duration_us"]),
        n_steps=int(p["n_steps"]),
    )
    _write(out, "mpp.csv", sweep_csv(rows))


def cmd_analyze(cfg: dict, out: Path) -> None:
    import numpy as np

    from rydkit import analysis as an

    geo = _geometry(cfg)
    shots = an.read_shots(require_file(cfg, "shots"))
    if shots.shape[1] != geo.n_sites:
        raise ConfigError("shot width does not match the geometry", "shots")
    report = {"n_shots": int(shots.shape[0]), "lost_shots": int(np.any(shots == an.LOST, axis=1).sum())}
    g2 = {}
    for dx, dy in cfg["displacements"]:
        if an.displacement_pairs(geo, dx, dy):
            g2[f"{dx},{dy}"] = {"g2": an.g2(shots, geo, dx, dy), "err": an.g2_shot_error(shots, geo, dx, dy)}
    report["g2"] = g2
    m = an.staggered_magnetism(shots, geo)
    m = m[~np.isnan(m)]
    vals, counts = np.unique(m.astype(int), return_counts=True)
    report["staggered_histogram"] = {str(int(v)): int(c) for v, c in zip(vals, counts)}
    report["z2_population"] = an.z2_population(shots, geo)
    meas = cfg["measurement"]
    if meas["counts"] is not None:
        errs = [meas[k] for k in ("e00", "e01", "e10", "e11")]
        if all(e is not None for e in errs):
            mat = an.measurement_matrix(*errs)
        else:
            mat = an.table_measurement_matrix(bool(meas["spin_flip"]))
        obs = np.asarray(meas["counts"], dtype=float)
        nq = int(round(np.log2(obs.size)))
        res = an.correct_measurement(obs, mat, nq)
        report["corrected_counts"] = res.counts.tolist()
        report["correction_residual"] = res.residual
    _write(out, "analysis.json", _json(report))


HANDLERS = {
    "ghz-optimize": cmd_ghz_optimize,
    "ghz-evolve": cmd_ghz_evolve,
    "gate-bench": cmd_gate_bench,
    "decay": cmd_decay,
    "mpp": cmd_mpp,
    "analyze": cmd_analyze,
}

# seeds overridden by --seed, per command
SEED_KEYS = {
    "ghz-optimize": ["grape.seed"],
    "ghz-evolve": ["disorder.seed", "analysis.seed"],
    "gate-bench": ["noise.seed", "grb.seed"],
    "decay": ["seed"],
    "mpp": [],
    "analyze": [],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydkit", description="Rydberg-array simulation and analysis runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--threads", type=int, help="cap BLAS/OpenMP worker threads")
        p.add_argument("--out", default="rydkit-out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    for var in _THREAD_VARS:
        # an explicit --threads wins over the environment
        if args.threads is not None:
            os.environ[var] = str(threads)
        else:
            os.environ.setdefault(var, str(threads))
    try:
        overrides = {k: args.seed for k in SEED_KEYS[args.command]} if args.seed is not None else {}
        cfg = load_config(args.command, args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        snapshot(cfg, args.command, out / "config.resolved.yaml")
        HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, IntegrationError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
