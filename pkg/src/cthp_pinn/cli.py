"""Command-line front end.

Every command writes its outputs plus a ``manifest.json`` recording the exact
invocation; ``cthp-pinn rerun <manifest>`` replays it.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, reference
from .dataio import TrajectoryFileError, generate_synthetic, load_trajectory, save_trajectory
from .model import CthpParams, PlatoonConfig, VehicleState, equilibrium_state, simulate_platoon, validate_rational
from .nn import NonFiniteGradientError
from .profiles import SampledProfile, SinusoidAfterHold, builtin
from .stability import bode_sweep, classify, hinf_norm, string_stability_signal_check
from .trainer import (
    LossWeights,
    NonFiniteLossError,
    TrainingDivergedError,
    evaluate,
    make_problem,
    select_vehicles,
    signal_names,
    train,
)

log = logging.getLogger("cthp_pinn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DIVERGED = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def _triple(text: str, what: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    return vals


def _params_arg(text: str) -> CthpParams:
    vals = _triple(text, "--params")
    if len(vals) != 3:
        raise ConfigError("--params needs alpha,beta,tau")
    return CthpParams(*vals)


def write_manifest(path: Path, command: str, argv: list[str], config=None, out=None, seed=None) -> None:
    payload = {
        "command": command,
        "argv": argv,
        "config_path": str(config) if config else None,
        "output": str(out) if out else None,
        "seed": seed,
        "tool_version": __version__,
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")


def load_leader(spec: str):
    path = Path(spec)
    if path.suffix == ".csv" or path.exists():
        if not path.exists():
            raise ConfigError(f"leader file {spec} not found")
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        if header[:2] == ["t", "v0"] and len(header) > 2:
            traj = load_trajectory(path)
            return SampledProfile(traj.t, traj.v0)
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return SampledProfile(arr[:, 0], arr[:, 1])
    try:
        return builtin(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_params_file(spec: str) -> list[tuple[str, CthpParams | None, str]]:
    """Parameter sets as (label, params or None, error) rows.

    Accepts ``builtin:<set>`` (see :mod:`cthp_pinn.reference`), a JSON list of
    ``{"label", "alpha", "beta", "tau"}`` objects, or a learning report with a
    ``"params"`` list of triples.
    """
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        rows = list(reference.all_rows()) if name == "all" else reference.SETS.get(name)
        if rows is None:
            raise ConfigError(f"unknown builtin parameter set {name!r}; have {sorted(reference.SETS)} or 'all'")
        return [(label, p, "") for label, p in reference.params_of(rows)]
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"parameter file {spec} not found")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{spec}: {exc}") from None
    if isinstance(payload, dict) and "params" in payload:
        payload = [
            {"label": f"vehicle-{i + 1}", "alpha": a, "beta": b, "tau": t}
            for i, (a, b, t) in enumerate(payload["params"])
        ]
    if not isinstance(payload, list):
        raise ConfigError(f"{spec}: expected a list of parameter objects")
    rows = []
    for i, item in enumerate(payload):
        label = str(item.get("label", f"set-{i + 1}")) if isinstance(item, dict) else f"set-{i + 1}"
        try:
            prm = CthpParams(float(item["alpha"]), float(item["beta"]), float(item["tau"]))
        except (KeyError, TypeError, ValueError) as exc:
            rows.append((label, None, f"unreadable parameters: {exc}"))
            continue
        check = validate_rational(prm)
        rows.append((label, prm, "") if check else (label, None, "violates " + " ".join(check.violated)))
    return rows


def cmd_generate(args) -> int:
    params = [_params_arg(p) for p in (args.params or ["0.08,0.12,1.5"])]
    inits = args.init or ["20.3,21.3"]
    if len(inits) == 1:
        inits = inits * len(params)
    if len(inits) != len(params):
        raise ConfigError("give one --init per --params, or a single --init for all followers")
    states = []
    for text in inits:
        vals = _triple(text, "--init")
        if len(vals) != 2:
            raise ConfigError("--init needs p,v")
        states.append(VehicleState(*vals))
    for prm in params:
        check = validate_rational(prm)
        if not check:
            raise ConfigError(f"parameters {prm.as_tuple()} violate {' '.join(check.violated)}")
    if not args.horizon > 0:
        raise ConfigError("--horizon must be positive")
    leader = load_leader(args.leader)
    traj = generate_synthetic(params, states, leader, horizon=args.horizon)
    if not np.all(np.isfinite(traj.p)) or not np.all(np.isfinite(traj.v)):
        log.error("simulation produced non-finite states")
        return EXIT_NUMERIC
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trajectory(traj, out)
    write_manifest(out.with_name(out.name + ".manifest.json"), "generate", args.argv, out=out)
    if traj.collisions:
        log.warning("gap collapsed for vehicles %s", traj.collisions)
    if args.plot:
        from . import plotting

        plotting.platoon_velocities(traj, out.with_suffix(".png"), title="synthetic platoon")
    print(f"wrote {len(traj)} rows x {2 * traj.n_followers + 2} columns to {out}")
    return EXIT_OK


LEARN_KEYS = {
    "data_path", "vehicles", "mode", "layer_sizes", "lr", "max_iters", "seed",
    "split_fraction", "loss_weights", "normalization", "log_interval",
}


def load_learn_config(args) -> dict:
    cfg = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config {path} not found")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        unknown = set(cfg) - LEARN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for key in ("data_path", "mode", "max_iters", "seed", "lr"):
        value = getattr(args, key.replace("data_path", "data"), None)
        if value is not None:
            cfg[key] = value
    if "data_path" not in cfg:
        raise ConfigError("no data file given (--data or data_path in config)")
    return cfg


def cmd_learn(args) -> int:
    cfg = load_learn_config(args)
    data_path = Path(cfg["data_path"])
    if not data_path.exists():
        raise ConfigError(f"data file {data_path} not found")
    try:
        data = select_vehicles(load_trajectory(data_path), cfg.get("vehicles"))
    except TrajectoryFileError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    m = data.n_followers
    mode = cfg.get("mode", "single" if m == 1 else "per-vehicle")
    if mode == "single" and m != 1:
        raise ConfigError(f"mode 'single' needs one follower, data has {m}")
    sizes = cfg.get("layer_sizes", [1, 60, 60, 60, 2 * m + 1])
    if sizes[0] != 1 or sizes[-1] != 2 * m + 1:
        raise ConfigError(f"layer_sizes must start at 1 and end at {2 * m + 1} for {m} followers")
    norm = cfg.get("normalization", {})
    try:
        problem = make_problem(
            data,
            mode=mode,
            hidden=sizes[1:-1],
            lr=float(cfg.get("lr", 1e-3)),
            max_iters=int(cfg.get("max_iters", 60_000)),
            seed=int(cfg.get("seed", 0)),
            split_fraction=float(cfg.get("split_fraction", 0.8)),
            loss_weights=LossWeights.from_dict(cfg.get("loss_weights")),
            standardize=bool(norm.get("standardize", True)),
            velocity_scale=float(norm.get("velocity_scale", 30.0)),
            gap_scale=float(norm.get("gap_scale", 50.0)),
            log_interval=int(cfg.get("log_interval", 100)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", "learn", args.argv, config=args.config, out=out, seed=problem.seed)

    def progress(k, lv):
        if k % (problem.log_interval * 10) == 0:
            prm = " ".join("(%.4f %.4f %.3f)" % p.as_tuple() for p in problem.learnable.params())
            log.info("iter %d loss %.5g residual %.3g data %.5g %s", k, lv.total, lv.psi_f, lv.psi_d, prm)

    code = EXIT_OK
    try:
        report = train(problem, progress=progress)
    except TrainingDivergedError as exc:
        log.error("%s", exc)
        report, code = exc.report, EXIT_DIVERGED
    except (NonFiniteLossError, NonFiniteGradientError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC

    write_learn_outputs(out, problem, report, cfg, mode)
    if args.plot:
        from . import plotting

        full = evaluate(problem.net, problem)
        plotting.trajectory_fit(data, full, out / "predictions.png")
        plotting.parameter_convergence(report, out / "param_trajectory.png")
        plotting.loss_history(report, out / "loss_history.png")
    for i, prm in enumerate(report.params, 1):
        print("vehicle %d: alpha=%.4f beta=%.4f tau=%.3f" % (i, *prm.as_tuple()))
    return code


def write_learn_outputs(out: Path, problem, report, cfg, mode) -> None:
    payload = report.to_json()
    payload.update(mode=mode, data_path=str(cfg["data_path"]), seed=problem.seed)
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    problem.net.save(out / "checkpoint.json", iteration=payload["iterations_run"])
    m = problem.data.n_followers
    with open(out / "loss_history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss", "psi_f", "psi_d"])
        for row in zip(report.iterations, report.loss, report.psi_f, report.psi_d):
            w.writerow([row[0]] + [f"{x:.9g}" for x in row[1:]])
    with open(out / "param_trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration"] + [f"{n}{i}" for i in range(1, m + 1) for n in ("alpha", "beta", "tau")])
        for k, vals in zip(report.iterations, report.param_trace):
            w.writerow([k] + [f"{x:.9g}" for x in np.ravel(vals)])
    pred = evaluate(problem.net, problem)
    data = problem.data
    split = np.full(len(data), "test", dtype=object)
    split[problem.train_idx] = "train"
    names = signal_names(m)
    measured = [data.v0] + [s for i in range(m) for s in (data.p[i], data.v[i])]
    predicted = [pred.v0] + [s for i in range(m) for s in (pred.p[i], pred.v[i])]
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "split"] + names + [n + "_hat" for n in names])
        for k in range(len(data)):
            w.writerow([f"{data.t[k]:.9g}", split[k]] + [f"{s[k]:.9g}" for s in measured + predicted])


def _map(func, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, items))
    return [func(x) for x in items]


def cmd_stability(args) -> int:
    rows = load_params_file(args.params_file)

    def row(item):
        label, prm, err = item
        if prm is None:
            return [label, "", "", "", "", "", "", "", "", "", err]
        v = classify(prm)
        norm, w = hinf_norm(prm)
        yes = {True: "YES", False: "NO"}
        return [label, *(f"{x:.6g}" for x in prm.as_tuple()), f"{v.l2_margin:.6g}", yes[v.l2_strict],
                f"{v.linf_margin:.6g}", yes[v.linf_strict], f"{norm:.9g}", f"{w:.9g}", ""]

    results = _map(row, rows, args.jobs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "alpha", "beta", "tau", "l2_margin", "l2_strict", "linf_margin",
                    "linf_strict", "hinf_norm", "hinf_omega", "error"])
        w.writerows(results)
    write_manifest(out.with_name(out.name + ".manifest.json"), "stability", args.argv, config=args.params_file, out=out)
    for r in results:
        print(f"{r[0]}: L2 {r[5] or '-'} Linf {r[7] or '-'} {r[10]}".rstrip())
    return EXIT_CONFIG if all(r[10] for r in results) else EXIT_OK


def cmd_bode(args) -> int:
    if args.omega_min < 0 or not args.omega_max > args.omega_min:
        raise ConfigError("need 0 <= --omega-min < --omega-max")
    if args.points < 2:
        raise ConfigError("--points must be at least 2")
    rows = load_params_file(args.params_file)
    valid = [(label, prm) for label, prm, err in rows if prm is not None]
    for label, _, err in rows:
        if err:
            log.warning("%s skipped: %s", label, err)
    if not valid:
        raise ConfigError("no valid parameter sets")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    responses = _map(
        lambda lp: (lp[0], bode_sweep(lp[1], args.omega_min, args.omega_max, args.points, args.spacing)),
        valid, args.jobs,
    )
    with open(out / "peaks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "peak_magnitude", "peak_db", "peak_omega_rad_s"])
        for label, resp in responses:
            resp.to_csv(out / f"bode_{label}.csv")
            mag, omega = resp.peak()
            w.writerow([label, f"{mag:.9g}", f"{20 * np.log10(mag):.9g}", f"{omega:.9g}"])
            print(f"{label}: peak {20 * np.log10(mag):.3f} dB at {omega:.4g} rad/s")
    write_manifest(out / "manifest.json", "bode", args.argv, config=args.params_file, out=out)
    if args.plot:
        from . import plotting

        plotting.bode(responses, out / "bode.png")
    return EXIT_OK


def cmd_platoon_sim(args) -> int:
    prm = _params_arg(args.params)
    check = validate_rational(prm)
    if not check:
        raise ConfigError(f"parameters violate {' '.join(check.violated)}")
    lead = _triple(args.lead, "--lead")
    if len(lead) != 4:
        raise ConfigError("--lead needs base,amplitude,omega,hold")
    if args.n_followers < 1 or not args.horizon > 0:
        raise ConfigError("need --n-followers >= 1 and a positive --horizon")
    base = lead[0]
    if base < 0:
        raise ConfigError("leader base speed must be non-negative")
    cfg = PlatoonConfig(
        followers=[prm] * args.n_followers,
        leader_profile=SinusoidAfterHold(*lead),
        initial_states=[equilibrium_state(prm, base)] * args.n_followers,
    )
    traj = simulate_platoon(cfg, args.horizon, dt_internal=args.dt)
    if not np.all(np.isfinite(traj.v)):
        log.error("simulation produced non-finite states")
        return EXIT_NUMERIC
    norms = string_stability_signal_check(traj, "velocity", taus=[prm.tau] * args.n_followers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_trajectory(traj, out / "trajectory.csv")
    with open(out / "velocities.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"v{i}" for i in range(args.n_followers + 1)])
        for k in range(len(traj)):
            w.writerow([f"{traj.t[k]:.9g}"] + [f"{x:.9g}" for x in traj.velocities()[:, k]])
    with open(out / "norms.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vehicle", "l2", "linf", "l2_not_amplified", "linf_not_amplified"])
        for i in range(args.n_followers + 1):
            ok2 = "" if i == 0 else str(bool(norms.l2_chain[i - 1]))
            okinf = "" if i == 0 else str(bool(norms.linf_chain[i - 1]))
            w.writerow([i, f"{norms.l2[i]:.9g}", f"{norms.linf[i]:.9g}", ok2, okinf])
    write_manifest(out / "manifest.json", "platoon-sim", args.argv, out=out)
    if traj.collisions:
        log.warning("gap collapsed for vehicles %s", traj.collisions)
    if args.plot:
        from . import plotting

        plotting.platoon_velocities(traj, out / "velocities.png", title=f"omega = {lead[2]} rad/s")
    print("Linf norms:", " ".join(f"{x:.4f}" for x in norms.linf))
    print("L2 norms:  ", " ".join(f"{x:.4f}" for x in norms.l2))
    print(f"strict string stable: L2 {norms.l2_strict}, Linf {norms.linf_strict}")
    return EXIT_OK


def cmd_rerun(args) -> int:
    path = Path(args.manifest)
    if not path.exists():
        raise ConfigError(f"manifest {path} not found")
    manifest = json.loads(path.read_text())
    return main(manifest["argv"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cthp-pinn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a synthetic platoon dataset")
    p.add_argument("--params", action="append", help="alpha,beta,tau (repeat per follower)")
    p.add_argument("--init", action="append", help="initial p,v (repeat per follower)")
    p.add_argument("--leader", default="perturbed", help="builtin profile spec or CSV path")
    p.add_argument("--horizon", type=float, default=300.0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("learn", help="identify CTHP parameters with a physics-inspired network")
    p.add_argument("--data")
    p.add_argument("--mode", choices=["single", "homogeneous", "per-vehicle"])
    p.add_argument("--config")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("stability", help="L2 / Linf strict string stability of parameter sets")
    p.add_argument("--params-file", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("bode", help="frequency response of parameter sets")
    p.add_argument("--params-file", required=True)
    p.add_argument("--omega-min", type=float, default=0.01)
    p.add_argument("--omega-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--spacing", choices=["log", "linear"], default="log")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("platoon-sim", help="sinusoidal leader perturbation through a homogeneous platoon")
    p.add_argument("--n-followers", type=int, default=8)
    p.add_argument("--params", required=True, help="alpha,beta,tau")
    p.add_argument("--lead", default="20,1,0.25,20", help="base,amplitude,omega,hold")
    p.add_argument("--horizon", type=float, default=500.0)
    p.add_argument("--dt", type=float, default=0.01, help="integration step (s)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_platoon_sim)

    p = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
