"""Command-line entry point: ``fieldrobot <command> --config FILE --seed N --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 IO or
input-data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ScenarioConfig
from .errors import ConfigError, EmptyInputError, FieldRobotError, SequencingError, SolverError
from .loop import SimLog, initial_plant, make_path, run_scenario
from .metrics import counting_report, tracking_report
from .mhe import MovingHorizonEstimator
from .model import Measurement
from .plant import SensorNoise, apply_dropout, sample_sensors, step_plant, with_traction

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

TRAJECTORY_COLUMNS = ["t", "x", "y", "theta", "v_actual", "omega_actual", "mu_true", "kappa_true", "omega_cmd", "v_cmd"]
MEASUREMENT_COLUMNS = ["t", "z_x", "z_y", "z_v", "z_omega", "valid_gnss", "u_prev", "u_next"]
ESTIMATE_COLUMNS = ["t", "est_x", "est_y", "est_theta", "est_v", "est_mu", "est_kappa", "ready", "est_ok"]
INT_COLUMNS = {"valid_gnss", "ready", "est_ok"}


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_json(path: Path, doc) -> None:
    _write_text(path, json.dumps(doc, indent=1, sort_keys=True, allow_nan=False, default=_json_default) + "\n")


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    raise TypeError(f"not serializable: {type(value)}")


def _finite(value):
    """NaN and infinities become null so JSON stays strict."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def _rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([str(int(r[c])) if c in INT_COLUMNS else repr(float(r[c])) for c in columns])
    return buf.getvalue()


def _read_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
    if not rows:
        raise EmptyInputError(f"{path} has no data rows")
    return rows


def _load_config(args) -> ScenarioConfig:
    cfg = config_mod.load(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg.validate()


# ---------------------------------------------------------------- simulate


def _feedforward(path, times) -> np.ndarray:
    """Yaw rate that follows the path heading open loop, ignoring slip."""
    tt = np.clip(np.asarray(times, dtype=float) + path.t[0], path.t[0], path.t[-1])
    heading = np.unwrap([float(path.sample(t)[4]) for t in tt])
    return np.gradient(heading, tt) if len(tt) > 1 else np.zeros(len(tt))


def simulate_open_loop(cfg: ScenarioConfig, inputs=None):
    """Plant and sensors driven by a yaw-rate sequence; no estimator or controller."""
    path = make_path(cfg)
    dt, n = cfg.dt, cfg.n_samples
    times = np.arange(n) * dt
    omega = np.asarray(inputs, dtype=float) if inputs is not None else _feedforward(path, times)
    if len(omega) < n:
        omega = np.concatenate([omega, np.zeros(n - len(omega))])
    bound = cfg.mpc.omega_bound
    omega = np.clip(omega, -bound, bound)
    plant = initial_plant(cfg, path)
    traction = cfg.traction.profile()
    sensors = cfg.sensors.build()
    noise = SensorNoise(cfg.seed)
    schedule = cfg.dropout.schedule(dt, n, cfg.seed)
    traj, meas = [], []
    last_valid = None
    u_prev = 0.0
    for k in range(n):
        t = float(times[k])
        mu, kappa = traction.at(t)
        plant = with_traction(plant, mu, kappa)
        z = apply_dropout(sample_sensors(plant, sensors, noise), t, schedule, last_valid)
        if z.valid_gnss:
            last_valid = z
        u = float(omega[k])
        traj.append({"t": t, "x": plant.xi_true[0], "y": plant.xi_true[1], "theta": plant.xi_true[2],
                     "v_actual": plant.v_actual, "omega_actual": plant.omega_actual, "mu_true": mu,
                     "kappa_true": kappa, "omega_cmd": u, "v_cmd": cfg.plant.v_cmd})
        meas.append({"t": t, "z_x": z.x, "z_y": z.y, "z_v": z.v, "z_omega": z.omega,
                     "valid_gnss": z.valid_gnss, "u_prev": u_prev, "u_next": u})
        plant = step_plant(plant, u, cfg.plant.v_cmd, dt, cfg.plant.tau_act)
        u_prev = u
    return traj, meas


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    inputs = None
    if args.inputs:
        inputs = [r["omega"] for r in _read_csv(args.inputs)]
    traj, meas = simulate_open_loop(cfg, inputs)
    out = Path(args.out)
    _write_text(out / "trajectory.csv", _rows_to_csv(TRAJECTORY_COLUMNS, traj))
    _write_text(out / "measurements.csv", _rows_to_csv(MEASUREMENT_COLUMNS, meas))
    return EXIT_OK


# ---------------------------------------------------------------- estimate


def estimate_offline(cfg: ScenarioConfig, rows) -> list:
    est = MovingHorizonEstimator(cfg.mhe.n_e, cfg.dt, cfg.mhe.weights(),
                                 (cfg.mhe.initial_mu, cfg.mhe.initial_kappa),
                                 cfg.mhe.min_baseline, cfg.mhe.dropout_mode)
    out = []
    for r in rows:
        z = Measurement(r["z_x"], r["z_y"], r["z_v"], r["z_omega"], bool(r["valid_gnss"]))
        ok = True
        try:
            res = est.feedback(r["t"], z, r.get("u_prev", 0.0))
        except SolverError:
            ok, res = False, est.last
        if res is None:
            xi, p, ready = [math.nan] * 3, [math.nan] * 3, False
        else:
            xi, p, ready = res.xi_hat, res.p_hat, res.ready
        out.append({"t": r["t"], "est_x": xi[0], "est_y": xi[1], "est_theta": xi[2], "est_v": p[0],
                    "est_mu": p[1], "est_kappa": p[2], "ready": ready, "est_ok": ok})
        est.prepare(r.get("u_next", r["z_omega"]))
    return out


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    if args.measurements:
        rows = _read_csv(args.measurements)
    else:
        _, rows = simulate_open_loop(cfg)
    _write_text(Path(args.out) / "estimates.csv", _rows_to_csv(ESTIMATE_COLUMNS, estimate_offline(cfg, rows)))
    return EXIT_OK


# ---------------------------------------------------------------- control / evaluate


def _tracking_report(cfg: ScenarioConfig, log):
    m = cfg.metrics
    return tracking_report(log, m.on_track_threshold, m.on_track_samples, m.violation_threshold)


def _summary(cfg: ScenarioConfig, log) -> dict:
    rep = _tracking_report(cfg, log)
    d = rep.to_dict()
    d.pop("errors")
    d.update(seed=cfg.seed, status=log.status, samples=len(log))
    return _finite(d)


def cmd_control(args) -> int:
    cfg = _load_config(args)
    log = run_scenario(cfg)
    out = Path(args.out)
    _write_text(out / "simlog.csv", log.to_csv())
    _write_text(out / "simlog.jsonl", log.to_jsonl())
    _write_json(out / "metrics.json", _summary(cfg, log))
    return EXIT_OK


def _run_seed(cfg: ScenarioConfig) -> dict:
    return _summary(cfg, run_scenario(cfg))


def evaluate_tracking(cfg: ScenarioConfig, seeds, workers: int = 1) -> dict:
    cfgs = [cfg.with_seed(s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_run_seed, cfgs))
    else:
        runs = [_run_seed(c) for c in cfgs]
    runs.sort(key=lambda r: r["seed"])
    means = sorted(r["mean_error_on_track"] for r in runs if r["mean_error_on_track"] is not None)
    return {
        "runs": runs,
        "seeds": len(runs),
        "mean_error_on_track": float(np.mean(means)) if means else None,
        "worst_mean_error_on_track": means[-1] if means else None,
        "seeds_without_violations": sum(1 for r in runs if r["violations"] == 0 and r["on_track_index"] is not None),
    }


def count_plots(cfg: ScenarioConfig) -> dict:
    from .tracking.counter import count_stream
    from .tracking.flow import RecordedFlow
    from .tracking.synth import generate_plots

    c = cfg.counting
    plots = generate_plots(c.plots, cfg.seed, c.synth())
    rows = []
    for p in plots:
        res = count_stream(p.frames, RecordedFlow(p.flow), c.params())
        rows.append({"plot": p.index, "reference": p.n_objects, "count": res.count})
    rep = counting_report([(r["reference"], r["count"]) for r in rows], cfg.metrics.histogram_bin)
    return {"plots": rows, "report": _finite(rep.to_dict())}


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    if args.kind in ("tracking", "all"):
        seeds = range(cfg.seed, cfg.seed + args.seeds)
        _write_json(out / "tracking_eval.json", evaluate_tracking(cfg, seeds, args.workers))
    if args.kind in ("counting", "all"):
        _write_json(out / "counting_eval.json", count_plots(cfg))
    return EXIT_OK


# ---------------------------------------------------------------- counting


def cmd_gen_detections(args) -> int:
    from .tracking.io import write_detections, write_flow
    from .tracking.synth import generate_plots

    cfg = _load_config(args)
    c = cfg.counting
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for p in generate_plots(c.plots, cfg.seed, c.synth()):
        stem = f"plot_{p.index:03d}"
        write_detections(out / f"{stem}.jsonl", p.frames)
        write_flow(out / f"{stem}.flow.jsonl", p.flow)
        _write_json(out / f"{stem}.gt.json", p.sidecar())
        manifest.append({"plot": p.index, "detections": f"{stem}.jsonl", "flow": f"{stem}.flow.jsonl",
                         "ground_truth": f"{stem}.gt.json", "objects": p.n_objects})
    _write_json(out / "manifest.json", {"frame_width": c.frame_width, "frame_height": c.frame_height,
                                        "plots": manifest})
    return EXIT_OK


def _count_one(det_path: Path, flow_path: Path | None, params):
    from .tracking.counter import count_stream
    from .tracking.flow import BlockMatchingFlow, RecordedFlow
    from .tracking.io import read_detections

    frames = read_detections(det_path)
    if flow_path is not None and flow_path.is_dir():
        provider = BlockMatchingFlow.from_directory(flow_path)
    elif flow_path is not None:
        provider = RecordedFlow.load(flow_path)
    else:
        provider = RecordedFlow({})  # Kalman prediction only
    return count_stream(frames, provider, params)


def cmd_count(args) -> int:
    from .tracking.io import write_count

    cfg = _load_config(args)
    params = cfg.counting.params()
    out = Path(args.out)
    src = Path(args.detections)
    if src.is_dir():
        man = json.loads((src / "manifest.json").read_text())
        rows = []
        for entry in man["plots"]:
            res = _count_one(src / entry["detections"], src / entry["flow"], params)
            stem = Path(entry["detections"]).stem
            write_count(out / f"{stem}.count.json", res)
            rows.append({"plot": entry["plot"], "reference": entry["objects"], "count": res.count})
        doc = {"plots": rows}
        if len(rows) >= 2 and len({r["reference"] for r in rows}) >= 2:
            rep = counting_report([(r["reference"], r["count"]) for r in rows], cfg.metrics.histogram_bin)
            doc["report"] = _finite(rep.to_dict())
        _write_json(out / "counts.json", doc)
    else:
        flow = Path(args.flow) if args.flow else None
        res = _count_one(src, flow, params)
        out.mkdir(parents=True, exist_ok=True)
        write_count(out / "count.json", res)
    return EXIT_OK


# ---------------------------------------------------------------- plot


def cmd_plot(args) -> int:
    from .metrics import CountingReport
    from .plots import plot_counting, plot_tracking

    cfg = _load_config(args)
    out = Path(args.out)
    if args.log:
        log = SimLog.from_csv(Path(args.log).read_text())
    else:
        log = run_scenario(cfg)
    report = _tracking_report(cfg, log) if len(log) else None
    plot_tracking(log, report, out)
    if args.counts:
        doc = json.loads(Path(args.counts).read_text())
        pairs = [(r["reference"], r["count"]) for r in doc["plots"]]
    else:
        pairs = [(r["reference"], r["count"]) for r in count_plots(cfg)["plots"]]
    try:
        crep = counting_report(pairs, cfg.metrics.histogram_bin)
    except FieldRobotError:
        crep = CountingReport(pairs, math.nan, math.nan, math.nan, [], math.nan, math.nan)
    plot_counting(crep, out)
    return EXIT_OK


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fieldrobot", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="scenario file (dotted key = value lines)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "open-loop plant and sensor simulation")
    p.add_argument("--inputs", help="CSV with an 'omega' column replayed as yaw-rate commands")
    p = add("estimate", cmd_estimate, "run the moving horizon estimator on a measurement CSV")
    p.add_argument("--measurements", help="measurement CSV as written by 'simulate'")
    add("control", cmd_control, "closed-loop run with estimator and controller")
    p = add("evaluate", cmd_evaluate, "multi-seed tracking and/or counting evaluation")
    p.add_argument("--kind", choices=("tracking", "counting", "all"), default="all")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--workers", type=int, default=1)
    add("gen-detections", cmd_gen_detections, "write synthetic detection streams with ground truth")
    p = add("count", cmd_count, "count objects in a detection stream or a gen-detections directory")
    p.add_argument("--detections", required=True, help="detection JSONL file or gen-detections directory")
    p.add_argument("--flow", help="flow JSONL file or directory of RGB frames")
    p = add("plot", cmd_plot, "SVG figures for a run and a counting evaluation")
    p.add_argument("--log", help="SimLog CSV; runs the scenario when omitted")
    p.add_argument("--counts", help="counts.json from 'count'; counts synthetic plots when omitted")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, EmptyInputError, SequencingError, KeyError, ValueError) as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
