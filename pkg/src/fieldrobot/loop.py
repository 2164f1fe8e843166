"""Closed-loop simulation: sense, estimate, control, actuate."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import paths
from .config import ScenarioConfig
from .errors import EstimatorError, PathExhaustedError, SolverError
from .mhe import MovingHorizonEstimator
from .model import Measurement, Params
from .mpc import ModelPredictiveController
from .plant import PlantState, SensorNoise, apply_dropout, sample_sensors, step_plant, with_traction

COLUMNS = [
    "t",
    "x", "y", "theta", "v_actual", "omega_actual", "mu_true", "kappa_true",
    "z_x", "z_y", "z_v", "z_omega", "valid_gnss",
    "est_x", "est_y", "est_theta", "est_v", "est_mu", "est_kappa", "est_ok",
    "ref_x", "ref_y", "ctrl_ref_x", "ctrl_ref_y", "ctrl_ref_theta",
    "omega_cmd", "v_cmd", "ctrl_active", "ctrl_ok", "saturated",
]
TELEMETRY_COLUMNS = [
    "mhe_kkt", "mhe_qp_iters", "mhe_prep_ms", "mhe_fb_ms",
    "mpc_kkt", "mpc_qp_iters", "mpc_prep_ms", "mpc_fb_ms",
]
FLAG_COLUMNS = {"valid_gnss", "est_ok", "ctrl_active", "ctrl_ok", "saturated", "mhe_qp_iters", "mpc_qp_iters"}


@dataclass
class SimLog:
    columns: list = field(default_factory=lambda: list(COLUMNS))
    rows: list = field(default_factory=list)
    status: str = "ok"

    def append(self, record: dict) -> None:
        if self.rows:
            dt = record["t"] - self.rows[-1]["t"]
            if not dt > 0:
                raise ValueError("SimLog timestamps must increase")
        self.rows.append(record)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(c, r[c]) for c in self.columns])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        return "".join(json.dumps({c: _json_value(c, r[c]) for c in self.columns}) + "\n" for r in self.rows)

    @classmethod
    def from_csv(cls, text: str) -> "SimLog":
        reader = csv.DictReader(io.StringIO(text))
        log = cls(columns=list(reader.fieldnames or []))
        for row in reader:
            log.rows.append({k: (int(v) if k in FLAG_COLUMNS else float(v)) for k, v in row.items()})
        return log


def _fmt(col, value):
    if col in FLAG_COLUMNS:
        return str(int(value))
    return repr(float(value))


def _json_value(col, value):
    if col in FLAG_COLUMNS:
        return int(value)
    value = float(value)
    return value if math.isfinite(value) else None


def make_path(cfg: ScenarioConfig) -> paths.ReferenceTrajectory:
    return paths.make_path(cfg.path.kind, cfg.path.speed, **cfg.path.options())


def initial_plant(cfg: ScenarioConfig, path: paths.ReferenceTrajectory) -> PlantState:
    x, y, _, _, th = path.sample(path.t[0])
    th = float(th) + cfg.path.lam * math.pi
    off = cfg.start.lateral_offset
    xi = [float(x) - off * math.sin(th), float(y) + off * math.cos(th), th + cfg.start.heading_offset]
    mu, kappa = cfg.traction.profile().at(0.0)
    return PlantState(xi, Params(cfg.plant.v_cmd, mu, kappa), 0.0, cfg.plant.v_cmd)


class ClosedLoop:
    """Owns every component of one simulated run; :meth:`step` advances one sample."""

    def __init__(self, cfg: ScenarioConfig, path: Optional[paths.ReferenceTrajectory] = None):
        cfg.validate()
        self.cfg = cfg
        self.dt = cfg.dt
        self.path = path if path is not None else make_path(cfg)
        self.plant = initial_plant(cfg, self.path)
        self.traction = cfg.traction.profile()
        self.sensors = cfg.sensors.build()
        self.noise = SensorNoise(cfg.seed)
        self.schedule = cfg.dropout.schedule(self.dt, cfg.n_samples, cfg.seed)
        self.estimator = MovingHorizonEstimator(
            cfg.mhe.n_e, self.dt, cfg.mhe.weights(), (cfg.mhe.initial_mu, cfg.mhe.initial_kappa),
            cfg.mhe.min_baseline, cfg.mhe.dropout_mode,
        )
        self.controller = ModelPredictiveController(
            self.path, cfg.mpc.build(self.dt), cfg.mpc.weights(), lam=cfg.path.lam
        )
        self.k = 0
        self.u = 0.0
        self.last_valid: Optional[Measurement] = None
        self.metric_time = self.path.project(self.plant.xi_true[:2], float(self.path.t[0]), back=0.0,
                                             ahead=min(60.0, float(self.path.t[-1] - self.path.t[0])))
        self.log = SimLog(columns=COLUMNS + (TELEMETRY_COLUMNS if cfg.log.telemetry else []))

    def _controller_params(self, p_hat):
        if self.cfg.mpc.use_estimated_traction:
            return p_hat
        return np.array([p_hat[0], 1.0, 1.0])

    def step(self) -> dict:
        cfg, dt = self.cfg, self.dt
        t = self.k * dt
        mu, kappa = self.traction.at(t)
        self.plant = with_traction(self.plant, mu, kappa)

        z = sample_sensors(self.plant, self.sensors, self.noise)
        z = apply_dropout(z, t, self.schedule, self.last_valid)
        if z.valid_gnss:
            self.last_valid = z

        est_ok = True
        try:
            est = self.estimator.feedback(t, z, self.u)
        except EstimatorError:
            est_ok = False
            est = self.estimator.last

        ctrl_active = est is not None and est.ready and self.k >= cfg.mpc.start_after
        ctrl_ok = True
        ctrl = None
        u_ref = z.omega
        if ctrl_active and not est_ok:
            # hold the previous input; the prepared linearization is stale by now
            self.controller.discard_prepared()
        elif ctrl_active:
            try:
                ctrl = self.controller.feedback(est.xi_hat, self._controller_params(est.p_hat), u_ref)
                self.u = ctrl.u_apply
            except PathExhaustedError:
                raise
            except SolverError:
                ctrl_ok = False

        self.metric_time = self.path.project(self.plant.xi_true[:2], self.metric_time, back=2.0, ahead=6.0)
        rx, ry = self.path.position(self.metric_time)
        if ctrl is not None:
            cref = ctrl.refs[0]
        else:
            cref = (math.nan, math.nan, math.nan)
        p_hat = est.p_hat if est is not None else np.full(3, math.nan)
        xi_hat = est.xi_hat if est is not None else np.full(3, math.nan)
        rec = {
            "t": t,
            "x": self.plant.xi_true[0], "y": self.plant.xi_true[1], "theta": self.plant.xi_true[2],
            "v_actual": self.plant.v_actual, "omega_actual": self.plant.omega_actual,
            "mu_true": mu, "kappa_true": kappa,
            "z_x": z.x, "z_y": z.y, "z_v": z.v, "z_omega": z.omega, "valid_gnss": z.valid_gnss,
            "est_x": xi_hat[0], "est_y": xi_hat[1], "est_theta": xi_hat[2],
            "est_v": p_hat[0], "est_mu": p_hat[1], "est_kappa": p_hat[2], "est_ok": est_ok,
            "ref_x": rx, "ref_y": ry,
            "ctrl_ref_x": cref[0], "ctrl_ref_y": cref[1], "ctrl_ref_theta": cref[2],
            "omega_cmd": self.u, "v_cmd": cfg.plant.v_cmd,
            "ctrl_active": ctrl_active, "ctrl_ok": ctrl_ok,
            "saturated": bool(ctrl is not None and ctrl.saturated),
        }
        if cfg.log.telemetry:
            e = est if (est is not None and est_ok) else None
            rec.update({
                "mhe_kkt": e.kkt_residual if e else math.nan,
                "mhe_qp_iters": e.qp_iterations if e else 0,
                "mhe_prep_ms": 1e3 * e.prep_time if e else math.nan,
                "mhe_fb_ms": 1e3 * e.feedback_time if e else math.nan,
                "mpc_kkt": ctrl.kkt_residual if ctrl else math.nan,
                "mpc_qp_iters": ctrl.qp_iterations if ctrl else 0,
                "mpc_prep_ms": 1e3 * ctrl.prep_time if ctrl else math.nan,
                "mpc_fb_ms": 1e3 * ctrl.feedback_time if ctrl else math.nan,
            })
        self.log.append(rec)

        self.plant = step_plant(self.plant, self.u, cfg.plant.v_cmd, dt, cfg.plant.tau_act)
        self.estimator.prepare(self.u)
        if ctrl_active and est_ok:
            ref_mode_u = u_ref if cfg.mpc.input_reference == "last_measured" else 0.0
            self.controller.prepare(self._controller_params(est.p_hat), ref_mode_u)
        self.k += 1
        return rec


def closed_loop_step(loop: ClosedLoop) -> dict:
    return loop.step()


def run_scenario(cfg: ScenarioConfig, path: Optional[paths.ReferenceTrajectory] = None) -> SimLog:
    loop = ClosedLoop(cfg, path)
    for _ in range(cfg.n_samples):
        try:
            loop.step()
        except PathExhaustedError:
            loop.log.status = "path_exhausted"
            break
    return loop.log
