"""Closed-loop simulation of the networked loop and the comparison study."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .channels import NetworkRealization, default_specs, sample_realization
from .controller import BufferedMPC, InfeasibleQP, StochasticMPC
from .protocol import ControllerInbox, actuator_apply, actuator_packet, sensor_packet

VARIANTS = ("stochastic", "deterministic", "lqr", "unconstrained")
VIOLATION_TOL = 1e-8


@dataclass(frozen=True)
class ExperimentSpec:
    """One closed-loop experiment.

    ``d_script``/``h_script``/``s_script`` are ``None`` (random), an int
    (constant age) or an explicit sequence.
    """

    variant: str = "stochastic"
    horizon: int = 60
    seed: int = 0
    d_script: object = None
    h_script: object = None
    s_script: object = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    def realization(self, problem) -> NetworkRealization:
        specs = default_specs(problem, self.d_script, self.h_script, self.s_script)
        real = sample_realization(specs, self.horizon, self.seed)
        real.validate((problem.d_min, problem.d_max), problem.h_bounds, problem.s_bounds, problem.chain)
        return real


@dataclass(eq=False)
class Trace:
    variant: str
    x: np.ndarray                 # (horizon + 1, n)
    u: np.ndarray                 # (horizon, m)
    D: tuple
    H: tuple
    S: tuple
    feasible: list                # per step: True, False (infeasible QP) or None (before the first solve)
    J: np.ndarray                 # running cost J~_k
    violations: list = field(default_factory=list)   # (k, "x"|"u", row)
    truncated_at: int | None = None
    records: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.u.shape[0]

    @property
    def final_cost(self) -> float:
        return float(self.J[-1]) if self.J.size else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        n, m = self.x.shape[1], self.u.shape[1]
        wr.writerow(["k"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                    + ["D", "H", "S", "feasible", "Jtilde"])
        for k in range(self.steps):
            wr.writerow([k] + [repr(float(v)) for v in self.x[k]] + [repr(float(v)) for v in self.u[k]]
                        + [self.D[k], self.H[k], self.S[k], _flag(self.feasible[k]), repr(float(self.J[k]))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"variant": self.variant, "steps": self.steps, "final_cost": self.final_cost,
                "violations": len(self.violations), "truncated_at": self.truncated_at,
                "final_state_inf_norm": float(np.max(np.abs(self.x[self.steps])))}


def _flag(v):
    return "" if v is None else int(bool(v))


def _violations(plant, k, x, u):
    out = [(k, "x", int(r)) for r in np.flatnonzero(plant.Mx @ x - plant.nx > VIOLATION_TOL)]
    out += [(k, "u", int(r)) for r in np.flatnonzero(plant.Mu @ u - plant.nu > VIOLATION_TOL)]
    return out


def run_closed_loop(spec: ExperimentSpec, tables, x0, realization: NetworkRealization | None = None,
                    observer=None) -> Trace:
    """Simulate the plant, the three channels and one controller variant.

    Per step: the sensor sends ``x_k``; the controller receives what the
    channels deliver and sends its packet; the actuator applies block
    ``D_k`` of packet ``k - D_k`` and sends its acknowledgment; the plant
    steps.  ``observer(k, controller, data)``, if given, is called after
    every controller step.  The LQR variant bypasses the network and applies ``u = 0`` for
    ``k < h_max`` and ``-L x_k`` afterwards.  An infeasible QP truncates the
    trace.
    """
    p = tables.problem
    pl = p.plant
    real = realization if realization is not None else spec.realization(p)
    T = spec.horizon
    if real.horizon < T:
        raise ValueError("realization shorter than the experiment horizon")
    if spec.variant in ("stochastic", "unconstrained"):
        ctrl = StochasticMPC(tables, constrained=spec.variant == "stochastic")
    elif spec.variant == "deterministic":
        ctrl = BufferedMPC(p, tables.lqr, tables.terminal)
    else:
        ctrl = None
    x = np.asarray(x0, dtype=float)
    xs, us, feas, J, viol = [x], [], [], [], []
    inbox = ControllerInbox()
    sensor_log, ack_log, store = {}, {}, {}
    run_cost = 0.0
    truncated = None
    K_d = None
    for k in range(T):
        if ctrl is None:
            u = np.zeros(p.m) if k < p.h_max else -tables.lqr.L @ x
            feas.append(None)
        else:
            sensor_log[k] = sensor_packet(k, xs, *p.h_bounds)
            data = inbox.receive(k, real.h_seq[k], real.s_seq[k], sensor_log, ack_log)
            try:
                pkt = ctrl.step(data)
            except InfeasibleQP:
                feas.append(False)
                truncated = k
                break
            feas.append(None if data.K_h is None else True)
            if observer is not None:
                observer(k, ctrl, data)
            store[k] = pkt.u_tilde
            u = actuator_apply(k, real.d_seq[k], store, p.d_max, p.m)
            if K_d is None and real.d_seq[k] <= k:
                K_d = k
            ack_log[k] = actuator_packet(k, K_d, real.d_seq, *p.s_bounds)
        viol += _violations(pl, k, x, u)
        run_cost += float(x @ p.Q @ x + u @ p.R @ u)
        J.append(run_cost)
        us.append(u)
        x = pl.step(x, u)
        xs.append(x)
    steps = len(us)
    if truncated is None:
        viol += [v for v in _violations(pl, steps, x, np.zeros(p.m)) if v[1] == "x"]
    return Trace(spec.variant, np.array(xs), np.array(us).reshape(steps, p.m),
                 tuple(real.d_seq[:steps]), tuple(real.h_seq[:steps]), tuple(real.s_seq[:steps]),
                 feas, np.array(J), viol, truncated,
                 [r.to_dict() for r in ctrl.records] if ctrl is not None else [])


# -- comparison study ---------------------------------------------------------------------
def comparison_specs(problem, horizon: int = 60) -> dict:
    """Scripted runs with ``H = h_max``: stochastic MPC at both age extremes and buffered MPC."""
    h = problem.h_max
    return {
        "stochastic_dmin": ExperimentSpec("stochastic", horizon, 0, problem.d_min, h, problem.s_min),
        "stochastic_dmax": ExperimentSpec("stochastic", horizon, 0, problem.d_max, h, problem.s_max),
        "deterministic": ExperimentSpec("deterministic", horizon, 0, problem.d_max, h, problem.s_max),
    }


def compare_experiments(specs: dict, tables, x0) -> dict:
    """Run every spec; returns ``{"traces", "csv", "summary"}`` with one J~ column per spec."""
    traces = {name: run_closed_loop(s, tables, x0) for name, s in specs.items()}
    names = list(traces)
    length = max(t.steps for t in traces.values())
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["k"] + names)
    for k in range(length):
        wr.writerow([k] + [repr(float(traces[nm].J[k])) if k < traces[nm].steps else "" for nm in names])
    summary = {nm: t.summary() for nm, t in traces.items()}
    return {"traces": traces, "csv": buf.getvalue(), "summary": summary}


# -- SVG output ------------------------------------------------------------------------------
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_lines(series: dict, title: str = "", width: int = 640, height: int = 320) -> str:
    """Minimal line chart of ``{label: values}`` against the step index."""
    pad = 40
    allv = np.concatenate([np.asarray(v, dtype=float) for v in series.values()]) if series else np.zeros(1)
    lo, hi = float(np.min(allv)), float(np.max(allv))
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    nmax = max((len(v) for v in series.values()), default=1)
    sx = (width - 2 * pad) / max(nmax - 1, 1)
    sy = (height - 2 * pad) / (hi - lo)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{pad}" y="20" font-size="14">{title}</text>',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
             'fill="none" stroke="#999"/>',
             f'<text x="2" y="{pad + 4}" font-size="10">{hi:.3g}</text>',
             f'<text x="2" y="{height - pad}" font-size="10">{lo:.3g}</text>']
    for c, (label, vals) in enumerate(series.items()):
        pts = " ".join(f"{pad + i * sx:.1f},{height - pad - (float(v) - lo) * sy:.1f}" for i, v in enumerate(vals))
        col = _COLORS[c % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 150}" y="{pad + 14 * (c + 1)}" font-size="11" fill="{col}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def trace_svg(trace: Trace) -> str:
    series = {f"x{i + 1}": trace.x[:trace.steps + 1, i] for i in range(trace.x.shape[1])}
    series.update({f"u{i + 1}": trace.u[:, i] for i in range(trace.u.shape[1])})
    return svg_lines(series, f"{trace.variant}: states and inputs")


def dump_json(obj, path) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o))
