"""Closed-loop simulation, baseline dispatchers and performance metrics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ambiguity import AmbiguitySet, ambiguity_radius, load_ambiguity, residual_covariance
from .arma import ArmaState, FarmPredictor, load_models, residuals, select_order, whiten
from .config import Config
from .controller import ConstraintSpec, DRMPCController, Weights
from .farm_model import FarmModel, load_model_file, step, surrogate_farm, wake_operating_winds
from .turbine import SurrogateParams, available_power, max_power_coefficient
from .wind import WindScenario, generate_wind

TRACE_SCALE_SHAFT = 2.5e6
TRACE_SCALE_TOWER = 0.27e6


# -- setup -------------------------------------------------------------------------

def scenario_from_config(cfg: Config, seed: int, T: int | None = None) -> WindScenario:
    sc = cfg.scenario
    return WindScenario(
        w0=sc.w0, TI=sc.TI, n_wt=sc.n_wt, spacing=sc.spacing,
        T=sc.T if T is None else T, seed=seed, turb_corr=sc.turb_corr, dt=sc.dt,
        deficit_coef=sc.deficit_coef, wake_expansion=sc.wake_expansion,
        delta_TI=sc.delta_TI,
    )


def surrogate_params(cfg: Config) -> SurrogateParams:
    params = {"w0": cfg.scenario.w0, "p_ref0": cfg.p_ref0, "dt": cfg.scenario.dt,
              "p_rated": cfg.weights.rated_power}
    params.update(cfg.model.params)
    return SurrogateParams(**params)


def build_model(cfg: Config) -> FarmModel:
    if cfg.model.source != "surrogate":
        model = load_model_file(cfg.model.source)
        if model.n_wt != cfg.scenario.n_wt:
            raise ValueError("model file and scenario disagree on the number of turbines")
        return model
    params = surrogate_params(cfg)
    sc = scenario_from_config(cfg, seed=0)
    if cfg.model.operating_winds == "wake":
        w_op = wake_operating_winds(sc.w0, sc.n_wt, sc.deficit_factor)
    elif cfg.model.operating_winds == "uniform":
        w_op = np.full(sc.n_wt, sc.w0)
    else:
        raise ValueError(f"unknown operating_winds {cfg.model.operating_winds!r}")
    return surrogate_farm(sc.n_wt, params, w_op)


@dataclass
class OfflineFit:
    models: list
    ambiguity: AmbiguitySet
    rmse: list = field(default_factory=list)


def identify_farm(w_dev: np.ndarray, orders, ac, w0: float, TI: float):
    """Per-turbine ARMA order selection plus the residual-based ambiguity set."""
    w_dev = np.atleast_2d(np.asarray(w_dev, dtype=float))
    models, scores, res = [], [], []
    for i in range(w_dev.shape[1]):
        m, rmse = select_order(w_dev[:, i], tuple(orders))
        models.append(m)
        scores.append(rmse)
        res.append(residuals(m, w_dev[:, i]))
    if ac.sigma_diag is not None:
        sigma = np.asarray(ac.sigma_diag, dtype=float)
    else:
        sigma = residual_covariance(res)
    n_s = min(r.size for r in res)
    kappa = ambiguity_radius(n_s, ac.beta, ac.method, kappa=ac.kappa, proxy=ac.proxy)
    return models, AmbiguitySet(w0, TI, sigma, kappa, ac.beta, n_s), scores


def fit_offline(cfg: Config, model: FarmModel, seed: int) -> OfflineFit:
    """Identify per-turbine ARMA models and the ambiguity set on independent training wind."""
    ac = cfg.ambiguity
    sc = cfg.scenario
    if cfg.arma.file:
        models, _ = load_models(cfg.arma.file)
        if len(models) != model.n_wt:
            raise ValueError("ARMA model file and farm model disagree on the number of turbines")
        if ac.file:
            return OfflineFit(models, load_ambiguity(ac.file))
        if ac.sigma_diag is None:
            raise ValueError("ambiguity needs sigma_diag or a file when ARMA models are loaded")
        n_s = cfg.arma.training_samples
        kappa = ambiguity_radius(n_s, ac.beta, ac.method, kappa=ac.kappa, proxy=ac.proxy)
        return OfflineFit(models, AmbiguitySet(sc.w0, sc.TI, np.asarray(ac.sigma_diag, float),
                                               kappa, ac.beta, n_s))
    train = generate_wind(scenario_from_config(
        cfg, seed + cfg.arma.training_seed_offset, T=cfg.arma.training_samples))
    models, amb, scores = identify_farm(train - model.w_op, cfg.arma.orders, ac, sc.w0, sc.TI)
    if ac.file:
        amb = load_ambiguity(ac.file)
    return OfflineFit(models, amb, scores)


# -- traces ------------------------------------------------------------------------

@dataclass
class SimTrace:
    w_eff: np.ndarray
    u: np.ndarray
    p_out: np.ndarray
    f_t: np.ndarray
    t_s: np.ndarray
    lam: np.ndarray
    solve_ms: np.ndarray
    x: np.ndarray | None = None
    fallbacks: int = 0

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def n_wt(self) -> int:
        return self.u.shape[1]

    @property
    def y(self) -> np.ndarray:
        """Absolute outputs interleaved per turbine as (F_t1, T_s1, F_t2, ...)."""
        out = np.empty((self.T, 2 * self.n_wt))
        out[:, 0::2] = self.f_t
        out[:, 1::2] = self.t_s
        return out


def trace_header(n_wt: int) -> list:
    cols = ["t"]
    for prefix in ("w", "u", "Pout", "Ft", "Ts"):
        cols += [f"{prefix}{i + 1}" for i in range(n_wt)]
    return cols + ["lambda", "solve_ms"]


def write_trace_csv(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header(trace.n_wt))
        for k in range(trace.T):
            row = [k]
            for arr in (trace.w_eff, trace.u, trace.p_out, trace.f_t, trace.t_s):
                row += [repr(float(v)) for v in arr[k]]
            row += [repr(float(trace.lam[k])), repr(float(trace.solve_ms[k]))]
            writer.writerow(row)


def read_trace_csv(path) -> SimTrace:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row])
    n = (len(header) - 3) // 5
    if header != trace_header(n):
        raise ValueError("unexpected trace CSV header")
    cols = [data[:, 1 + j * n:1 + (j + 1) * n] for j in range(5)]
    return SimTrace(w_eff=cols[0], u=cols[1], p_out=cols[2], f_t=cols[3], t_s=cols[4],
                    lam=data[:, -2], solve_ms=data[:, -1])


def write_plot_data(trace: SimTrace, path) -> None:
    """Whitespace-separated power outputs (MW) for gnuplot."""
    with open(path, "w") as fh:
        fh.write("# t " + " ".join(f"Pout{i + 1}_MW" for i in range(trace.n_wt)) + "\n")
        for k in range(trace.T):
            fh.write(f"{k} " + " ".join(f"{v / 1e6:.6f}" for v in trace.p_out[k]) + "\n")


# -- dispatchers ---------------------------------------------------------------------

class Scheduler:
    """Constant reference P_ref0 for every turbine."""

    name = "scheduler"

    def __init__(self, p_ref0):
        self.p_ref0 = np.asarray(p_ref0, dtype=float)

    def reference(self, k, w_eff, x):
        return self.p_ref0.copy(), 0.0, 0.0


def swf_references(w_eff, p_farm: float, p_rated: float, swept_half: float,
                   cp_max: float = 0.45) -> np.ndarray:
    """Distribute the farm reference in proportion to estimated available power."""
    w = np.maximum(np.asarray(w_eff, dtype=float), 0.0)
    p_avail = np.minimum(p_rated, swept_half * w ** 3 * cp_max)
    total = p_avail.sum()
    if total <= 0:
        return np.zeros_like(p_avail)
    return np.maximum(0.0, np.minimum(p_rated, p_farm * p_avail / total))


class SwfDispatcher:
    name = "swf"

    def __init__(self, p_farm: float, p_rated: float, swept_half: float, cp_max: float = 0.45):
        self.p_farm, self.p_rated, self.swept_half, self.cp_max = p_farm, p_rated, swept_half, cp_max

    def reference(self, k, w_eff, x):
        return swf_references(w_eff, self.p_farm, self.p_rated, self.swept_half, self.cp_max), 0.0, 0.0


class DrmpcDispatcher:
    """Whitening filters plus the receding-horizon DR-MPC."""

    name = "drmpc"

    def __init__(self, controller: DRMPCController, models, w_op):
        self.controller = controller
        self.models = list(models)
        self.w_op = np.asarray(w_op, dtype=float)
        self.states = None
        self.fallbacks = 0

    def reference(self, k, w_eff, x):
        w_dev = np.asarray(w_eff) - self.w_op
        if self.states is None:
            # no history before t=0: assume the wind sat at its first value
            self.states = [ArmaState.from_history(m, np.full(m.p, w_dev[i]))
                           for i, m in enumerate(self.models)]
        else:
            for i, m in enumerate(self.models):
                whiten(self.states[i], m, w_dev[i])
        psi = np.concatenate([s.psi for s in self.states])
        res = self.controller.step(x, psi)
        self.fallbacks += int(res.fallback_used)
        return res.u, res.lam, res.solve_time


# -- closed loop ---------------------------------------------------------------------

def simulate(model: FarmModel, dispatcher, w_eff: np.ndarray, params: SurrogateParams,
             power_tau: float = 0.5, record_solve_time: bool = False) -> SimTrace:
    """Run ``dispatcher`` against the linear plant driven by ``w_eff``.

    Electrical power follows min(P_ref, P_avail) through a first-order lag with
    time constant ``power_tau``; P_out(k) is the value at the end of interval k.
    """
    T, n = w_eff.shape
    if n != model.n_wt:
        raise ValueError("wind trace and model disagree on the number of turbines")
    alpha = 1.0 - np.exp(-model.dt / power_tau)
    p_avail = available_power(params, w_eff, max_power_coefficient())
    x = np.zeros(model.n_x)
    xs = np.empty((T, model.n_x))
    u_all = np.empty((T, n))
    p_out = np.empty((T, n))
    y_all = np.empty((T, model.n_y))
    lam = np.zeros(T)
    solve_ms = np.full(T, np.nan)
    p_prev = np.minimum(model.p_ref0, p_avail[0])
    for k in range(T):
        u, lam[k], t_solve = dispatcher.reference(k, w_eff[k], x)
        if record_solve_time:
            solve_ms[k] = 1e3 * t_solve
        xs[k] = x
        x, y = step(model, x, u - model.p_ref0, w_eff[k] - model.w_op)
        u_all[k] = u
        y_all[k] = y + model.y_op
        p_prev = p_prev + alpha * (np.minimum(u, p_avail[k]) - p_prev)
        p_out[k] = p_prev
    return SimTrace(
        w_eff=np.array(w_eff, dtype=float), u=u_all, p_out=p_out,
        f_t=y_all[:, 0::2], t_s=y_all[:, 1::2], lam=lam, solve_ms=solve_ms, x=xs,
        fallbacks=getattr(dispatcher, "fallbacks", 0),
    )


@dataclass
class Experiment:
    """Everything shared by the controllers of one paired-seed comparison."""

    cfg: Config
    seed: int
    model: FarmModel
    params: SurrogateParams
    w_eff: np.ndarray
    fit: OfflineFit | None = None

    @classmethod
    def create(cls, cfg: Config, seed: int) -> "Experiment":
        model = build_model(cfg)
        w_eff = generate_wind(scenario_from_config(cfg, seed))
        return cls(cfg, seed, model, surrogate_params(cfg), w_eff)

    def offline(self) -> OfflineFit:
        if self.fit is None:
            self.fit = fit_offline(self.cfg, self.model, self.seed)
        return self.fit

    def dispatcher(self, kind: str, r: float | None = None, backend=None):
        cfg = self.cfg
        n = self.model.n_wt
        if kind == "scheduler":
            return Scheduler(self.model.p_ref0)
        if kind == "swf":
            return SwfDispatcher(float(self.model.p_ref0.sum()), cfg.weights.rated_power,
                                 self.params.swept_half, cfg.swf_cp_max)
        if kind != "drmpc":
            raise ValueError(f"unknown controller {kind!r}")
        fit = self.offline()
        wc = cfg.weights
        weights = Weights.default_template(
            cfg.horizon, n, wc.r if r is None else r, wc.lambda_penalty,
            wc.rated_power, wc.tower_scale, wc.shaft_scale)
        ctl = DRMPCController(
            self.model, FarmPredictor(tuple(fit.models), cfg.horizon), fit.ambiguity, weights,
            ConstraintSpec.symmetric_box(n, cfg.constraints.bound, cfg.constraints.prob),
            backend=backend, strict_balance=cfg.strict_balance,
        )
        return DrmpcDispatcher(ctl, fit.models, self.model.w_op)

    def run(self, kind: str, r: float | None = None, backend=None) -> SimTrace:
        return simulate(self.model, self.dispatcher(kind, r, backend), self.w_eff, self.params,
                        self.cfg.power_tau, self.cfg.record_solve_time)


def run_scheduler(cfg: Config, seed: int = 0) -> SimTrace:
    return Experiment.create(cfg, seed).run("scheduler")


def run_swf_dispatch(cfg: Config, seed: int = 0) -> SimTrace:
    return Experiment.create(cfg, seed).run("swf")


def run_drmpc(cfg: Config, seed: int = 0, r: float | None = None) -> SimTrace:
    return Experiment.create(cfg, seed).run("drmpc", r)


# -- metrics -----------------------------------------------------------------------

@dataclass
class MetricsReport:
    J_p: float
    J_s: float
    J_t: float
    ratios: dict | None = None

    def as_dict(self) -> dict:
        out = {"J_p": self.J_p, "J_s": self.J_s, "J_t": self.J_t}
        if self.ratios is not None:
            out.update({f"{k}_pct": v for k, v in self.ratios.items()})
        return out


def compute_metrics(trace: SimTrace, baseline: "MetricsReport | SimTrace | None" = None,
                    rated_power: float = 5.0e6, shaft_scale: float = TRACE_SCALE_SHAFT,
                    tower_scale: float = TRACE_SCALE_TOWER) -> MetricsReport:
    """Tracking error J_p and fatigue proxies J_s, J_t (std of farm-averaged loads).

    J_p normalizes the tracking error by rated power, so all three are dimensionless.
    """
    shapes = {trace.u.shape, trace.p_out.shape, trace.f_t.shape, trace.t_s.shape}
    if len(shapes) != 1:
        raise ValueError(f"trace series have mismatched shapes {shapes}")
    T, n = trace.u.shape
    err = (trace.p_out - trace.u) / rated_power
    J_p = float(np.sqrt(np.sum(err ** 2) / (T * n)))
    J_s = float(np.std(trace.t_s.sum(axis=1) / (n * shaft_scale)))
    J_t = float(np.std(trace.f_t.sum(axis=1) / (n * tower_scale)))
    report = MetricsReport(J_p, J_s, J_t)
    if baseline is not None:
        if isinstance(baseline, SimTrace):
            baseline = compute_metrics(baseline, None, rated_power, shaft_scale, tower_scale)
        report.ratios = {
            name: 100.0 * (getattr(report, name) / getattr(baseline, name))
            for name in ("J_p", "J_s", "J_t")
        }
    return report


# -- comparison table --------------------------------------------------------------

TABLE_HEADER = ["method", "J_p", "J_t", "J_s", "J_p_pct", "J_t_pct", "J_s_pct"]


@dataclass
class ComparisonRow:
    method: str
    report: MetricsReport
    fallbacks: int = 0


def compare(cfg: Config, r_values=(1.0, 500.0, 1e3, 1e4), seed: int = 0,
            include_swf: bool = True, backend=None):
    """Scheduler baseline, SWF and DR-MPC rows on one shared wind trace."""
    exp = Experiment.create(cfg, seed)
    base = compute_metrics(exp.run("scheduler"), rated_power=cfg.weights.rated_power)
    base.ratios = {"J_p": 100.0, "J_s": 100.0, "J_t": 100.0}
    rows = [ComparisonRow("Scheduler", base)]
    if include_swf:
        rows.append(ComparisonRow("SWF controller", compute_metrics(
            exp.run("swf"), base, rated_power=cfg.weights.rated_power)))
    for r in r_values:
        trace = exp.run("drmpc", r, backend)
        rows.append(ComparisonRow(f"DR-MPC r={r:g}", compute_metrics(
            trace, base, rated_power=cfg.weights.rated_power), trace.fallbacks))
    return rows


def write_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        for row in rows:
            rep = row.report
            writer.writerow([row.method] + [repr(float(v)) for v in (
                rep.J_p, rep.J_t, rep.J_s,
                rep.ratios["J_p"], rep.ratios["J_t"], rep.ratios["J_s"])])


def read_table(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != TABLE_HEADER:
            raise ValueError("unexpected comparison table header")
        rows = []
        for rec in reader:
            if not rec:
                continue
            v = [float(x) for x in rec[1:]]
            rows.append(ComparisonRow(rec[0], MetricsReport(
                J_p=v[0], J_t=v[1], J_s=v[2], ratios={"J_p": v[3], "J_t": v[4], "J_s": v[5]})))
    return rows


def format_table(rows) -> str:
    lines = [f"{'Method':<20}{'J_p':>12}{'J_t':>12}{'J_s':>12}"]
    for i, row in enumerate(rows):
        rep = row.report
        if i == 0:
            vals = [f"{rep.J_p:.4f}", f"{rep.J_t:.4f}", f"{rep.J_s:.4f}"]
        else:
            vals = [f"{rep.ratios[k]:.2f}%" for k in ("J_p", "J_t", "J_s")]
        lines.append(f"{row.method:<20}" + "".join(f"{v:>12}" for v in vals))
    return "\n".join(lines)

