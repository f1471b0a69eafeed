"""Deviation-variable turbine models and the block-diagonal wind-farm model."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.linalg import block_diag

from . import turbine as _surrogate
from .turbine import SurrogateParams


@dataclass(frozen=True)
class OperatingPoint:
    """Linearization point of one turbine (SI units, pitch in degrees)."""

    beta0: float
    omega_r0: float
    omega_g0: float
    P_wt0: float
    w0: float
    F_t0: float
    T_s0: float

    def __post_init__(self):
        for f in fields(self):
            if not np.isfinite(getattr(self, f.name)):
                raise ValueError(f"operating point field {f.name} is not finite")
        if self.w0 <= 0:
            raise ValueError("w0 must be positive")
        if self.P_wt0 < 0:
            raise ValueError("P_wt0 must be non-negative")


@dataclass(frozen=True, eq=False)
class TurbineLTI:
    """x+ = A x + B u + E w,  y = C x + D u + F w  in deviation variables.

    State (pitch, rotor speed, filtered generator speed), input the power
    reference, disturbance the effective wind speed, output (tower force,
    shaft torque).
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    C: np.ndarray
    D: np.ndarray
    F: np.ndarray
    op: OperatingPoint
    dt: float = 1.0

    def __post_init__(self):
        shapes = {"A": (3, 3), "B": (3, 1), "E": (3, 1), "C": (2, 3), "D": (2, 1), "F": (2, 1)}
        for name, shape in shapes.items():
            mat = np.array(getattr(self, name), dtype=float)
            if mat.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} has non-finite entries")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True, eq=False)
class FarmModel:
    """Block-diagonal stack of turbine models, in upstream-to-downstream order."""

    turbines: tuple
    A: np.ndarray = field(init=False)
    B: np.ndarray = field(init=False)
    C: np.ndarray = field(init=False)
    D: np.ndarray = field(init=False)
    E: np.ndarray = field(init=False)
    F: np.ndarray = field(init=False)

    def __post_init__(self):
        for name in "ABCDEF":
            mat = block_diag(*[getattr(t, name) for t in self.turbines])
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def n_wt(self) -> int:
        return len(self.turbines)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_w(self) -> int:
        return self.E.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def dt(self) -> float:
        return self.turbines[0].dt

    @property
    def p_ref0(self) -> np.ndarray:
        return np.array([t.op.P_wt0 for t in self.turbines])

    @property
    def w_op(self) -> np.ndarray:
        return np.array([t.op.w0 for t in self.turbines])

    @property
    def y_op(self) -> np.ndarray:
        """Operating-point outputs stacked as (F_t1, T_s1, F_t2, ...)."""
        return np.array([v for t in self.turbines for v in (t.op.F_t0, t.op.T_s0)])


def stack_farm(turbines) -> FarmModel:
    turbines = tuple(turbines)
    if not turbines:
        raise ValueError("a farm needs at least one turbine")
    dts = {t.dt for t in turbines}
    if len(dts) != 1:
        raise ValueError(f"turbines have mismatched sample times: {sorted(dts)}")
    return FarmModel(turbines)


def default_turbine(params: SurrogateParams | None = None) -> TurbineLTI:
    """Linearize the surrogate turbine at its operating point and discretize by ZOH."""
    params = SurrogateParams() if params is None else params
    op = _surrogate.trim(params)
    Ac, Bc, Ec, C, D, F = _surrogate.linearize_continuous(params, op)
    Ad, BEd = _surrogate.zoh(Ac, np.hstack([Bc, Ec]), params.dt)
    return TurbineLTI(
        A=Ad, B=BEd[:, :1], E=BEd[:, 1:], C=C, D=D, F=F,
        op=OperatingPoint(
            beta0=op.beta0, omega_r0=op.omega_r0, omega_g0=op.omega_g0,
            P_wt0=op.p_ref0, w0=op.w0, F_t0=op.f_t0, T_s0=op.t_s0,
        ),
        dt=params.dt,
    )


def step(model: FarmModel, x, u, w):
    """One step of the stacked deviation model; returns (x_next, y)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (model.n_x,) or u.shape != (model.n_u,) or w.shape != (model.n_w,):
        raise ValueError(
            f"expected x{(model.n_x,)}, u{(model.n_u,)}, w{(model.n_w,)}; "
            f"got {x.shape}, {u.shape}, {w.shape}"
        )
    x_next = model.A @ x + model.B @ u + model.E @ w
    y = model.C @ x + model.D @ u + model.F @ w
    return x_next, y


def wake_operating_winds(w0: float, n_wt: int, deficit: float) -> np.ndarray:
    """Expected mean effective wind at each turbine under a compounding wake deficit."""
    return w0 * deficit ** np.arange(n_wt)


def surrogate_farm(n_wt: int, params: SurrogateParams | None = None, w_op=None) -> FarmModel:
    """Farm of surrogate turbines, turbine i linearized at wind ``w_op[i]``."""
    params = SurrogateParams() if params is None else params
    if w_op is None:
        w_op = np.full(n_wt, params.w0)
    if len(w_op) != n_wt:
        raise ValueError("w_op needs one wind speed per turbine")
    return stack_farm(default_turbine(_replace(params, w0=float(w))) for w in w_op)


def _replace(params: SurrogateParams, **changes) -> SurrogateParams:
    data = asdict(params)
    data.update(changes)
    return SurrogateParams(**data)


# -- model files ---------------------------------------------------------------
#
# {"n_wt": 2, "dt": 1.0,
#  "turbines": [{"matrices": {"A": [[..],..], "B": .., "C": .., "D": .., "E": .., "F": ..},
#                "operating_point": {"beta0": .., ..}},
#               {"params": {"w0": 11.2, ...}}]}
#
# Matrices are row-major nested lists.  A turbine given by "params" is built
# with default_turbine; omitted params take the SurrogateParams defaults and
# "dt" is inherited from the file.


def load_model_file(path) -> FarmModel:
    data = json.loads(Path(path).read_text())
    return model_from_dict(data)


def model_from_dict(data: dict) -> FarmModel:
    dt = float(data.get("dt", 1.0))
    entries = data["turbines"]
    if "n_wt" in data and int(data["n_wt"]) != len(entries):
        raise ValueError(f"n_wt={data['n_wt']} but {len(entries)} turbines listed")
    turbines = []
    for entry in entries:
        if "matrices" in entry:
            mats = {k: np.array(v, dtype=float) for k, v in entry["matrices"].items()}
            op = OperatingPoint(**entry["operating_point"])
            turbines.append(TurbineLTI(op=op, dt=dt, **mats))
        elif "params" in entry:
            params = SurrogateParams(**{"dt": dt, **entry["params"]})
            turbines.append(default_turbine(params))
        else:
            raise ValueError("each turbine needs either 'matrices' or 'params'")
    return stack_farm(turbines)


def model_to_dict(model: FarmModel) -> dict:
    return {
        "n_wt": model.n_wt,
        "dt": model.dt,
        "turbines": [
            {
                "matrices": {name: getattr(t, name).tolist() for name in "ABCDEF"},
                "operating_point": asdict(t.op),
            }
            for t in model.turbines
        ],
    }


def save_model_file(model: FarmModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2))
