"""Input-convex neural networks for zone-temperature-change prediction.

The passthrough weights between consecutive hidden layers are clamped
non-negative after every update, and activations are convex non-decreasing,
so the output is convex in the designated inputs. Input columns that receive
recursively fed-back predictions during multi-step rollout are additionally
weight-clamped non-negative at every layer: that keeps the composed
multi-step map convex in the first-step decision variables. Control-input
columns stay unconstrained (they enter each step directly, hence affinely).

The partial variant routes disturbance-style inputs through a separate
unconstrained context path whose per-layer output shifts the convex path's
pre-activations; for any fixed context the network is an ICNN in the convex
inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import DimensionMismatch, Diverged

MODE_FICNN = "ficnn"
MODE_PICNN = "picnn"


@dataclass(frozen=True)
class IcnnArchitecture:
    n_cvx: int
    n_ncvx: int
    hidden: tuple[int, ...] = (20, 20)
    relu_offset: float = 0.0
    mode: str = MODE_PICNN
    #: convex-input columns whose weights are clamped >= 0 at every layer
    #: (the recursively fed-back features)
    nonneg_cvx_mask: tuple[bool, ...] = ()

    def __post_init__(self):
        if self.mode not in (MODE_FICNN, MODE_PICNN):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == MODE_FICNN and self.n_ncvx:
            raise ValueError("fully convex network takes no context inputs")
        mask = self.nonneg_cvx_mask or tuple(False for _ in range(self.n_cvx))
        if len(mask) != self.n_cvx:
            raise ValueError("nonneg_cvx_mask length must equal n_cvx")
        object.__setattr__(self, "nonneg_cvx_mask", tuple(bool(m) for m in mask))


@dataclass(frozen=True)
class TrainConfig:
    step_size: float = 0.02
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")


@dataclass
class IcnnModel:
    arch: IcnnArchitecture
    w_x: list[np.ndarray]  # convex inputs into every layer (incl. output)
    w_z: list[np.ndarray]  # passthrough, >= 0; w_z[0] unused placeholder
    w_v: list[np.ndarray]  # context inputs into every layer (picnn only)
    bias: list[np.ndarray]
    x_mean: np.ndarray
    x_scale: np.ndarray
    v_mean: np.ndarray
    v_scale: np.ndarray
    y_mean: float
    y_scale: float
    final_loss: float = float("nan")

    @property
    def n_layers(self) -> int:
        return len(self.arch.hidden)

    def clamp(self) -> None:
        """Re-impose the sign constraints (idempotent)."""
        for l in range(1, self.n_layers + 1):
            np.maximum(self.w_z[l], 0.0, out=self.w_z[l])
        mask = np.asarray(self.arch.nonneg_cvx_mask)
        if mask.any():
            for w in self.w_x:
                w[:, mask] = np.maximum(w[:, mask], 0.0)

    # --- persistence ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": "icnn",
            "arch": {**asdict(self.arch), "hidden": list(self.arch.hidden),
                     "nonneg_cvx_mask": list(self.arch.nonneg_cvx_mask)},
            "w_x": [w.tolist() for w in self.w_x],
            "w_z": [w.tolist() for w in self.w_z],
            "w_v": [w.tolist() for w in self.w_v],
            "bias": [w.tolist() for w in self.bias],
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "v_mean": self.v_mean.tolist(),
            "v_scale": self.v_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "final_loss": self.final_loss,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def from_dict(doc: dict) -> "IcnnModel":
        arch_doc = dict(doc["arch"])
        arch = IcnnArchitecture(
            n_cvx=arch_doc["n_cvx"], n_ncvx=arch_doc["n_ncvx"],
            hidden=tuple(arch_doc["hidden"]), relu_offset=arch_doc["relu_offset"],
            mode=arch_doc["mode"], nonneg_cvx_mask=tuple(arch_doc["nonneg_cvx_mask"]),
        )
        as_arrays = lambda key: [np.asarray(w, dtype=float) for w in doc[key]]
        return IcnnModel(
            arch=arch, w_x=as_arrays("w_x"), w_z=as_arrays("w_z"),
            w_v=as_arrays("w_v"), bias=as_arrays("bias"),
            x_mean=np.asarray(doc["x_mean"]), x_scale=np.asarray(doc["x_scale"]),
            v_mean=np.asarray(doc["v_mean"]), v_scale=np.asarray(doc["v_scale"]),
            y_mean=doc["y_mean"], y_scale=doc["y_scale"],
            final_loss=doc["final_loss"],
        )

    @staticmethod
    def load(path) -> "IcnnModel":
        with open(path) as fh:
            return IcnnModel.from_dict(json.load(fh))


def init_model(arch: IcnnArchitecture, seed: int = 0, weight_scale: float | None = None) -> IcnnModel:
    """Random initialization honoring the sign constraints."""
    rng = np.random.default_rng(seed)
    widths = list(arch.hidden) + [1]
    w_x, w_z, w_v, bias = [], [], [], []
    for l, width in enumerate(widths):
        fan_in = arch.n_cvx + arch.n_ncvx + (widths[l - 1] if l > 0 else 0)
        s = weight_scale if weight_scale is not None else np.sqrt(1.0 / max(1, fan_in))
        w_x.append(rng.normal(0.0, s, size=(width, arch.n_cvx)))
        if l == 0:
            w_z.append(np.zeros((width, 1)))  # placeholder, first layer has no z input
        else:
            w_z.append(rng.uniform(0.0, 2.0 * s, size=(width, widths[l - 1])))
        if arch.mode == MODE_PICNN:
            w_v.append(rng.normal(0.0, s, size=(width, arch.n_ncvx)))
        else:
            w_v.append(np.zeros((width, 0)))
        bias.append(np.zeros(width))
    model = IcnnModel(
        arch=arch, w_x=w_x, w_z=w_z, w_v=w_v, bias=bias,
        x_mean=np.zeros(arch.n_cvx), x_scale=np.ones(arch.n_cvx),
        v_mean=np.zeros(arch.n_ncvx), v_scale=np.ones(arch.n_ncvx),
        y_mean=0.0, y_scale=1.0,
    )
    model.clamp()
    return model


def _act(model: IcnnModel, t: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, t + model.arch.relu_offset)


def _act_grad(model: IcnnModel, t: np.ndarray) -> np.ndarray:
    # subgradient 0 at the kink
    return (t + model.arch.relu_offset > 0.0).astype(float)


def _forward_std(model: IcnnModel, x: np.ndarray, v: np.ndarray, tape: list | None = None):
    """Layered evaluation on standardized inputs; optionally records
    pre-activations for backprop."""
    z = None
    for l in range(model.n_layers + 1):
        pre = x @ model.w_x[l].T + model.bias[l]
        if model.arch.mode == MODE_PICNN and model.arch.n_ncvx:
            pre = pre + v @ model.w_v[l].T
        if l > 0:
            pre = pre + z @ model.w_z[l].T
        if tape is not None:
            tape.append((pre, z))
        z = _act(model, pre) if l < model.n_layers else pre
    return z[..., 0]


def _prepare(model: IcnnModel, x_cvx, x_ncvx):
    x = np.asarray(x_cvx, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.arch.n_cvx:
        raise DimensionMismatch(
            f"x_cvx has {x.shape[1]} columns, architecture expects {model.arch.n_cvx}"
        )
    if model.arch.n_ncvx:
        if x_ncvx is None:
            raise DimensionMismatch("partially convex model needs x_ncvx")
        v = np.atleast_2d(np.asarray(x_ncvx, dtype=float))
        if v.shape[1] != model.arch.n_ncvx:
            raise DimensionMismatch(
                f"x_ncvx has {v.shape[1]} columns, architecture expects {model.arch.n_ncvx}"
            )
        v = (v - model.v_mean) / model.v_scale
    else:
        v = np.zeros((x.shape[0], 0))
    x = (x - model.x_mean) / model.x_scale
    return x, v, single


def forward(model: IcnnModel, x_cvx, x_ncvx=None):
    """Temperature-change prediction in raw units; batched over rows."""
    x, v, single = _prepare(model, x_cvx, x_ncvx)
    out = _forward_std(model, x, v) * model.y_scale + model.y_mean
    return float(out[0]) if single else out


def gradient(model: IcnnModel, x_cvx, x_ncvx=None):
    """d output / d x_cvx in raw units, by reverse-mode differentiation."""
    x, v, single = _prepare(model, x_cvx, x_ncvx)
    tape: list = []
    _forward_std(model, x, v, tape=tape)
    up = np.ones((x.shape[0], 1))
    grad = up @ model.w_x[model.n_layers]
    for l in range(model.n_layers - 1, -1, -1):
        pre, _ = tape[l]
        up = (up @ model.w_z[l + 1]) * _act_grad(model, pre)
        grad = grad + up @ model.w_x[l]
    grad = grad * (model.y_scale / model.x_scale)
    return grad[0] if single else grad


def _loss_and_grads(model: IcnnModel, x, v, y):
    """Standardized-space MSE and parameter gradients for one batch."""
    tape: list = []
    out = _forward_std(model, x, v, tape=tape)
    err = out - y
    n = len(y)
    loss = float(np.mean(err * err))

    g_wx = [np.zeros_like(w) for w in model.w_x]
    g_wz = [np.zeros_like(w) for w in model.w_z]
    g_wv = [np.zeros_like(w) for w in model.w_v]
    g_b = [np.zeros_like(b) for b in model.bias]

    delta = (2.0 / n) * err[:, None]  # d loss / d pre at the output layer
    acts = [None]
    for l in range(model.n_layers):
        pre, _ = tape[l]
        acts.append(_act(model, pre))
    for l in range(model.n_layers, -1, -1):
        pre, _ = tape[l]
        g_wx[l] += delta.T @ x
        g_b[l] += delta.sum(axis=0)
        if model.arch.mode == MODE_PICNN and model.arch.n_ncvx:
            g_wv[l] += delta.T @ v
        if l > 0:
            g_wz[l] += delta.T @ acts[l]
            delta = (delta @ model.w_z[l]) * _act_grad(model, tape[l - 1][0])
    return loss, g_wx, g_wz, g_wv, g_b


def train(
    rows_cvx: np.ndarray,
    rows_ncvx: np.ndarray | None,
    targets: np.ndarray,
    arch: IcnnArchitecture,
    cfg: TrainConfig,
) -> IcnnModel:
    """Mini-batch gradient descent on MSE with projection after every update.

    Deterministic under the config seed; raises Diverged if the loss leaves
    the finite range.
    """
    X = np.asarray(rows_cvx, dtype=float)
    y = np.asarray(targets, dtype=float)
    if len(X) == 0:
        raise ValueError("empty training set")
    model = init_model(arch, seed=cfg.seed)
    model.x_mean = X.mean(axis=0)
    model.x_scale = np.where(X.std(axis=0) > 1e-9, X.std(axis=0), 1.0)
    if arch.n_ncvx:
        V = np.asarray(rows_ncvx, dtype=float)
        model.v_mean = V.mean(axis=0)
        model.v_scale = np.where(V.std(axis=0) > 1e-9, V.std(axis=0), 1.0)
        Vs = (V - model.v_mean) / model.v_scale
    else:
        Vs = np.zeros((len(X), 0))
    model.y_mean = float(y.mean())
    model.y_scale = float(y.std()) if y.std() > 1e-9 else 1.0
    Xs = (X - model.x_mean) / model.x_scale
    ys = (y - model.y_mean) / model.y_scale

    rng = np.random.default_rng(cfg.seed + 1)
    n = len(Xs)
    last = float("nan")
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start: start + cfg.batch_size]
            loss, g_wx, g_wz, g_wv, g_b = _loss_and_grads(model, Xs[idx], Vs[idx], ys[idx])
            if not np.isfinite(loss):
                raise Diverged("training loss is not finite")
            lr = cfg.step_size
            for l in range(model.n_layers + 1):
                model.w_x[l] -= lr * g_wx[l]
                model.bias[l] -= lr * g_b[l]
                if l > 0:
                    model.w_z[l] -= lr * g_wz[l]
                if model.arch.mode == MODE_PICNN and model.arch.n_ncvx:
                    model.w_v[l] -= lr * g_wv[l]
            model.clamp()
            last = loss
    model.final_loss = last
    return model


# --- zone-data binding and recursive prediction ------------------------------

from .features import (  # noqa: E402  (binding layer sits below the core net)
    ACTUATOR_ENERGY,
    ACTUATOR_OPTIONS,
    ChannelRoles,
    MlSeriesArrays,
    ml_series_arrays,
)
from .timeseries import TimeSeries  # noqa: E402


@dataclass(frozen=True)
class IcnnDataConfig:
    """How a network binds to logged series channels.

    Convex inputs per step k: the last ``n_lag`` temperature changes (fed back
    recursively beyond the first step) and the last ``n_lag`` actuator drives.
    Context inputs: ambient and neighbor temperatures relative to the
    prediction anchor (the last measured room temperature), lagged horizontal
    irradiance, and time-of-day encodings for the target instant.
    """

    roles: ChannelRoles
    actuator_option: str = ACTUATOR_ENERGY
    n_lag: int = 2
    mode: str = MODE_PICNN

    def __post_init__(self):
        if self.actuator_option not in ACTUATOR_OPTIONS:
            raise ValueError(f"unknown actuator option {self.actuator_option!r}")
        if self.n_lag < 1:
            raise ValueError("n_lag must be >= 1")

    @property
    def n_cvx_core(self) -> int:
        return 2 * self.n_lag

    @property
    def n_ctx(self) -> int:
        return 2 + self.n_lag + 2

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "IcnnDataConfig":
        return IcnnDataConfig(
            roles=ChannelRoles(**d["roles"]), actuator_option=d["actuator_option"],
            n_lag=d["n_lag"], mode=d["mode"],
        )


def make_architecture(cfg: IcnnDataConfig, hidden=(20, 20), relu_offset: float = 0.0) -> IcnnArchitecture:
    """Network shape for the binding; temperature-change lags are the
    recursively fed slots and get the non-negativity mask."""
    mask = [True] * cfg.n_lag + [False] * cfg.n_lag
    if cfg.mode == MODE_PICNN:
        return IcnnArchitecture(
            n_cvx=cfg.n_cvx_core, n_ncvx=cfg.n_ctx, hidden=tuple(hidden),
            relu_offset=relu_offset, mode=MODE_PICNN, nonneg_cvx_mask=tuple(mask),
        )
    mask = mask + [False] * cfg.n_ctx
    return IcnnArchitecture(
        n_cvx=cfg.n_cvx_core + cfg.n_ctx, n_ncvx=0, hidden=tuple(hidden),
        relu_offset=relu_offset, mode=MODE_FICNN, nonneg_cvx_mask=tuple(mask),
    )


def _tod_encoding(times) -> np.ndarray:
    tod = 2.0 * np.pi * np.mod(np.asarray(times, dtype=float), 86400.0) / 86400.0
    return np.column_stack([np.sin(tod), np.cos(tod)])


def build_training_rows(arrays: MlSeriesArrays, cfg: IcnnDataConfig):
    """(x_cvx, x_ctx, target) matrices; origins need n_lag known changes.

    Drivers (actuator, weather) carry the target interval's index; change
    lags sit behind the origin and are the recursively fed slots.
    """
    n = arrays.n
    step = arrays.times[1] - arrays.times[0]
    t = np.arange(cfg.n_lag, n - 1)
    cvx_cols = [arrays.dy[t - lag] for lag in range(cfg.n_lag)]
    cvx_cols += [arrays.u[t + 1 - lag] for lag in range(cfg.n_lag)]
    x_cvx = np.column_stack(cvx_cols)
    anchor = arrays.y[t]
    neighbor = arrays.y - arrays.nbdiff
    ctx_cols = [arrays.amb[t + 1] - anchor, neighbor[t] - anchor]
    ctx_cols += [arrays.ihor[t + 1 - lag] for lag in range(cfg.n_lag)]
    x_ctx = np.column_stack(ctx_cols + [_tod_encoding(arrays.times[t] + step)])
    target = arrays.dy[t + 1]
    return x_cvx, x_ctx, target


@dataclass
class IcnnZoneModel:
    """Trained network plus its channel binding."""

    net: IcnnModel
    cfg: IcnnDataConfig

    def _split(self, x_cvx, x_ctx):
        if self.cfg.mode == MODE_FICNN:
            return np.column_stack([x_cvx, x_ctx]), None
        return x_cvx, x_ctx

    def predict_change(self, x_cvx, x_ctx):
        single = np.ndim(x_cvx) == 1
        x, v = self._split(np.atleast_2d(x_cvx), np.atleast_2d(x_ctx))
        out = forward(self.net, x, v)
        return float(out[0]) if single else out

    def change_gradient(self, x_cvx, x_ctx) -> np.ndarray:
        """Gradient with respect to the core convex features only."""
        x, v = self._split(np.atleast_2d(x_cvx), np.atleast_2d(x_ctx))
        g = gradient(self.net, x, v)
        return g[:, : self.cfg.n_cvx_core]

    def horizon_predictions(self, ts: TimeSeries, steps: int):
        """Recursive level predictions at the final step, batched over all
        admissible origins of the series."""
        arrays = ml_series_arrays(ts, self.cfg.roles, self.cfg.actuator_option)
        n = arrays.n
        nl = self.cfg.n_lag
        step = arrays.times[1] - arrays.times[0]
        t = np.arange(nl, n - steps)
        if len(t) == 0:
            raise ValueError("series too short for the requested horizon")
        dy_buf = np.empty((len(t), nl + steps))
        for lag in range(nl):
            dy_buf[:, nl - 1 - lag] = arrays.dy[t - lag]
        anchor = arrays.y[t]
        neighbor = arrays.y - arrays.nbdiff  # measured disturbance trajectory
        level = anchor.copy()
        for k in range(1, steps + 1):
            cvx_cols = [dy_buf[:, nl - 1 + k - 1 - lag] for lag in range(nl)]
            cvx_cols += [arrays.u[t + k - lag] for lag in range(nl)]
            x_cvx = np.column_stack(cvx_cols)
            ctx_cols = [arrays.amb[t + k] - anchor, neighbor[t + k - 1] - anchor]
            ctx_cols += [arrays.ihor[t + k - lag] for lag in range(nl)]
            x_ctx = np.column_stack(ctx_cols + [_tod_encoding(arrays.times[t] + k * step)])
            delta = self.predict_change(x_cvx, x_ctx)
            dy_buf[:, nl - 1 + k] = delta
            level = level + delta
        return level, arrays.y[t + steps]

    # --- persistence -----------------------------------------------------
    def save(self, path) -> None:
        doc = self.net.to_dict()
        doc["binding"] = self.cfg.to_dict()
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path) -> "IcnnZoneModel":
        with open(path) as fh:
            doc = json.load(fh)
        return IcnnZoneModel(net=IcnnModel.from_dict(doc), cfg=IcnnDataConfig.from_dict(doc["binding"]))


def fit_zone_model(
    data,
    cfg: IcnnDataConfig,
    hidden=(20, 20),
    relu_offset: float = 0.0,
    train_cfg: TrainConfig | None = None,
) -> IcnnZoneModel:
    """Build rows from one series or fold list and train the network."""
    series = [data] if isinstance(data, TimeSeries) else list(data)
    xc, xx, yy = [], [], []
    for ts in series:
        arrays = ml_series_arrays(ts, cfg.roles, cfg.actuator_option)
        a, b, c = build_training_rows(arrays, cfg)
        xc.append(a)
        xx.append(b)
        yy.append(c)
    x_cvx, x_ctx, target = np.vstack(xc), np.vstack(xx), np.concatenate(yy)
    arch = make_architecture(cfg, hidden=hidden, relu_offset=relu_offset)
    if cfg.mode == MODE_FICNN:
        net = train(np.column_stack([x_cvx, x_ctx]), None, target, arch, train_cfg or TrainConfig())
    else:
        net = train(x_cvx, x_ctx, target, arch, train_cfg or TrainConfig())
    return IcnnZoneModel(net=net, cfg=cfg)


@dataclass(frozen=True)
class RolloutWindow:
    """Measurement history plus exogenous forecasts for a recursive rollout.

    Intervals are numbered so 0 is the last completed one and 1 .. steps are
    predicted. ``y_history`` holds the last n_lag + 1 measured levels (oldest
    first, ending at interval 0). ``u_past`` holds the applied drives for
    intervals -(n_lag - 2) .. 0. ``amb``, ``nb`` and ``ihor`` each cover
    intervals -(n_lag - 2) .. steps (length steps + n_lag - 1).
    """

    y_history: np.ndarray
    u_past: np.ndarray
    amb: np.ndarray
    nb: np.ndarray
    ihor: np.ndarray
    origin_time: float
    step_seconds: float


def rollout(model: IcnnZoneModel, window: RolloutWindow, u_future: np.ndarray,
            steps: int, want_gradient: bool = False):
    """Accumulated level trajectory; optionally the Jacobian d level_k / d u_j
    with ``u_future[j]`` the drive of interval j + 1.

    Predicted changes feed the next step's change lags, which is exactly the
    path the non-negative weight mask keeps convex.
    """
    nl = model.cfg.n_lag
    y_hist = np.asarray(window.y_history, dtype=float)
    anchor = float(y_hist[-1])
    dy_hist = np.diff(y_hist)[-nl:]
    dy_buf = np.concatenate([dy_hist, np.zeros(steps)])  # index nl-1+i <-> dy of interval i
    u_all = np.concatenate([np.asarray(window.u_past, dtype=float), np.asarray(u_future, dtype=float)])
    off_u = nl - 2  # u_all index off_u + i <-> drive of interval i
    off_d = nl - 2  # same layout for the exogenous channels

    levels = np.zeros(steps)
    level = anchor
    D = np.zeros((steps + 1, steps)) if want_gradient else None
    for k in range(1, steps + 1):
        x_cvx = np.concatenate([
            dy_buf[nl - 1 + k - 1 - np.arange(nl)],
            u_all[off_u + k - np.arange(nl)],
        ])
        ctx = np.concatenate([
            [window.amb[off_d + k] - anchor, window.nb[off_d + k - 1] - anchor],
            window.ihor[off_d + k - np.arange(nl)],
            _tod_encoding(window.origin_time + k * window.step_seconds)[0],
        ])
        delta = model.predict_change(x_cvx, ctx)
        dy_buf[nl - 1 + k] = delta
        level += delta
        levels[k - 1] = level
        if want_gradient:
            g = model.change_gradient(x_cvx, ctx)[0]
            for j in range(steps):
                val = 0.0
                for lag in range(nl):
                    if k - lag == j + 1:  # direct dependence on decision j
                        val += g[nl + lag]
                    fed = k - 1 - lag  # change-lag slot holds interval fed's delta
                    if 1 <= fed <= steps:
                        val += g[lag] * D[fed, j]
                D[k, j] = val
    if not want_gradient:
        return levels
    jac = np.cumsum(D[1:, :], axis=0)
    return levels, jac
