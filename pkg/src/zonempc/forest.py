"""Random forests over uncontrollable inputs with per-leaf affine maps over
the controllable inputs, built separately for every prediction step so the
downstream optimization stays convex.

The per-step feature rule follows the non-recursion construction: a sliding
two-sample window supplies lagged features, measured room-temperature terms
are dropped once the window moves past the prediction origin (never replaced
by predicted values), while disturbance terms may come from forecasts. Each
step-k model predicts the room-temperature change during step k; level
predictions accumulate the per-step changes onto the last measurement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import FeatureDimensionMismatch, NotEnoughData, TooShort
from .features import (
    ACTUATOR_ENERGY,
    ACTUATOR_OPTIONS,
    ChannelRoles,
    MlSeriesArrays,
    ml_series_arrays,
)
from .timeseries import TimeSeries


@dataclass(frozen=True)
class ForestHyper:
    n_trees: int = 200
    min_samples_leaf: int = 200
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ForestDataConfig:
    roles: ChannelRoles
    actuator_option: str = ACTUATOR_ENERGY
    n_lag: int = 2

    def __post_init__(self):
        if self.actuator_option not in ACTUATOR_OPTIONS:
            raise ValueError(f"unknown actuator option {self.actuator_option!r}")
        if self.n_lag < 1:
            raise ValueError("n_lag must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ForestDataConfig":
        return ForestDataConfig(
            roles=ChannelRoles(**d["roles"]),
            actuator_option=d["actuator_option"],
            n_lag=d["n_lag"],
        )


@dataclass(frozen=True)
class StepFeatureSpec:
    """Which lagged quantities feed the step-k model.

    Relative times are offsets from the prediction origin; the target is the
    temperature change during step k. Measured-only features (temperature
    changes, room-to-neighbor differences) keep only offsets <= 0, so no
    predicted output ever becomes a model input.
    """

    k: int
    n_lag: int
    u_offsets: tuple[int, ...] = field(init=False)
    d_offsets: tuple[int, ...] = field(init=False)
    measured_offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("step index must be >= 1")
        # channels are interval aggregates: the drivers (valve duty, weather)
        # of the target interval carry the target's own offset k, while the
        # measured room-state window slides behind it and is clipped at the
        # origin, never substituted with predictions
        object.__setattr__(self, "u_offsets", tuple(range(-(self.n_lag - 1), self.k + 1)))
        object.__setattr__(self, "d_offsets", tuple(range(self.k - self.n_lag + 1, self.k + 1)))
        object.__setattr__(
            self, "measured_offsets",
            tuple(j for j in range(self.k - self.n_lag, self.k) if j <= 0),
        )

    @property
    def xc_width(self) -> int:
        return len(self.u_offsets)

    @property
    def xd_width(self) -> int:
        # dy + room-neighbor diff (measured only), ambient + irradiance
        # (forecastable), 4 time encodings at the target instant
        return 2 * len(self.measured_offsets) + 2 * len(self.d_offsets) + 4


def _time_encodings(times: np.ndarray) -> np.ndarray:
    tod = 2.0 * np.pi * np.mod(times, 86400.0) / 86400.0
    doy = 2.0 * np.pi * np.mod(times / 86400.0, 365.25) / 365.25
    return np.column_stack([np.sin(tod), np.cos(tod), np.sin(doy), np.cos(doy)])


def step_design(arrays: MlSeriesArrays, spec: StepFeatureSpec, max_step: int | None = None):
    """(X_d, X_c, target) matrices over every admissible origin.

    ``max_step`` trims the origins to those usable by a deeper step model so
    every model of a horizon set trains on the identical rows.
    """
    n = arrays.n
    t_min = spec.n_lag
    t_max = n - 1 - max(spec.k, max_step or 0)
    if t_max < t_min:
        raise TooShort(f"series too short for step {spec.k}")
    t = np.arange(t_min, t_max + 1)

    xd_cols = []
    for j in spec.measured_offsets:
        xd_cols.append(arrays.dy[t + j])
    for j in spec.measured_offsets:
        xd_cols.append(arrays.nbdiff[t + j])
    for j in spec.d_offsets:
        xd_cols.append(arrays.amb[t + j])
    for j in spec.d_offsets:
        xd_cols.append(arrays.ihor[t + j])
    enc = _time_encodings(arrays.times[t] + spec.k * (arrays.times[1] - arrays.times[0]))
    X_d = np.column_stack(xd_cols + [enc]) if xd_cols else enc

    X_c = np.column_stack([arrays.u[t + j] for j in spec.u_offsets])
    target = arrays.y[t + spec.k] - arrays.y[t + spec.k - 1]
    return X_d, X_c, target


# --- trees -----------------------------------------------------------------

RIDGE_FALLBACK = 1e-6


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_id: np.ndarray
    leaf_w: np.ndarray
    leaf_b: np.ndarray
    leaf_n: np.ndarray

    def leaves_for(self, X_d: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X_d), dtype=int)
        active = self.leaf_id[node] < 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X_d[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.leaf_id[node] < 0
        return self.leaf_id[node]


def _fit_leaf(X_c: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    design = np.column_stack([np.ones(len(y)), X_c])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        gram = design.T @ design + RIDGE_FALLBACK * np.eye(design.shape[1])
        coef = np.linalg.solve(gram, design.T @ y)
    return coef[1:], float(coef[0])


def _best_split(X_d: np.ndarray, y: np.ndarray, min_leaf: int):
    n, n_feat = X_d.shape
    best = None  # (cost, feature, threshold)
    for f in range(n_feat):
        order = np.argsort(X_d[:, f], kind="stable")
        xs = X_d[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum, total_sq = csum[-1], csq[-1]
        counts = np.arange(1, n)
        valid = (counts >= min_leaf) & (n - counts >= min_leaf) & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        i = counts[valid]
        left_cost = csq[i - 1] - csum[i - 1] ** 2 / i
        right_cost = (total_sq - csq[i - 1]) - (total_sum - csum[i - 1]) ** 2 / (n - i)
        cost = left_cost + right_cost
        j = int(np.argmin(cost))
        if best is None or cost[j] < best[0] - 1e-12:
            thr = 0.5 * (xs[i[j] - 1] + xs[i[j]])
            best = (float(cost[j]), f, thr)
    return best


def _grow_tree(X_d, X_c, y, min_leaf: int, rng: np.random.Generator) -> _Tree:
    n = len(y)
    boot = rng.integers(0, n, size=n)
    Xd_b, Xc_b, y_b = X_d[boot], X_c[boot], y[boot]

    feature, threshold, left, right, leaf_id = [], [], [], [], []
    leaf_w, leaf_b, leaf_n = [], [], []

    def make_node(rows: np.ndarray) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_id.append(-1)
        yy = y_b[rows]
        parent_cost = float(np.sum(yy * yy) - yy.sum() ** 2 / len(yy))
        split = None
        if len(rows) >= 2 * min_leaf:
            split = _best_split(Xd_b[rows], yy, min_leaf)
        if split is None or split[0] >= parent_cost - 1e-12:
            lid = len(leaf_w)
            w, b = _fit_leaf(Xc_b[rows], yy)
            leaf_w.append(w)
            leaf_b.append(b)
            leaf_n.append(len(rows))
            leaf_id[node] = lid
            return node
        _, f, thr = split
        feature[node] = f
        threshold[node] = thr
        mask = Xd_b[rows, f] <= thr
        left[node] = make_node(rows[mask])
        right[node] = make_node(rows[~mask])
        return node

    make_node(np.arange(n))
    return _Tree(
        feature=np.array(feature), threshold=np.array(threshold),
        left=np.array(left), right=np.array(right), leaf_id=np.array(leaf_id),
        leaf_w=np.array(leaf_w), leaf_b=np.array(leaf_b), leaf_n=np.array(leaf_n),
    )


@dataclass
class ForestModel:
    """One prediction step: trees over X_d, affine leaf maps over X_c."""

    spec: StepFeatureSpec
    hyper: ForestHyper
    trees: list[_Tree]

    def _check_xd(self, X_d: np.ndarray):
        if X_d.shape[-1] != self.spec.xd_width:
            raise FeatureDimensionMismatch(
                f"X_d has {X_d.shape[-1]} features, spec expects {self.spec.xd_width}"
            )

    def affine_batch(self, X_d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tree-averaged (weights, intercept) for each X_d row."""
        X_d = np.atleast_2d(np.asarray(X_d, dtype=float))
        self._check_xd(X_d)
        w_sum = np.zeros((len(X_d), self.spec.xc_width))
        b_sum = np.zeros(len(X_d))
        for tree in self.trees:
            leaves = tree.leaves_for(X_d)
            w_sum += tree.leaf_w[leaves]
            b_sum += tree.leaf_b[leaves]
        return w_sum / len(self.trees), b_sum / len(self.trees)

    def extract_affine(self, x_d) -> tuple[np.ndarray, float]:
        w, b = self.affine_batch(np.atleast_2d(x_d))
        return w[0], float(b[0])

    def predict(self, x_d, x_c):
        """Temperature change: the looked-up affine map evaluated at x_c."""
        x_c = np.asarray(x_c, dtype=float)
        single = x_c.ndim == 1
        x_c2 = np.atleast_2d(x_c)
        if x_c2.shape[-1] != self.spec.xc_width:
            raise FeatureDimensionMismatch(
                f"x_c has {x_c2.shape[-1]} features, spec expects {self.spec.xc_width}"
            )
        w, b = self.affine_batch(np.atleast_2d(x_d))
        if single:
            # same evaluation an extract_affine caller would perform
            return float(np.dot(w[0], x_c2[0]) + b[0])
        return np.einsum("ij,ij->i", w, x_c2) + b


def fit_step_model(data, spec: StepFeatureSpec, hyper: ForestHyper,
                   cfg: ForestDataConfig, max_step: int | None = None) -> ForestModel:
    """Grow one per-step forest from a series or a list of fold series."""
    series = [data] if isinstance(data, TimeSeries) else list(data)
    xds, xcs, ys = [], [], []
    for ts in series:
        X_d, X_c, y = step_design(ml_series_arrays(ts, cfg.roles, cfg.actuator_option), spec,
                                  max_step=max_step)
        xds.append(X_d)
        xcs.append(X_c)
        ys.append(y)
    X_d, X_c, y = np.vstack(xds), np.vstack(xcs), np.concatenate(ys)
    if len(y) < hyper.min_samples_leaf:
        raise NotEnoughData(
            f"{len(y)} rows cannot satisfy min_samples_leaf={hyper.min_samples_leaf}"
        )
    seeds = np.random.SeedSequence(entropy=(hyper.seed, spec.k)).spawn(hyper.n_trees)
    trees = [
        _grow_tree(X_d, X_c, y, hyper.min_samples_leaf, np.random.default_rng(s))
        for s in seeds
    ]
    return ForestModel(spec=spec, hyper=hyper, trees=trees)


@dataclass
class ForestModelSet:
    """One forest per horizon step, sharing the data binding."""

    cfg: ForestDataConfig
    hyper: ForestHyper
    models: dict[int, ForestModel]

    @property
    def n_steps(self) -> int:
        return max(self.models)

    def horizon_predictions(self, ts: TimeSeries, steps: int) -> tuple[np.ndarray, np.ndarray]:
        """Level predictions at the final step over all admissible origins."""
        if steps > self.n_steps:
            raise TooShort(f"model set covers {self.n_steps} steps, asked {steps}")
        arrays = ml_series_arrays(ts, self.cfg.roles, self.cfg.actuator_option)
        t_min = self.cfg.n_lag
        t_max = arrays.n - 1 - steps
        if t_max < t_min:
            raise TooShort("series too short for the requested horizon")
        base = np.arange(t_min, t_max + 1)
        acc = arrays.y[base].copy()
        for k in range(1, steps + 1):
            model = self.models[k]
            # every step design starts at origin t_min, so our origins are its
            # leading rows
            X_d, X_c, _ = step_design(arrays, model.spec)
            acc = acc + model.predict(X_d[: len(base)], X_c[: len(base)])
        return acc, arrays.y[base + steps]

    def save(self, json_path, npz_path) -> None:
        manifest = {
            "kind": "rf",
            "cfg": self.cfg.to_dict(),
            "hyper": self.hyper.to_dict(),
            "steps": sorted(self.models),
            "n_lag": self.cfg.n_lag,
            "data_file": str(npz_path),
        }
        arrays = {}
        for k, model in self.models.items():
            for i, tree in enumerate(model.trees):
                pre = f"m{k}_t{i}_"
                arrays[pre + "feature"] = tree.feature
                arrays[pre + "threshold"] = tree.threshold
                arrays[pre + "left"] = tree.left
                arrays[pre + "right"] = tree.right
                arrays[pre + "leaf_id"] = tree.leaf_id
                arrays[pre + "leaf_w"] = tree.leaf_w
                arrays[pre + "leaf_b"] = tree.leaf_b
                arrays[pre + "leaf_n"] = tree.leaf_n
        np.savez_compressed(npz_path, **arrays)
        with open(json_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(json_path) -> "ForestModelSet":
        with open(json_path) as fh:
            manifest = json.load(fh)
        cfg = ForestDataConfig.from_dict(manifest["cfg"])
        hyper = ForestHyper(**manifest["hyper"])
        data = np.load(manifest["data_file"])
        models = {}
        for k in manifest["steps"]:
            spec = StepFeatureSpec(k=k, n_lag=cfg.n_lag)
            trees = []
            for i in range(hyper.n_trees):
                pre = f"m{k}_t{i}_"
                trees.append(_Tree(
                    feature=data[pre + "feature"], threshold=data[pre + "threshold"],
                    left=data[pre + "left"], right=data[pre + "right"],
                    leaf_id=data[pre + "leaf_id"], leaf_w=data[pre + "leaf_w"],
                    leaf_b=data[pre + "leaf_b"], leaf_n=data[pre + "leaf_n"],
                ))
            models[k] = ForestModel(spec=spec, hyper=hyper, trees=trees)
        return ForestModelSet(cfg=cfg, hyper=hyper, models=models)


def fit_horizon(data, n_steps: int, hyper: ForestHyper, cfg: ForestDataConfig) -> ForestModelSet:
    """Fit the per-step models for k = 1 .. n_steps, all on the same rows."""
    models = {
        k: fit_step_model(data, StepFeatureSpec(k=k, n_lag=cfg.n_lag), hyper, cfg,
                          max_step=n_steps)
        for k in range(1, n_steps + 1)
    }
    return ForestModelSet(cfg=cfg, hyper=hyper, models=models)
