"""Per-zone temperature networks with time-delayed inputs and output feedback.

A zone network is a plain feed-forward stack evaluated over a tapped input
vector [hour, power taps, environment taps, delayed zone temperature], with
affine pre/post scaling to [-1, 1].  Training runs open loop (actual delayed
temperatures fed as inputs); evaluation closes the loop by feeding
predictions back into the delayed-temperature taps.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import scg
from .errors import ConfigurationError, RejectedInputError
from .testbed import N_HOURS

ACTIVATIONS = ("sigmoid", "relu")


@dataclass(frozen=True)
class InputLayout:
    """Tap structure of the network input vector.

    Order: [t, P lags 0..tau1-1, per-signal env lags 0..tau2-1,
    T_z lags 1..tau3].  The controllable (X_C), environmental (X_E) and
    feedback (X_F) index sets partition everything after the hour scalar.
    """

    tau1: int
    tau2: int
    tau3: int
    n_env: int = 3

    def __post_init__(self):
        if self.tau1 < 1 or self.tau2 < 0 or self.tau3 < 0:
            raise ConfigurationError("need tau1 >= 1 and nonnegative tau2, tau3")

    @property
    def size(self) -> int:
        return 1 + self.tau1 + self.n_env * self.tau2 + self.tau3

    @property
    def idx_time(self) -> int:
        return 0

    @property
    def idx_power(self):
        return list(range(1, 1 + self.tau1))

    @property
    def idx_env(self):
        start = 1 + self.tau1
        return list(range(start, start + self.n_env * self.tau2))

    @property
    def idx_feedback(self):
        start = 1 + self.tau1 + self.n_env * self.tau2
        return list(range(start, start + self.tau3))

    @property
    def max_lag(self) -> int:
        return max(self.tau1 - 1, self.tau2 - 1, self.tau3)

    def to_json_dict(self):
        return {"kind": "narx", "tau1": self.tau1, "tau2": self.tau2,
                "tau3": self.tau3, "n_env": self.n_env}

    @classmethod
    def from_json_dict(cls, d):
        return cls(tau1=d["tau1"], tau2=d["tau2"], tau3=d["tau3"],
                   n_env=d.get("n_env", 3))


@dataclass(frozen=True)
class NetworkSpec:
    """Weights, biases, activations and scaling bounds of one trained net."""

    layout: object                       # InputLayout or a SLAMP layout
    weights: tuple                       # per hidden layer, (n_out, n_in)
    biases: tuple                        # per hidden layer, (n_out,)
    activations: tuple                   # per hidden layer, "sigmoid" | "relu"
    out_weights: np.ndarray              # (n_last,)
    out_bias: float
    in_lo: np.ndarray
    in_hi: np.ndarray
    out_lo: float
    out_hi: float

    def __post_init__(self):
        n_in = self.in_lo.size
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {act!r}")
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != n_in:
                raise ConfigurationError("layer width does not chain")
            if w.shape[0] != b.size:
                raise ConfigurationError("bias length mismatch")
            n_in = w.shape[0]
        if self.out_weights.size != n_in:
            raise ConfigurationError("output layer width mismatch")
        if np.any(self.in_hi <= self.in_lo) or self.out_hi <= self.out_lo:
            raise ConfigurationError("normalization bounds must be strict")

    @property
    def n_params(self) -> int:
        return (sum(w.size + b.size for w, b in zip(self.weights, self.biases))
                + self.out_weights.size + 1)

    def to_json_dict(self):
        return {
            "format": 1,
            "layout": self.layout.to_json_dict(),
            "layers": [
                {"weights": [list(map(float, row)) for row in w],
                 "bias": list(map(float, b)),
                 "activation": act}
                for w, b, act in zip(self.weights, self.biases, self.activations)
            ],
            "output": {"weights": list(map(float, self.out_weights)),
                       "bias": float(self.out_bias)},
            "in_bounds": {"lo": list(map(float, self.in_lo)),
                          "hi": list(map(float, self.in_hi))},
            "out_bounds": {"lo": float(self.out_lo), "hi": float(self.out_hi)},
        }

    @classmethod
    def from_json_dict(cls, d, layout_loader=None):
        if d.get("format") != 1:
            raise RejectedInputError("unsupported network file format")
        ld = d["layout"]
        if layout_loader is not None:
            layout = layout_loader(ld)
        elif ld.get("kind") == "narx":
            layout = InputLayout.from_json_dict(ld)
        else:
            from .slamp import MetaLayout
            layout = MetaLayout.from_json_dict(ld)
        return cls(
            layout=layout,
            weights=tuple(np.array(layer["weights"], dtype=float) for layer in d["layers"]),
            biases=tuple(np.array(layer["bias"], dtype=float) for layer in d["layers"]),
            activations=tuple(layer["activation"] for layer in d["layers"]),
            out_weights=np.array(d["output"]["weights"], dtype=float),
            out_bias=float(d["output"]["bias"]),
            in_lo=np.array(d["in_bounds"]["lo"], dtype=float),
            in_hi=np.array(d["in_bounds"]["hi"], dtype=float),
            out_lo=float(d["out_bounds"]["lo"]),
            out_hi=float(d["out_bounds"]["hi"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1)

    @classmethod
    def from_json(cls, text):
        return cls.from_json_dict(json.loads(text))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TrainReport:
    nmse_train: float
    nmse_test: float
    epochs: int
    final_gradient_norm: float
    nmse_undefined: bool = False


# -- scaling ------------------------------------------------------------------

def normalize(x, lo, hi):
    """Affine map of [lo, hi] onto [-1, 1]; out-of-bounds values are clamped."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if np.any(hi <= lo):
        raise ConfigurationError("degenerate normalization bounds")
    z = 2.0 * (np.asarray(x, float) - lo) / (hi - lo) - 1.0
    return np.clip(z, -1.0, 1.0)


def out_of_bounds(x, lo, hi):
    """Mask of inputs that the normalizer would clamp."""
    x = np.asarray(x, float)
    return (x < np.asarray(lo, float)) | (x > np.asarray(hi, float))


def denormalize(z, lo, hi):
    return (np.asarray(z, float) + 1.0) * (np.asarray(hi, float) - np.asarray(lo, float)) / 2.0 \
        + np.asarray(lo, float)


def nmse(actual, predicted):
    """Normalized fit measure: 1 at exact agreement, undefined (nan) when the
    target series is constant."""
    actual = np.asarray(actual, float).ravel()
    predicted = np.asarray(predicted, float).ravel()
    dev = math.sqrt(float(np.sum((actual - actual.mean()) ** 2)))
    if dev == 0.0:
        return float("nan")
    err = math.sqrt(float(np.sum((actual - predicted) ** 2)))
    return 1.0 - err / dev


# -- network evaluation -------------------------------------------------------

def _act(name, v):
    if name == "relu":
        return np.maximum(v, 0.0)
    return 1.0 / (1.0 + np.exp(-v))


def _act_deriv(name, activated):
    if name == "relu":
        return (activated > 0).astype(float)
    return activated * (1.0 - activated)


def forward(net: NetworkSpec, raw_inputs):
    """Evaluate the network on raw (unnormalized) inputs.

    Accepts a single input vector or a batch (rows).  Out-of-range inputs
    are clamped by the pre-processor, mirroring the scheduling constraints.
    """
    x = np.asarray(raw_inputs, float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.in_lo.size:
        raise RejectedInputError(
            f"expected {net.in_lo.size} inputs, got {x.shape[1]}")
    h = normalize(x, net.in_lo, net.in_hi)
    for w, b, act in zip(net.weights, net.biases, net.activations):
        h = _act(act, h @ w.T + b)
    y = h @ net.out_weights + net.out_bias
    t = denormalize(y, net.out_lo, net.out_hi)
    return float(t[0]) if single else t


# -- generic MLP fitting (shared with the meta-predictor) ----------------------

def _shapes(n_in, hidden):
    dims = [n_in] + list(hidden)
    shapes = [(dims[i + 1], dims[i]) for i in range(len(hidden))]
    return shapes, dims[-1]


def _flatten(weights, biases, out_w, out_b):
    parts = []
    for w, b in zip(weights, biases):
        parts.append(w.ravel())
        parts.append(b)
    parts.append(out_w)
    parts.append(np.array([out_b]))
    return np.concatenate(parts)


def _unflatten(vec, n_in, hidden):
    shapes, n_last = _shapes(n_in, hidden)
    weights, biases = [], []
    pos = 0
    for (r, c) in shapes:
        weights.append(vec[pos:pos + r * c].reshape(r, c)); pos += r * c
        biases.append(vec[pos:pos + r]); pos += r
    out_w = vec[pos:pos + n_last]; pos += n_last
    out_b = float(vec[pos])
    return weights, biases, out_w, out_b


def init_params(n_in, hidden, seed):
    """Seeded uniform +-1/sqrt(fan_in) initialization, flattened."""
    rng = np.random.default_rng(seed)
    shapes, n_last = _shapes(n_in, hidden)
    weights, biases = [], []
    fan = n_in
    for (r, c) in shapes:
        lim = 1.0 / math.sqrt(fan)
        weights.append(rng.uniform(-lim, lim, size=(r, c)))
        biases.append(rng.uniform(-lim, lim, size=r))
        fan = r
    lim = 1.0 / math.sqrt(fan)
    out_w = rng.uniform(-lim, lim, size=n_last)
    out_b = float(rng.uniform(-lim, lim))
    return _flatten(weights, biases, out_w, out_b)


def mlp_loss_and_grad(vec, xn, yn, hidden, activations):
    """Mean squared error over normalized data and its gradient (backprop)."""
    n = xn.shape[0]
    weights, biases, out_w, out_b = _unflatten(vec, xn.shape[1], hidden)
    hs = [xn]
    for w, b, act in zip(weights, biases, activations):
        hs.append(_act(act, hs[-1] @ w.T + b))
    pred = hs[-1] @ out_w + out_b
    err = pred - yn
    loss = float(err @ err) / n

    g_out_w = 2.0 * (err @ hs[-1]) / n
    g_out_b = 2.0 * float(err.sum()) / n
    delta = np.outer(err, out_w) * _act_deriv(activations[-1], hs[-1]) if weights \
        else None
    g_ws, g_bs = [], []
    for li in range(len(weights) - 1, -1, -1):
        g_ws.append(2.0 * (delta.T @ hs[li]) / n)
        g_bs.append(2.0 * delta.sum(axis=0) / n)
        if li > 0:
            delta = (delta @ weights[li]) * _act_deriv(activations[li - 1], hs[li])
    g_ws.reverse(); g_bs.reverse()
    return loss, _flatten(g_ws, g_bs, g_out_w, g_out_b)


def fit_mlp(xn, yn, hidden, activations, seed, max_epochs=2000, grad_tol=1e-6):
    """Train a scalar-output MLP on normalized data; returns params + stats."""
    w0 = init_params(xn.shape[1], hidden, seed)
    res = scg.minimize(lambda w: mlp_loss_and_grad(w, xn, yn, hidden, activations),
                       w0, max_epochs=max_epochs, grad_tol=grad_tol)
    weights, biases, out_w, out_b = _unflatten(res.w, xn.shape[1], hidden)
    return weights, biases, out_w, out_b, res


# -- dataset assembly ---------------------------------------------------------

def assemble_rows(days, layout: InputLayout, zone: int):
    """Open-loop training rows [t, P taps, env taps, T taps] -> T_z.

    `days` is a chronological list of per-day OperatingRecord lists; rows
    start once enough history has accumulated in the stream.
    """
    recs = [r for day in days for r in day]
    n = len(recs)
    t_col = np.array([r.t for r in recs], float)
    power = np.array([r.power for r in recs], float)
    env = np.array([r.env for r in recs], float)          # (n, 3)
    temps = np.array([r.zone_temps[zone] for r in recs], float)

    start = layout.max_lag
    rows, targets, where = [], [], []
    for r in range(start, n):
        feats = [t_col[r]]
        feats += [power[r - lag] for lag in range(layout.tau1)]
        for s in range(layout.n_env):
            feats += [env[r - lag, s] for lag in range(layout.tau2)]
        feats += [temps[r - lag] for lag in range(1, layout.tau3 + 1)]
        rows.append(feats)
        targets.append(temps[r])
        where.append(r)
    return np.array(rows, float), np.array(targets, float), np.array(where, int)


def bounds_from_rows(rows, layout: InputLayout, p_rated, pad_frac=0.05):
    """Per-input normalization bounds: physical for hour and power taps,
    padded data range for environment and temperature taps."""
    lo = rows.min(axis=0).astype(float)
    hi = rows.max(axis=0).astype(float)
    pad = pad_frac * np.maximum(hi - lo, 1e-6)
    lo, hi = lo - pad, hi + pad
    lo[layout.idx_time], hi[layout.idx_time] = 1.0, float(N_HOURS)
    for i in layout.idx_power:
        lo[i], hi[i] = 0.0, float(p_rated)
    return lo, hi


# -- training and closed-loop evaluation --------------------------------------

def train(days, layout: InputLayout, zone, hidden, activations, seed,
          p_rated=30.0, train_frac=0.8, max_epochs=2000, grad_tol=1e-6,
          pad_frac=0.05):
    """Train one zone network open loop and score it closed loop.

    The chronological day split keeps whole days in each block so the test
    score can be computed with the feedback loop closed.  Returns
    (NetworkSpec, TrainReport).
    """
    if isinstance(activations, str):
        activations = (activations,) * len(hidden)
    n_train_days = max(1, int(round(train_frac * len(days))))
    if n_train_days >= len(days):
        n_train_days = len(days) - 1
    if n_train_days < 1:
        raise RejectedInputError("need at least two days of data")

    x_all, y_all, where = assemble_rows(days, layout, zone)
    split_row = n_train_days * N_HOURS
    train_mask = where < split_row
    x_tr, y_tr = x_all[train_mask], y_all[train_mask]

    in_lo, in_hi = bounds_from_rows(x_tr, layout, p_rated, pad_frac)
    t_lo = float(y_tr.min()); t_hi = float(y_tr.max())
    pad = pad_frac * max(t_hi - t_lo, 1e-6)
    out_lo, out_hi = t_lo - pad, t_hi + pad

    xn = normalize(x_tr, in_lo, in_hi)
    undefined = (y_tr.max() - y_tr.min()) == 0.0
    yn = normalize(y_tr, out_lo, out_hi)
    weights, biases, out_w, out_b, res = fit_mlp(
        xn, yn, hidden, activations, seed, max_epochs=max_epochs, grad_tol=grad_tol)

    net = NetworkSpec(layout=layout,
                      weights=tuple(weights), biases=tuple(biases),
                      activations=tuple(activations),
                      out_weights=out_w, out_bias=out_b,
                      in_lo=in_lo, in_hi=in_hi, out_lo=out_lo, out_hi=out_hi)

    nmse_train = nmse(y_tr, forward(net, x_tr))

    # closed-loop score over the held-out block, day by day
    actual, predicted = [], []
    for d in range(n_train_days, len(days)):
        prior = days[d - 1]
        day = days[d]
        sc = _day_scenario(day)
        profile = np.array([r.power for r in day])
        pred = rollout_closed_loop(net, sc, profile, prior, zone=zone)
        actual.append([r.zone_temps[zone] for r in day])
        predicted.append(pred)
    nmse_test = nmse(np.concatenate(actual), np.concatenate(predicted))

    report = TrainReport(nmse_train=nmse_train, nmse_test=nmse_test,
                         epochs=res.epochs, final_gradient_norm=res.grad_norm,
                         nmse_undefined=bool(undefined or math.isnan(nmse_train)))
    return net, report


def _day_scenario(day_records):
    """Rebuild the ScenarioDay columns carried by a day's records."""
    from .testbed import ScenarioDay
    return ScenarioDay(
        prices=np.array([r.price for r in day_records]),
        ambient=np.array([r.env[0] for r in day_records]),
        insolation=np.array([r.env[1] for r in day_records]),
        internal_load=np.array([r.env[2] for r in day_records]))


def feature_vector(layout: InputLayout, t, powers, env_matrix, temps,
                   prior_powers, prior_env, prior_temps):
    """Input vector at hour t (1..24) drawing pre-horizon taps from prior-day
    arrays; `temps` holds this day's values for hours < t."""
    feats = [float(t)]
    for lag in range(layout.tau1):
        idx = t - 1 - lag
        feats.append(float(powers[idx]) if idx >= 0 else float(prior_powers[idx]))
    for s in range(layout.n_env):
        for lag in range(layout.tau2):
            idx = t - 1 - lag
            feats.append(float(env_matrix[idx, s]) if idx >= 0
                         else float(prior_env[idx, s]))
    for lag in range(1, layout.tau3 + 1):
        idx = t - 1 - lag
        feats.append(float(temps[idx]) if idx >= 0 else float(prior_temps[idx]))
    return np.array(feats)


def rollout_closed_loop(net: NetworkSpec, scenario, power_profile, history,
                        zone: int = 0):
    """Predict a full day with the feedback loop closed.

    `history` is the prior day's record list; it supplies every
    negative-time tap (temperatures, powers, environment).  Returns the
    24 predicted zone temperatures.
    """
    layout = net.layout
    if history is None or len(history) < max(layout.max_lag, 1):
        raise RejectedInputError("history does not cover the network's taps")
    power_profile = np.asarray(power_profile, float)
    n_hours = power_profile.shape[0]
    if n_hours < 1 or n_hours > N_HOURS:
        raise RejectedInputError("power profile must cover 1..24 hours")

    prior_powers = np.array([r.power for r in history])
    prior_env = np.array([r.env for r in history])
    prior_temps = np.array([r.zone_temps[zone] for r in history])
    env_matrix = scenario.env_matrix()

    preds = np.zeros(n_hours)
    for t in range(1, n_hours + 1):
        x = feature_vector(layout, t, power_profile, env_matrix, preds,
                           prior_powers, prior_env, prior_temps)
        preds[t - 1] = forward(net, x)
    return preds
