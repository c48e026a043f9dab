"""Exact replication of a trained network as mixed-integer linear rows.

Each neuron's activation is written in the incremental piecewise-linear
form: per-block fill variables q_s with ordering binaries w_s, a block-sum
row recovering the pre-activation, and a gradient-weighted sum recovering
the activation value.  ReLU is exact with two blocks; sigmoid uses a
certified chord interpolation.  Per-neuron pre-activation windows come from
interval arithmetic over the input bounds, and blocks that the window can
never reach are dropped (their fills and binaries become fixed columns).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InfeasibleError
from .milpmodel import MilpModel

SIGMOID_R0 = -8.0
SIGMOID_REND = 8.0
SIGMOID_BLOCKS = 5


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-np.asarray(v, dtype=float)))


@dataclass(frozen=True)
class PwlSpec:
    """Breakpoints r_0..r_N, chord gradients l_1..l_N, value at r_0, and the
    grid-certified interpolation error."""

    activation: str
    breakpoints: np.ndarray
    gradients: np.ndarray
    f_min: float
    max_error: float

    @property
    def n_blocks(self) -> int:
        return len(self.gradients)

    def value(self, v):
        """Evaluate the piecewise-linear interpolant (clamps outside range)."""
        v = np.clip(np.asarray(v, dtype=float), self.breakpoints[0], self.breakpoints[-1])
        out = np.full(np.shape(v), self.f_min, dtype=float)
        for s in range(self.n_blocks):
            r_lo, r_hi = self.breakpoints[s], self.breakpoints[s + 1]
            fill = np.clip(v - r_lo, 0.0, r_hi - r_lo)
            out = out + self.gradients[s] * fill
        return out if out.shape else float(out)


def build_pwl(activation, n_blocks, r_lo, r_hi) -> PwlSpec:
    """Construct the block table for one activation over [r_lo, r_hi].

    ReLU is exact (two blocks split at zero).  Sigmoid places interior
    breakpoints by greedy max-error refinement and certifies the final
    interpolation error on a dense grid.
    """
    if n_blocks < 2:
        raise ConfigurationError("need at least two linear blocks")
    if r_lo >= r_hi:
        raise ConfigurationError("empty breakpoint window")
    if activation == "relu":
        if not (r_lo < 0.0 < r_hi):
            raise ConfigurationError("relu window must straddle zero")
        bp = np.array([r_lo, 0.0, r_hi])
        return PwlSpec("relu", bp, np.array([0.0, 1.0]), 0.0, 0.0)
    if activation != "sigmoid":
        raise ConfigurationError(f"unknown activation {activation!r}")

    points = [r_lo, r_hi]
    grid = np.linspace(r_lo, r_hi, 10_001)
    truth = _sigmoid(grid)
    for _ in range(n_blocks - 1):
        bp = np.array(sorted(points))
        interp = np.interp(grid, bp, _sigmoid(bp))
        worst = int(np.argmax(np.abs(interp - truth)))
        points.append(float(grid[worst]))
    bp = np.array(sorted(points))
    vals = _sigmoid(bp)
    grads = np.diff(vals) / np.diff(bp)
    interp = np.interp(grid, bp, vals)
    eps = float(np.max(np.abs(interp - truth)))
    return PwlSpec("sigmoid", bp, grads, float(vals[0]), eps)


def default_sigmoid_pwl() -> PwlSpec:
    return build_pwl("sigmoid", SIGMOID_BLOCKS, SIGMOID_R0, SIGMOID_REND)


# -- interval arithmetic --------------------------------------------------------

def affine_interval(weights, lo, hi, bias):
    """Range of w.x + b for x in [lo, hi] componentwise."""
    pos = np.maximum(weights, 0.0)
    neg = np.minimum(weights, 0.0)
    return (float(pos @ lo + neg @ hi + bias), float(pos @ hi + neg @ lo + bias))


def activation_bounds(net):
    """Per-layer (pre_act_lo, pre_act_hi, out_lo, out_hi) arrays from interval
    arithmetic starting at normalized inputs in [-1, 1]."""
    lo = -np.ones(net.in_lo.size)
    hi = np.ones(net.in_lo.size)
    layers = []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        pre_lo = np.minimum(w, 0.0) @ hi + np.maximum(w, 0.0) @ lo + b
        pre_hi = np.maximum(w, 0.0) @ hi + np.minimum(w, 0.0) @ lo + b
        if act == "relu":
            out_lo, out_hi = np.maximum(pre_lo, 0.0), np.maximum(pre_hi, 0.0)
        else:
            out_lo, out_hi = _sigmoid(pre_lo), _sigmoid(pre_hi)
        layers.append((pre_lo, pre_hi, out_lo, out_hi))
        lo, hi = out_lo, out_hi
    return layers


# -- encoding -------------------------------------------------------------------

@dataclass
class Binding:
    """How one network input enters the model: a raw model column or a
    constant raw value."""

    kind: str                 # "col" | "const"
    col: int = -1
    const: float = 0.0

    @classmethod
    def of_col(cls, j):
        return cls(kind="col", col=int(j))

    @classmethod
    def of_const(cls, v):
        return cls(kind="const", const=float(v))


@dataclass
class NeuronWindow:
    """Effective piecewise form of one neuron inside its reachable window."""

    kind: str                 # "off" | "on" | "pwl"
    pre_lo: float
    pre_hi: float
    breakpoints: np.ndarray | None = None
    gradients: np.ndarray | None = None
    f_min: float = 0.0

    def activation_value(self, n):
        if self.kind == "off":
            return 0.0
        if self.kind == "on":
            return float(n)
        v = self.f_min
        for s in range(len(self.gradients)):
            span = self.breakpoints[s + 1] - self.breakpoints[s]
            v += self.gradients[s] * min(max(n - self.breakpoints[s], 0.0), span)
        return float(v)


@dataclass
class BlockInfo:
    """Columns emitted for one (zone, hour) network block."""

    zone: int
    t: int
    x_cols: list
    m_cols: list              # per layer, list of column ids
    q_cols: dict              # (layer, neuron) -> list[(s, col, fixed_value|None)]
    w_cols: dict              # (layer, neuron) -> list[(s, col or None, fixed_value|None)]
    y_col: int = -1
    eps_used: list = field(default_factory=list)   # per layer, per neuron pwl error
    windows: dict = field(default_factory=dict)    # (layer, neuron) -> NeuronWindow


def certified_output_bound(net, block: BlockInfo) -> float:
    """Propagated worst-case |MILP output - exact forward| in output units.

    Per layer: err_out = eps_pwl + Lip * (|W| @ err_in); sigmoid Lipschitz
    constants never exceed 1/4, the piecewise form never exceeds its largest
    chord slope.  ReLU layers contribute no interpolation error.
    """
    err = np.zeros(net.in_lo.size)
    for li, (w, act) in enumerate(zip(net.weights, net.activations)):
        carried = np.abs(w) @ err
        eps = np.asarray(block.eps_used[li])
        lip = 1.0 if act == "relu" else 0.25
        err = eps + lip * carried
    y_err = float(np.abs(net.out_weights) @ err)
    return y_err * (net.out_hi - net.out_lo) / 2.0


def encode_network(model: MilpModel, net, zone, t, bindings, t_col,
                   pwl_sigmoid: PwlSpec | None = None, prefix=""):
    """Emit one (zone, hour) replication block into `model`.

    `bindings` gives, per layout input, the raw model column or raw constant
    feeding that input; `t_col` is the temperature column tied to the
    denormalized output.  Returns a BlockInfo with every emitted column.
    """
    if pwl_sigmoid is None:
        pwl_sigmoid = default_sigmoid_pwl()
    n_in = net.in_lo.size
    if len(bindings) != n_in:
        raise ConfigurationError("one binding per network input required")
    tag = f"{prefix}z{zone}t{t:02d}"
    info = BlockInfo(zone=zone, t=t, x_cols=[], m_cols=[], q_cols={}, w_cols={})

    # -- inputs: normalized columns with scaling rows (pre-processor) ---------
    x_lo = np.empty(n_in)
    x_hi = np.empty(n_in)
    for i, bind in enumerate(bindings):
        lo_i, hi_i = net.in_lo[i], net.in_hi[i]
        scale = 2.0 / (hi_i - lo_i)
        if bind.kind == "const":
            xv = float(np.clip(scale * (bind.const - lo_i) - 1.0, -1.0, 1.0))
            xcol = model.add_var(f"x_{tag}i{i}", xv, xv, key=("x", zone, t, i))
            x_lo[i] = x_hi[i] = xv
        else:
            raw_lo, raw_hi = model.lb[bind.col], model.ub[bind.col]
            xl = max(-1.0, scale * (raw_lo - lo_i) - 1.0)
            xh = min(1.0, scale * (raw_hi - lo_i) - 1.0)
            if xl > xh:
                raise InfeasibleError([f"x_{tag}i{i}"],
                                      "input range lies outside trained bounds")
            xcol = model.add_var(f"x_{tag}i{i}", xl, xh, key=("x", zone, t, i))
            model.add_row(f"norm_{tag}i{i}",
                          {xcol: 1.0, bind.col: -scale},
                          "E", -scale * lo_i - 1.0)
            x_lo[i], x_hi[i] = xl, xh
        info.x_cols.append(xcol)

    in_cols = list(info.x_cols)
    in_lo, in_hi = x_lo, x_hi

    # -- hidden layers ----------------------------------------------------------
    for li, (w_mat, b_vec, act) in enumerate(zip(net.weights, net.biases,
                                                 net.activations)):
        layer_m_cols = []
        layer_eps = []
        out_lo = np.empty(w_mat.shape[0])
        out_hi = np.empty(w_mat.shape[0])
        for j in range(w_mat.shape[0]):
            pre_lo, pre_hi = affine_interval(w_mat[j], in_lo, in_hi, b_vec[j])
            ntag = f"{tag}L{li}n{j}"
            coeffs_in = {in_cols[i]: -w_mat[j, i]
                         for i in range(len(in_cols)) if w_mat[j, i] != 0.0}
            if act == "relu":
                eps_j = 0.0
                if pre_hi <= 0.0:                      # provably off
                    mcol = model.add_var(f"m_{ntag}", 0.0, 0.0,
                                         key=("m", zone, t, li, j))
                    o_lo = o_hi = 0.0
                    info.windows[(li, j)] = NeuronWindow("off", pre_lo, pre_hi)
                elif pre_lo >= 0.0:                    # provably on: m == n
                    mcol = model.add_var(f"m_{ntag}", pre_lo, pre_hi,
                                         key=("m", zone, t, li, j))
                    row = dict(coeffs_in); row[mcol] = 1.0
                    model.add_row(f"lin_{ntag}", row, "E", b_vec[j])
                    o_lo, o_hi = pre_lo, pre_hi
                    info.windows[(li, j)] = NeuronWindow("on", pre_lo, pre_hi)
                else:
                    q1 = model.add_var(f"q_{ntag}s1", 0.0, -pre_lo,
                                       key=("q", zone, t, li, j, 1))
                    q2 = model.add_var(f"q_{ntag}s2", 0.0, pre_hi,
                                       key=("q", zone, t, li, j, 2))
                    wb = model.add_var(f"w_{ntag}s1", 0.0, 1.0, binary=True,
                                       key=("w", zone, t, li, j, 1))
                    mcol = model.add_var(f"m_{ntag}", 0.0, pre_hi,
                                         key=("m", zone, t, li, j))
                    row = dict(coeffs_in); row[q1] = 1.0; row[q2] = 1.0
                    model.add_row(f"blocksum_{ntag}", row, "E", b_vec[j] - pre_lo)
                    model.add_row(f"act_{ntag}", {mcol: 1.0, q2: -1.0}, "E", 0.0)
                    model.add_row(f"fill_lo_{ntag}", {q1: -1.0, wb: -pre_lo}, "L", 0.0)
                    model.add_row(f"fill_hi_{ntag}", {q2: 1.0, wb: -pre_hi}, "L", 0.0)
                    info.q_cols[(li, j)] = [(1, q1, None), (2, q2, None)]
                    info.w_cols[(li, j)] = [(1, wb, None)]
                    o_lo, o_hi = 0.0, pre_hi
                    info.windows[(li, j)] = NeuronWindow(
                        "pwl", pre_lo, pre_hi,
                        breakpoints=np.array([pre_lo, 0.0, pre_hi]),
                        gradients=np.array([0.0, 1.0]), f_min=0.0)
            else:
                pwl = pwl_sigmoid
                if pre_lo < pwl.breakpoints[0] or pre_hi > pwl.breakpoints[-1]:
                    warnings.warn(
                        f"widening sigmoid window to cover [{pre_lo:.2f}, {pre_hi:.2f}] "
                        f"for neuron {ntag}", stacklevel=2)
                    pwl = build_pwl("sigmoid", pwl.n_blocks,
                                    min(pre_lo - 1.0, SIGMOID_R0),
                                    max(pre_hi + 1.0, SIGMOID_REND))
                eps_j = pwl.max_error
                bp = pwl.breakpoints
                spans = np.diff(bp)
                n_s = pwl.n_blocks
                sat = [bp[s + 1] <= pre_lo for s in range(n_s)]
                empty = [bp[s] >= pre_hi for s in range(n_s)]
                qcols, wcols = [], []
                qrow = {}
                for s in range(1, n_s + 1):
                    span = float(spans[s - 1])
                    if sat[s - 1]:
                        qc = model.add_var(f"q_{ntag}s{s}", span, span,
                                           key=("q", zone, t, li, j, s))
                        qcols.append((s, qc, span))
                    elif empty[s - 1]:
                        qc = model.add_var(f"q_{ntag}s{s}", 0.0, 0.0,
                                           key=("q", zone, t, li, j, s))
                        qcols.append((s, qc, 0.0))
                    else:
                        qc = model.add_var(f"q_{ntag}s{s}", 0.0, span,
                                           key=("q", zone, t, li, j, s))
                        qcols.append((s, qc, None))
                    qrow[qc] = 1.0
                for s in range(1, n_s):                # ordering binaries
                    if bp[s] <= pre_lo:
                        wcols.append((s, None, 1.0))
                    elif bp[s] >= pre_hi:
                        wcols.append((s, None, 0.0))
                    else:
                        wc = model.add_var(f"w_{ntag}s{s}", 0.0, 1.0, binary=True,
                                           key=("w", zone, t, li, j, s))
                        wcols.append((s, wc, None))

                def w_of(s):
                    return wcols[s - 1]

                for s in range(1, n_s + 1):
                    span = float(spans[s - 1])
                    _, qc, qfix = qcols[s - 1]
                    if qfix is not None:
                        continue
                    if s <= n_s - 1:                   # saturation forcing row
                        _, wc, wfix = w_of(s)
                        if wc is not None:
                            model.add_row(f"fill_lo_{ntag}s{s}",
                                          {qc: -1.0, wc: span}, "L", 0.0)
                        elif wfix == 1.0:
                            model.fix_var(qc, span)
                            qcols[s - 1] = (s, qc, span)
                            continue
                    if s >= 2:                         # permission row
                        _, wc, wfix = w_of(s - 1)
                        if wc is not None:
                            model.add_row(f"fill_hi_{ntag}s{s}",
                                          {qc: 1.0, wc: -span}, "L", 0.0)
                        elif wfix == 0.0:
                            model.fix_var(qc, 0.0)
                            qcols[s - 1] = (s, qc, 0.0)
                r0 = float(bp[0])
                row = dict(coeffs_in)
                for qc, v in qrow.items():
                    row[qc] = row.get(qc, 0.0) + v
                model.add_row(f"blocksum_{ntag}", row, "E", b_vec[j] - r0)
                o_lo = float(pwl.value(pre_lo))
                o_hi = float(pwl.value(pre_hi))
                mcol = model.add_var(f"m_{ntag}", min(o_lo, o_hi) - 1e-9,
                                     max(o_lo, o_hi) + 1e-9,
                                     key=("m", zone, t, li, j))
                act_row = {mcol: 1.0}
                for (s, qc, _qfix) in qcols:
                    act_row[qc] = act_row.get(qc, 0.0) - float(pwl.gradients[s - 1])
                model.add_row(f"act_{ntag}", act_row, "E", pwl.f_min)
                info.q_cols[(li, j)] = qcols
                info.w_cols[(li, j)] = wcols
                info.windows[(li, j)] = NeuronWindow(
                    "pwl", pre_lo, pre_hi, breakpoints=bp.copy(),
                    gradients=np.asarray(pwl.gradients, float).copy(),
                    f_min=pwl.f_min)

            layer_m_cols.append(mcol)
            layer_eps.append(eps_j)
            out_lo[j], out_hi[j] = (model.lb[mcol], model.ub[mcol])
        info.m_cols.append(layer_m_cols)
        info.eps_used.append(layer_eps)
        in_cols = layer_m_cols
        in_lo, in_hi = out_lo, out_hi

    # -- output neuron and post-processor ------------------------------------
    y_lo, y_hi = affine_interval(net.out_weights, in_lo, in_hi, net.out_bias)
    y_lo, y_hi = max(-1.0, y_lo), min(1.0, y_hi)
    if y_lo > y_hi:
        raise InfeasibleError([f"y_{tag}"],
                              "network output range lies outside [-1, 1]")
    ycol = model.add_var(f"y_{tag}", y_lo, y_hi, key=("y", zone, t))
    yrow = {ycol: 1.0}
    for i, mc in enumerate(in_cols):
        if net.out_weights[i] != 0.0:
            yrow[mc] = yrow.get(mc, 0.0) - float(net.out_weights[i])
    model.add_row(f"out_{tag}", yrow, "E", float(net.out_bias))
    half = (net.out_hi - net.out_lo) / 2.0
    model.add_row(f"denorm_{tag}", {t_col: 1.0, ycol: -half},
                  "E", (net.out_hi + net.out_lo) / 2.0)
    info.y_col = ycol
    return info


def binary_count(model: MilpModel) -> int:
    """Number of binary columns, i.e. the sum of effective blocks minus one
    over every encoded neuron."""
    return model.binary_count()
