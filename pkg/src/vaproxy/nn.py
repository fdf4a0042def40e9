"""Regress-later single-hidden-layer ReLU networks.

One network ("head") per cash-flow year tau.  Head tau reads the flattened
inputs up to tau only: ``[1, x_1, ..., x_tau]`` with per-step blocks of width
``step_dim``; the leading constant makes an explicit hidden bias unnecessary.

Two input variants:

* ``rand`` -- the standard-normal drivers themselves.  Each hidden
  pre-activation is then Gaussian given the drivers observed up to t, so the
  time-t expectation of a ReLU node is a folded-normal mean and the whole
  network is valued in closed form (:func:`closed_form_value`).
* ``econ`` -- standardised economic variables (r, log S, log B) per year.
  No closed form; valued by conditional Monte Carlo (:func:`mc_value`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from . import esg
from .esg import DriverTensor, EsgParams, OuterState, ScenarioSet

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    max_iter: int = 500
    gtol: float = 1e-8
    ftol: float = 1e-12
    l2: float = 0.0


@dataclass
class Head:
    hidden: np.ndarray  # (K, 1 + tau * step_dim)
    out: np.ndarray  # (K,)
    bias: float
    loss: float = float("nan")
    iterations: int = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        pre = x[:, : self.hidden.shape[1]] @ self.hidden.T
        return np.maximum(pre, 0.0) @ self.out + self.bias


@dataclass
class EconScaler:
    """Per (year, feature) standardisation constants of the econ inputs."""

    mean: np.ndarray  # (T, 3)
    sd: np.ndarray

    @classmethod
    def fit(cls, raw: np.ndarray) -> "EconScaler":
        sd = raw.std(axis=0)
        return cls(raw.mean(axis=0), np.where(sd > 1e-12, sd, 1.0))

    def transform(self, raw: np.ndarray) -> np.ndarray:
        z = (raw - self.mean[: raw.shape[1]]) / self.sd[: raw.shape[1]]
        return np.hstack([np.ones((raw.shape[0], 1)), z.reshape(raw.shape[0], -1)])


def econ_raw(scen: ScenarioSet) -> np.ndarray:
    """(r, log S, log B) for t = 1..T, shape (scenario, T, 3)."""
    if scen.start != 0:
        raise ValueError("econ features need scenarios starting at t = 0")
    return np.stack([scen.short_rate[:, 1:], np.log(scen.equity[:, 1:]),
                     np.log(scen.cash_account[:, 1:])], axis=-1)


@dataclass
class NnModel:
    variant: str
    horizon: int
    step_dim: int
    width: int
    heads: list = field(default_factory=list)
    scaler: EconScaler | None = None

    def __post_init__(self):
        if self.variant not in ("rand", "econ"):
            raise ValueError("variant must be 'rand' or 'econ'")

    def n_inputs(self, tau: int) -> int:
        return 1 + tau * self.step_dim

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Per-head outputs for full input rows, shape (n, T)."""
        return np.stack([h(x) for h in self.heads], axis=1)

    # --- flat-file serialisation ---

    def save(self, path) -> None:
        fmt = lambda arr: " ".join(repr(float(v)) for v in np.ravel(arr))
        lines = [f"vaproxy-nn {FORMAT_VERSION}", f"variant {self.variant}",
                 f"horizon {self.horizon}", f"step_dim {self.step_dim}", f"width {self.width}"]
        if self.scaler is not None:
            lines += [f"scaler_mean {fmt(self.scaler.mean)}", f"scaler_sd {fmt(self.scaler.sd)}"]
        for tau, h in enumerate(self.heads, start=1):
            lines += [f"head {tau} {h.hidden.shape[1]} {h.iterations} {h.loss!r}",
                      f"bias {h.bias!r}", f"out {fmt(h.out)}", f"hidden {fmt(h.hidden)}"]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NnModel":
        rows = [ln.split(" ", 1) for ln in Path(path).read_text(encoding="utf-8").splitlines()]
        if not rows or rows[0][0] != "vaproxy-nn":
            raise ValueError("not a network model file")
        if int(rows[0][1]) != FORMAT_VERSION:
            raise ValueError(f"unsupported model file version {rows[0][1]}")
        vec = lambda s: np.array([float(v) for v in s.split()])
        meta, heads, cur, scaler = {}, [], None, {}
        for key, val in rows[1:]:
            if key in ("variant",):
                meta[key] = val
            elif key in ("horizon", "step_dim", "width"):
                meta[key] = int(val)
            elif key.startswith("scaler_"):
                scaler[key] = vec(val)
            elif key == "head":
                _, n_in, iters, loss = val.split()
                cur = {"n_in": int(n_in), "iterations": int(iters), "loss": float(loss)}
                heads.append(cur)
            elif key == "bias":
                cur["bias"] = float(val)
            elif key == "out":
                cur["out"] = vec(val)
            elif key == "hidden":
                cur["hidden"] = vec(val).reshape(meta["width"], cur["n_in"])
        model = cls(meta["variant"], meta["horizon"], meta["step_dim"], meta["width"])
        model.heads = [Head(h["hidden"], h["out"], h["bias"], h["loss"], h["iterations"])
                       for h in heads]
        if scaler:
            T, d = meta["horizon"], meta["step_dim"]
            model.scaler = EconScaler(scaler["scaler_mean"].reshape(T, d),
                                      scaler["scaler_sd"].reshape(T, d))
        return model


# --- training ------------------------------------------------------------

def _init_head(rng: np.random.Generator, n_in: int, width: int):
    lim_v = math.sqrt(6.0 / (n_in + width))
    lim_w = math.sqrt(6.0 / (width + 1))
    return rng.uniform(-lim_v, lim_v, (width, n_in)), rng.uniform(-lim_w, lim_w, width)


def fit_head(x: np.ndarray, y: np.ndarray, width: int, config: TrainConfig,
             rng: np.random.Generator) -> Head:
    """Full-batch L-BFGS fit of one ReLU head to ``y`` by squared error."""
    n, n_in = x.shape
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise TrainingError("non-finite inputs or targets")
    hidden, out = _init_head(rng, n_in, width)
    centre = float(y.mean())
    scale = float(y.std())
    if not scale > 1e-12 * max(1.0, abs(centre)):
        return Head(hidden, np.zeros(width), centre, 0.0, 0)
    ys = (y - centre) / scale
    split = width * n_in
    l2 = config.l2
    trace = []

    def loss_grad(theta):
        v = theta[:split].reshape(width, n_in)
        w = theta[split:split + width]
        b = theta[-1]
        pre = x @ v.T
        act = np.maximum(pre, 0.0)
        resid = act @ w + b - ys
        loss = 0.5 * float(resid @ resid) / n
        delta = (resid[:, None] * w[None, :]) * (pre > 0)
        g_v = delta.T @ x / n
        g_w = act.T @ resid / n
        g_b = resid.mean()
        if l2:
            loss += 0.5 * l2 * (float(np.sum(v * v)) + float(w @ w)) / n
            g_v += l2 * v / n
            g_w += l2 * w / n
        trace.append(loss)
        return loss, np.concatenate([g_v.ravel(), g_w, [g_b]])

    theta0 = np.concatenate([hidden.ravel(), out, [0.0]])
    res = minimize(loss_grad, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": config.max_iter, "gtol": config.gtol,
                            "ftol": config.ftol, "maxfun": 20 * config.max_iter})
    if not np.isfinite(res.fun) or not np.all(np.isfinite(res.x)):
        tail = ", ".join(f"{v:.3e}" for v in trace[-5:])
        raise TrainingError(f"non-finite loss after {res.nit} iterations ({res.message}); "
                            f"last evaluations: {tail}")
    theta = res.x
    return Head(theta[:split].reshape(width, n_in).copy(), theta[split:split + width] * scale,
                float(theta[-1]) * scale + centre, float(res.fun) * scale * scale, int(res.nit))


def train_network(inputs: np.ndarray, targets: np.ndarray, width: int, config: TrainConfig,
                  seed: int, variant: str = "rand", step_dim: int = 3,
                  scaler: EconScaler | None = None) -> NnModel:
    """One head per column of ``targets``; head tau sees input columns ``:1 + tau*step_dim``."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs and targets are not row-aligned")
    if width < 1:
        raise ValueError("width must be at least 1")
    T = targets.shape[1]
    if inputs.shape[1] < 1 + T * step_dim:
        raise ValueError(f"inputs have {inputs.shape[1]} columns; {T} heads need {1 + T * step_dim}")
    model = NnModel(variant, T, step_dim, width, scaler=scaler)
    for tau in range(1, T + 1):
        x = np.ascontiguousarray(inputs[:, : 1 + tau * step_dim])
        head = fit_head(x, targets[:, tau - 1], width, config, np.random.default_rng([seed, tau]))
        log.debug("head %d: loss %.3e after %d iterations", tau, head.loss, head.iterations)
        model.heads.append(head)
    return model


def rand_inputs(drivers: DriverTensor) -> np.ndarray:
    return drivers.flat()


def train_rand(drivers: DriverTensor, cashflows: np.ndarray, width: int, config: TrainConfig,
               seed: int) -> NnModel:
    return train_network(rand_inputs(drivers), cashflows, width, config, seed, "rand",
                         drivers.dims)


def train_econ(scen: ScenarioSet, cashflows: np.ndarray, width: int, config: TrainConfig,
               seed: int) -> NnModel:
    raw = econ_raw(scen)
    scaler = EconScaler.fit(raw)
    return train_network(scaler.transform(raw), cashflows, width, config, seed, "econ",
                         raw.shape[2], scaler)


# --- valuation -------------------------------------------------------------

def relu_node_expectation(mu, sigma):
    """E[max(Z, 0)] for Z ~ N(mu, sigma^2), via the folded-normal mean; max(mu, 0) at sigma = 0."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = mu / sigma
        folded = (sigma * _SQRT_2_OVER_PI * np.exp(-0.5 * z * z)
                  + mu * (1.0 - 2.0 * ndtr(-z)))
        value = 0.5 * (mu + folded)
    return np.where(sigma > 0, value, np.maximum(mu, 0.0))


def closed_form_value(model: NnModel, observed, t: int) -> np.ndarray:
    """Time-t expectation of the network's cash flows after t (units of the targets).

    ``observed`` holds the drivers xi_1..xi_t, shape (n, t, D) or (n, t*D).
    """
    if model.variant != "rand":
        raise ValueError("closed-form valuation needs a network on Gaussian drivers")
    if not 0 <= t <= model.horizon:
        raise ValueError("t outside the model horizon")
    d = model.step_dim
    obs = np.asarray(observed, dtype=float)
    n = obs.shape[0] if obs.size else 1
    obs = obs.reshape(n, -1)[:, : t * d]
    if obs.shape[1] != t * d:
        raise ValueError(f"need {t * d} observed driver values per row, got {obs.shape[1]}")
    total = np.zeros(n)
    for tau in range(t + 1, model.horizon + 1):
        h = model.heads[tau - 1]
        v = h.hidden
        mu = v[:, 0][None, :] + obs @ v[:, 1: 1 + t * d].T
        sigma = np.sqrt(np.sum(v[:, 1 + t * d:] ** 2, axis=1))
        total += h.bias + relu_node_expectation(mu, sigma[None, :]) @ h.out
    return total


def network_path_values(model: NnModel, inputs: np.ndarray, t: int) -> np.ndarray:
    """Sum over tau > t of the heads evaluated on full input rows."""
    total = np.zeros(inputs.shape[0])
    for tau in range(t + 1, model.horizon + 1):
        total += model.heads[tau - 1](inputs)
    return total


def _state_array(states) -> np.ndarray:
    if isinstance(states, OuterState):
        return np.atleast_2d(np.asarray(states.xi, dtype=float))
    if isinstance(states, (list, tuple)) and states and isinstance(states[0], OuterState):
        return np.asarray([s.xi for s in states], dtype=float)
    return np.atleast_2d(np.asarray(states, dtype=float))


def _inner_features(model: NnModel, params: EsgParams, xis: np.ndarray, tail: np.ndarray):
    """Scaled econ inputs of every (state, inner path) pair, shape (states * n_inner, n_in)."""
    T, dims = params.horizon, xis.shape[1]
    vals = np.empty((len(xis), tail.shape[0], T, dims))
    vals[:, :, 0, :] = xis[:, None, :]
    vals[:, :, 1:, :] = tail[None]
    scen = esg.simulate_economy(params, DriverTensor(vals.reshape(-1, T, dims)))
    return model.scaler.transform(econ_raw(scen))


def _mc_value_direct(model, params, xis, tail, chunk_paths):
    n_inner = tail.shape[0]
    per_chunk = max(1, chunk_paths // n_inner)
    out = np.empty(len(xis))
    for lo in range(0, len(xis), per_chunk):
        block = xis[lo:lo + per_chunk]
        x = _inner_features(model, params, block, tail)
        out[lo:lo + len(block)] = network_path_values(model, x, 1).reshape(
            len(block), n_inner).mean(axis=1)
    return out


def mc_value(model: NnModel, params: EsgParams, states, n_inner: int, seed: int,
             stream: int = 0, chunk_paths: int = 100_000) -> np.ndarray:
    """Conditional MC value at t = 1 of an econ network (units of the targets).

    Every outer state reuses the same inner normals (common random numbers).
    Under this ESG the inputs are affine in the year-1 drivers, so each hidden
    pre-activation splits into a per-path part p_j and a per-state shift s.
    The inner mean of max(p_j + s, 0) is piecewise linear in s: with the p_j
    sorted and suffix-summed it costs one binary search per (state, node).
    The affinity is checked on the sample and the direct route used otherwise.
    """
    if model.variant != "econ":
        raise ValueError("Monte Carlo valuation here is for the econ network variant")
    if n_inner < 1:
        raise ValueError("n_inner must be at least 1")
    xis = _state_array(states)
    dims = xis.shape[1]
    tail = esg.inner_drivers(OuterState(xis[0]), params.horizon, n_inner, seed,
                             stream).values[:, 1:, :]
    probes = np.vstack([np.zeros(dims), np.eye(dims)])
    feats = _inner_features(model, params, probes, tail).reshape(dims + 1, n_inner, -1)
    base = feats[0]
    slopes = feats[1:] - base[None]
    loading = slopes.mean(axis=1)  # (dims, n_in)
    spread = np.abs(slopes - loading[:, None, :]).max()
    if not spread <= 1e-8 * max(1.0, float(np.abs(base).max())):
        log.debug("econ inputs not affine in the year-1 drivers (%.2e); direct valuation", spread)
        return _mc_value_direct(model, params, xis, tail, chunk_paths)
    out = np.zeros(len(xis))
    for tau in range(2, model.horizon + 1):
        h = model.heads[tau - 1]
        n_in = h.hidden.shape[1]
        pre = np.sort(base[:, :n_in] @ h.hidden.T, axis=0)  # (n_inner, K)
        tails = np.vstack([np.cumsum(pre[::-1], axis=0)[::-1], np.zeros((1, pre.shape[1]))])
        shift = xis @ (loading[:, :n_in] @ h.hidden.T)  # (states, K)
        for k in range(pre.shape[1]):
            idx = np.searchsorted(pre[:, k], -shift[:, k], side="right")
            node = (tails[idx, k] + (n_inner - idx) * shift[:, k]) / n_inner
            out += h.out[k] * node
        out += h.bias
    return out


# --- width selection -------------------------------------------------------

def cross_validate_width(inputs, targets, widths, folds: int, seed: int, step_dim: int = 3,
                         config: TrainConfig = TrainConfig()) -> int:
    """Width with the lowest mean out-of-fold squared error; ties go to the smaller width.

    2-d targets are fitted head by head (causal input prefixes) and their
    errors summed after normalising each head by its target variance.
    """
    if folds < 2:
        raise ValueError("need at least two folds")
    widths = sorted(set(int(k) for k in widths))
    if not widths:
        raise ValueError("no candidate widths")
    if len(widths) == 1:
        return widths[0]
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    heads = [(x, y)] if y.ndim == 1 else [
        (np.ascontiguousarray(x[:, : 1 + tau * step_dim]), y[:, tau - 1])
        for tau in range(1, y.shape[1] + 1)]
    order = np.random.default_rng(seed).permutation(x.shape[0])
    fold_of = np.empty(x.shape[0], dtype=int)
    fold_of[order] = np.arange(x.shape[0]) % folds
    scores = []
    for k in widths:
        err = 0.0
        for f in range(folds):
            test = fold_of == f
            for j, (xh, yh) in enumerate(heads):
                scale = max(float(yh.var()), 1e-300)
                head = fit_head(xh[~test], yh[~test], k, config,
                                np.random.default_rng([seed, f, j, k]))
                err += float(np.mean((head(xh[test]) - yh[test]) ** 2)) / scale
        scores.append(err / folds)
        log.info("width %d: out-of-fold error %.6g", k, scores[-1])
    best = min(scores)
    return next(k for k, s in zip(widths, scores) if s <= best)
