"""Linear nu-SVR on [-1, 1]-scaled features, trained by SMO on the dual.

The dual follows the Schoelkopf nu-SVR formulation: per-sample box bound
cost/n, group sums e'alpha = e'alpha* = cost*nu/2, minimized objective
0.5 theta' K theta - y' theta with theta = alpha* - alpha and K the linear
Gram matrix. Pairs are picked by maximal KKT violation within each of the
two equality-constrained groups.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "FeatureScaler",
    "SvrModel",
    "DualSolution",
    "fit_scaler",
    "solve_nusvr_dual",
    "train_nusvr",
    "predict",
    "feature_importance",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature affine map onto [-1, 1], fit on training minima/maxima."""

    lo: np.ndarray
    hi: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Scale features; no clamping, so test data may leave [-1, 1]."""
        x = np.asarray(x, dtype=np.float64)
        span = self.hi - self.lo
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 2.0 * (x - self.lo) / span - 1.0
        # constant training features carry no information; pin them to 0
        return np.where(span > 0.0, out, 0.0)


def fit_scaler(features: np.ndarray) -> FeatureScaler:
    """Column-wise min/max of an (n, F) training feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need a non-empty (n, F) feature matrix")
    return FeatureScaler(lo=x.min(axis=0), hi=x.max(axis=0))


@dataclass(frozen=True, eq=False)
class SvrModel:
    """Trained linear nu-SVR: prediction is weights . scale(x) + bias."""

    weights: np.ndarray
    bias: float
    nu: float
    cost: float
    epsilon_star: float
    scaler: FeatureScaler | None = None
    active_features: np.ndarray | None = None


class DualSolution(NamedTuple):
    alpha: np.ndarray
    alpha_star: np.ndarray
    bias: float
    epsilon: float
    objective: float
    iterations: int


def _group_multiplier(grad: np.ndarray, var: np.ndarray, box: float) -> float:
    """KKT multiplier of one equality group: mean gradient over interior
    variables, else midpoint of the feasible interval from bounded ones."""
    interior = (var > 0.0) & (var < box)
    if np.any(interior):
        return float(grad[interior].mean())
    at_cap = var >= box
    at_zero = var <= 0.0
    lo = grad[at_cap].max() if np.any(at_cap) else -np.inf
    hi = grad[at_zero].min() if np.any(at_zero) else np.inf
    if not np.isfinite(lo):
        return float(hi)
    if not np.isfinite(hi):
        return float(lo)
    return float(0.5 * (lo + hi))


def solve_nusvr_dual(
    X: np.ndarray,
    y: np.ndarray,
    nu: float = 0.5,
    cost: float = 1.0,
    tol: float = 1e-3,
    max_pair_updates: int = 10**7,
) -> DualSolution:
    """SMO solver for the linear nu-SVR dual.

    Runs maximal-violating-pair updates within the alpha and alpha* groups
    until the largest KKT violation drops below `tol`. Raises RuntimeError
    if `max_pair_updates` is exhausted first.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    if X.ndim != 2 or X.shape[0] != n:
        raise ValueError(f"X must be (n, F) with n={n}")
    if n < 2:
        raise ValueError("need at least 2 training samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")
    if not 0.0 < nu <= 1.0:
        raise ValueError(f"nu must be in (0, 1], got {nu}")
    if cost <= 0.0:
        raise ValueError(f"cost must be positive, got {cost}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")

    box = cost / n
    K = X @ X.T

    # greedy fill keeps both group sums at cost*nu/2 with alpha == alpha*,
    # so theta starts at zero
    alpha = np.zeros(n)
    remaining = 0.5 * cost * nu
    for i in range(n):
        take = min(remaining, box)
        alpha[i] = take
        remaining -= take
        if remaining <= 0.0:
            break
    alpha_star = alpha.copy()

    E = -y.copy()  # E = K theta - y, maintained incrementally
    iterations = 0
    while True:
        up_s = np.where(alpha_star < box, E, np.inf)
        dn_s = np.where(alpha_star > 0.0, E, -np.inf)
        j_s = int(np.argmin(up_s))
        i_s = int(np.argmax(dn_s))
        viol_s = dn_s[i_s] - up_s[j_s]

        # the alpha group descends the gradient -E
        up_a = np.where(alpha < box, E, -np.inf)
        dn_a = np.where(alpha > 0.0, E, np.inf)
        j_a = int(np.argmax(up_a))
        i_a = int(np.argmin(dn_a))
        viol_a = up_a[j_a] - dn_a[i_a]

        if max(viol_s, viol_a) < tol:
            break
        if iterations >= max_pair_updates:
            raise RuntimeError(
                f"nu-SVR SMO did not converge within {max_pair_updates} pair updates"
            )
        iterations += 1

        if viol_s >= viol_a:
            var, i, j, sign = alpha_star, i_s, j_s, 1.0
            gap = E[i_s] - E[j_s]
        else:
            var, i, j, sign = alpha, i_a, j_a, -1.0
            gap = E[j_a] - E[i_a]
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        step = gap / eta if eta > 0.0 else np.inf
        clip_i = var[i]
        clip_j = box - var[j]
        step = min(step, clip_i, clip_j)
        var[i] -= step
        var[j] += step
        # snap exactly onto active bounds so the feasibility masks stay exact
        if step == clip_i:
            var[i] = 0.0
        if step == clip_j:
            var[j] = box
        # moving mass i -> j shifts theta by sign * step * (e_j - e_i)
        E += (sign * step) * (K[j] - K[i])

    b_plus = _group_multiplier(E, alpha_star, box)
    b_minus = _group_multiplier(-E, alpha, box)
    bias = 0.5 * (b_minus - b_plus)
    epsilon = max(0.0, -0.5 * (b_plus + b_minus))

    theta = alpha_star - alpha
    objective = float(0.5 * theta @ (K @ theta) - y @ theta)
    return DualSolution(alpha, alpha_star, bias, epsilon, objective, iterations)


def train_nusvr(
    X: np.ndarray,
    y: np.ndarray,
    nu: float = 0.5,
    cost: float = 1.0,
    tol: float = 1e-3,
    scaler: FeatureScaler | None = None,
    active_features: np.ndarray | None = None,
    max_pair_updates: int = 10**7,
) -> SvrModel:
    """Train on an already-scaled (n, F) matrix; returns the primal model.

    `scaler` and `active_features` are carried into the model so predict()
    can start from raw, full-length feature vectors.
    """
    sol = solve_nusvr_dual(X, y, nu=nu, cost=cost, tol=tol, max_pair_updates=max_pair_updates)
    theta = sol.alpha_star - sol.alpha
    weights = np.asarray(X, dtype=np.float64).T @ theta
    active = None if active_features is None else np.asarray(active_features, dtype=np.int64)
    return SvrModel(
        weights=weights,
        bias=sol.bias,
        nu=nu,
        cost=cost,
        epsilon_star=sol.epsilon,
        scaler=scaler,
        active_features=active,
    )


def predict(model: SvrModel, x: np.ndarray) -> float | np.ndarray:
    """MOS estimate for a raw feature vector or (n, F) batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if model.active_features is not None and x.shape[1] != model.weights.size:
        x = x[:, model.active_features]
    if x.shape[1] != model.weights.size:
        raise ValueError(f"expected {model.weights.size} features, got {x.shape[1]}")
    if model.scaler is not None:
        x = model.scaler.transform(x)
    out = x @ model.weights + model.bias
    return float(out[0]) if single else out


def feature_importance(model: SvrModel) -> np.ndarray:
    """Feature indices sorted by |weight| descending, ties by lower index."""
    if model.weights is None or model.weights.size == 0:
        raise ValueError("model has no trained weights")
    return np.argsort(-np.abs(model.weights), kind="stable")


def save_model(model: SvrModel, path) -> None:
    """Sectioned CSV: hyperparameters, scaler bounds, weights, active indices."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["section", "index", "a", "b"])
        w.writerow(["param", "nu", repr(model.nu), ""])
        w.writerow(["param", "cost", repr(model.cost), ""])
        w.writerow(["param", "bias", repr(model.bias), ""])
        w.writerow(["param", "epsilon_star", repr(model.epsilon_star), ""])
        if model.scaler is not None:
            for i, (lo, hi) in enumerate(zip(model.scaler.lo, model.scaler.hi)):
                w.writerow(["scaler", i, repr(float(lo)), repr(float(hi))])
        for i, wi in enumerate(model.weights):
            w.writerow(["weight", i, repr(float(wi)), ""])
        if model.active_features is not None:
            for i, idx in enumerate(model.active_features):
                w.writerow(["active", i, int(idx), ""])


def load_model(path) -> SvrModel:
    params: dict[str, float] = {}
    scaler_rows: list[tuple[int, float, float]] = []
    weight_rows: list[tuple[int, float]] = []
    active_rows: list[tuple[int, int]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["section", "index", "a", "b"]:
            raise ValueError(f"not a model file: {path}")
        for section, index, a, b in reader:
            if section == "param":
                params[index] = float(a)
            elif section == "scaler":
                scaler_rows.append((int(index), float(a), float(b)))
            elif section == "weight":
                weight_rows.append((int(index), float(a)))
            elif section == "active":
                active_rows.append((int(index), int(a)))
            else:
                raise ValueError(f"unknown model file section {section!r}")
    scaler = None
    if scaler_rows:
        scaler_rows.sort()
        scaler = FeatureScaler(
            lo=np.array([r[1] for r in scaler_rows]),
            hi=np.array([r[2] for r in scaler_rows]),
        )
    weight_rows.sort()
    active = None
    if active_rows:
        active_rows.sort()
        active = np.array([r[1] for r in active_rows], dtype=np.int64)
    return SvrModel(
        weights=np.array([r[1] for r in weight_rows]),
        bias=params["bias"],
        nu=params["nu"],
        cost=params["cost"],
        epsilon_star=params["epsilon_star"],
        scaler=scaler,
        active_features=active,
    )
