"""Learned transition model: degree-2 polynomial regression on (l, w, h, band, depth).

The model predicts per-step deltas of (l, w, h).  Fitting is weighted ridge
least squares (tiny always-on ridge guards early rank deficiency); on-policy
refits reuse the same fit with execution-time samples upweighted.  Two fitted
models can be blended linearly for doughs without their own dataset.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

N_INPUTS = 5
N_FEATURES = 21  # 1 + 5 + C(5+1, 2)
N_OUTPUTS = 3
FEATURE_VERSION = "poly2-v1"
INPUT_NAMES = ("l", "w", "h", "band", "depth")
OUTPUT_NAMES = ("dl", "dw", "dh")
RIDGE_DEFAULT = 1e-8

# Predicted state components are clamped to this physical range (meters).
CLAMP_LO = 0.001
CLAMP_HI = 1.0

# Index pairs (i <= j) for the quadratic monomials, in fixed documented order.
_QUAD_PAIRS = [(i, j) for i in range(N_INPUTS) for j in range(i, N_INPUTS)]


@dataclass(frozen=True)
class Transition:
    """One observed step: (l, w, h) state, (band, depth) action, next state."""

    state: tuple[float, float, float]
    action: tuple[float, float]
    next_state: tuple[float, float, float]
    weight: float = 1.0


@dataclass(frozen=True)
class TransitionModel:
    """theta maps the 21 polynomial features to the 3 state deltas."""

    theta: np.ndarray  # (21, 3)
    version: str = FEATURE_VERSION
    train_rmse: tuple[float, float, float] = (0.0, 0.0, 0.0)
    n_samples: int = 0

    def predict(self, state, action) -> np.ndarray:
        return predict(self, state, action)

    def predict_batch(self, states, actions) -> np.ndarray:
        return predict_batch(self, states, actions)


def feature_matrix(X: np.ndarray) -> np.ndarray:
    """(n, 5) raw inputs -> (n, 21) features: constant, linears, x_i * x_j (i <= j)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    out = np.empty((n, N_FEATURES))
    out[:, 0] = 1.0
    out[:, 1:6] = X
    for k, (i, j) in enumerate(_QUAD_PAIRS):
        out[:, 6 + k] = X[:, i] * X[:, j]
    return out


def feature_map(state, action) -> np.ndarray:
    """Feature vector for a single (state, action) pair."""
    x = np.concatenate([np.asarray(state, dtype=float).ravel(),
                        np.asarray(action, dtype=float).ravel()])
    if x.shape[0] != N_INPUTS:
        raise ValueError(f"expected {N_INPUTS} inputs, got {x.shape[0]}")
    return feature_matrix(x[None, :])[0]


def _design(data: list[Transition]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.array([[*t.state, *t.action] for t in data], dtype=float)
    Y = np.array([np.subtract(t.next_state, t.state) for t in data], dtype=float)
    W = np.array([t.weight for t in data], dtype=float)
    if np.any(W <= 0.0):
        raise ValueError("transition weights must be positive")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite transition data")
    return X, Y, W


def fit(data: list[Transition], ridge: float = RIDGE_DEFAULT) -> TransitionModel:
    """Weighted least squares of state deltas on polynomial features.

    Minimizes sum_i w_i * ||dy_i - theta^T phi(x_i)||^2 + ridge * ||theta||^2.
    With the default tiny ridge the solve never raises on rank-deficient data.
    """
    if len(data) == 0:
        raise ValueError("cannot fit a model on an empty dataset")
    X, Y, W = _design(data)
    phi = feature_matrix(X)
    gram = phi.T @ (W[:, None] * phi)
    if ridge > 0.0:
        gram = gram + ridge * np.eye(N_FEATURES)
    elif np.linalg.matrix_rank(gram) < N_FEATURES:
        raise np.linalg.LinAlgError("rank-deficient design with ridge disabled")
    rhs = phi.T @ (W[:, None] * Y)
    theta = np.linalg.solve(gram, rhs)
    resid = phi @ theta - Y
    rmse = np.sqrt(np.average(resid ** 2, axis=0, weights=W))
    return TransitionModel(theta=theta, train_rmse=tuple(float(v) for v in rmse),
                           n_samples=len(data))


def predict(model, state, action) -> np.ndarray:
    """Next (l, w, h): state plus the predicted delta, clamped to [1 mm, 1 m]."""
    if isinstance(model, BlendedModel):
        return blend_predict(model.hydrated, model.dry, model.beta, state, action)
    delta = feature_map(state, action) @ model.theta
    nxt = np.asarray(state, dtype=float) + delta
    return np.clip(nxt, CLAMP_LO, CLAMP_HI)


def predict_batch(model, states, actions) -> np.ndarray:
    """Vectorized predict over (n, 3) states and (n, 2) actions."""
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if isinstance(model, BlendedModel):
        ph = predict_batch(model.hydrated, states, actions)
        pd = predict_batch(model.dry, states, actions)
        return (1.0 - model.beta) * ph + model.beta * pd
    phi = feature_matrix(np.hstack([states, actions]))
    nxt = states + phi @ model.theta
    return np.clip(nxt, CLAMP_LO, CLAMP_HI)


def blend_predict(model_hydrated, model_dry, beta: float, state, action) -> np.ndarray:
    """Linear interpolation of the two models' predictions by stiffness weight.

    beta outside [0, 1] is clamped: the unknown dough is bounded by the two
    reference doughs.
    """
    beta = min(1.0, max(0.0, float(beta)))
    ph = predict(model_hydrated, state, action)
    pd = predict(model_dry, state, action)
    return (1.0 - beta) * ph + beta * pd


@dataclass(frozen=True)
class BlendedModel:
    """Stiffness-interpolated pair of transition models (predictions blended)."""

    hydrated: TransitionModel
    dry: TransitionModel
    beta: float

    def predict(self, state, action) -> np.ndarray:
        return predict(self, state, action)

    def predict_batch(self, states, actions) -> np.ndarray:
        return predict_batch(self, states, actions)


def refit_with_onpolicy(model: TransitionModel, d_off: list[Transition],
                        d_on: list[Transition], on_weight: float = 10.0,
                        ridge: float = RIDGE_DEFAULT) -> TransitionModel:
    """Refit on the union of datasets with execution-time samples upweighted."""
    combined = list(d_off)
    combined += [Transition(t.state, t.action, t.next_state, weight=t.weight * on_weight)
                 for t in d_on]
    return fit(combined, ridge=ridge)


# --- persistence ----------------------------------------------------------

def model_to_text(model: TransitionModel) -> str:
    """Full-precision text form; round-trips exactly."""
    lines = [
        "# doughroll transition model",
        f"version {model.version}",
        f"inputs {' '.join(INPUT_NAMES)}",
        f"outputs {' '.join(OUTPUT_NAMES)}",
        f"n_samples {model.n_samples}",
        f"train_rmse {' '.join(repr(v) for v in model.train_rmse)}",
        f"theta {N_FEATURES} {N_OUTPUTS}",
    ]
    for row in model.theta:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def model_from_text(text: str) -> TransitionModel:
    header: dict[str, list[str]] = {}
    rows: list[list[float]] = []
    in_theta = False
    for lineno, raw in enumerate(io.StringIO(text).read().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if in_theta:
            vals = line.split()
            if len(vals) != N_OUTPUTS:
                raise ValueError(f"line {lineno}: expected {N_OUTPUTS} coefficients")
            rows.append([float(v) for v in vals])
            continue
        key, *vals = line.split()
        header[key] = vals
        if key == "theta":
            in_theta = True
    if header.get("version", [None])[0] != FEATURE_VERSION:
        raise ValueError(f"unsupported feature ordering version: {header.get('version')}")
    if len(rows) != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} coefficient rows, got {len(rows)}")
    rmse = tuple(float(v) for v in header.get("train_rmse", ["0", "0", "0"]))
    n = int(header.get("n_samples", ["0"])[0])
    return TransitionModel(theta=np.array(rows, dtype=float), train_rmse=rmse, n_samples=n)


def save_model(path, model: TransitionModel) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_text(model))


def load_model(path) -> TransitionModel:
    with open(path) as fh:
        return model_from_text(fh.read())
