"""Action-sequence optimization over a learned transition model.

Two derivative-free planners maximize the discounted H-step objective: an
iterative random-shooting / cross-entropy loop that refines a Gaussian
sampling distribution, and Powell's conjugate-direction method with a
Brent-style line search.  Model predictive control executes only the first
action of the returned sequence and replans.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynmodel

GOLD = 1.618033988749895
INV_GOLD = 0.3819660112501051


@dataclass(frozen=True)
class CemConfig:
    samples: int = 100  # K
    iters: int = 3  # M
    elites: int = 10  # N
    smoothing: float = 0.5  # beta
    reuse_noise: bool = False
    var_floor: float = 1e-8


@dataclass(frozen=True)
class PowellConfig:
    max_iters: int = 60
    x_tol: float = 1e-6
    f_tol: float = 1e-10


@dataclass(frozen=True)
class PlanConfig:
    horizon: int = 10  # H
    gamma: float = 0.9
    ell_max: float = 0.12
    delta_min: float = 0.005
    cem: CemConfig = field(default_factory=CemConfig)
    powell: PowellConfig = field(default_factory=PowellConfig)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 1 <= self.cem.elites <= self.cem.samples:
            raise ValueError("need samples >= elites >= 1")
        if not 0.0 <= self.cem.smoothing <= 1.0:
            raise ValueError("smoothing must lie in [0, 1]")


def _lwh(state) -> np.ndarray:
    if hasattr(state, "lwh"):
        return state.lwh()
    return np.asarray(state, dtype=float).reshape(3)


def reward(state, goal) -> float:
    """Negative Euclidean distance of (l, w, h) to the goal features, meters."""
    return -float(np.linalg.norm(_lwh(state) - _lwh(goal)))


def action_bounds(state_lwh, ell_max: float, delta_min: float) -> tuple[np.ndarray, np.ndarray]:
    """State-dependent admissible box for (band, depth)."""
    s = _lwh(state_lwh)
    lo = np.array([min(s[1], ell_max), delta_min])
    hi = np.array([ell_max, max(s[2], delta_min)])
    return lo, hi


def _rollout_scores(model, s0_lwh, seqs: np.ndarray, goal, gamma: float,
                    ell_max: float, delta_min: float) -> np.ndarray:
    """Discounted returns for (k, H, 2) action sequences, clamped step-by-step.

    Actions are re-clamped against the model's own predicted state at every
    step before prediction.
    """
    k, horizon, _ = seqs.shape
    states = np.tile(_lwh(s0_lwh), (k, 1))
    goal_v = _lwh(goal)
    total = np.zeros(k)
    discount = 1.0
    for n in range(horizon):
        band = np.clip(seqs[:, n, 0], np.minimum(states[:, 1], ell_max), ell_max)
        depth = np.clip(seqs[:, n, 1], delta_min, np.maximum(states[:, 2], delta_min))
        states = dynmodel.predict_batch(model, states, np.column_stack([band, depth]))
        total += discount * -np.linalg.norm(states - goal_v, axis=1)
        discount *= gamma
    return total


def evaluate_sequence(model, s0, seq, goal, gamma: float,
                      ell_max: float = 0.12, delta_min: float = 0.005) -> float:
    """Cumulative discounted reward of one H-step sequence under the model."""
    seq = np.asarray(seq, dtype=float).reshape(-1, 2)
    return float(_rollout_scores(model, s0, seq[None], goal, gamma, ell_max, delta_min)[0])


def clamp_sequence(model, s0, seq, ell_max: float, delta_min: float) -> np.ndarray:
    """Clamp each action to the bounds induced by the model's predicted states."""
    seq = np.array(seq, dtype=float).reshape(-1, 2)
    state = _lwh(s0)
    for n in range(seq.shape[0]):
        lo, hi = action_bounds(state, ell_max, delta_min)
        seq[n] = np.clip(seq[n], lo, hi)
        state = dynmodel.predict(model, state, seq[n])
    return seq


def plan_cem(model, s0, goal, config: PlanConfig, rng: np.random.Generator,
             score_fn=None) -> np.ndarray:
    """Iterative random shooting with distribution refinement.

    Samples K sequences per iteration from a diagonal Gaussian, keeps the top
    N by return, and smooths the mean/variance toward the elite statistics.
    The final mean, clamped to the model-consistent bounds, is the plan.
    score_fn (scores for a (k, H, 2) batch) replaces the model rollout when
    given; used for testing against objectives with known optima.
    """
    horizon = config.horizon
    c = config.cem
    lo, hi = action_bounds(s0, config.ell_max, config.delta_min)
    mu = np.tile(0.5 * (lo + hi), (horizon, 1))
    var = np.tile((0.5 * (hi - lo)) ** 2, (horizon, 1))
    var = np.maximum(var, c.var_floor)
    noise = rng.standard_normal((c.samples, horizon, 2)) if c.reuse_noise else None
    for _ in range(c.iters):
        z = noise if noise is not None else rng.standard_normal((c.samples, horizon, 2))
        samples = mu[None] + np.sqrt(var)[None] * z
        samples = np.clip(samples, lo, hi)
        if score_fn is not None:
            scores = np.asarray(score_fn(samples), dtype=float)
        else:
            scores = _rollout_scores(model, s0, samples, goal, config.gamma,
                                     config.ell_max, config.delta_min)
        elite_idx = np.argsort(-scores, kind="stable")[: c.elites]
        elite = samples[elite_idx]
        mu = c.smoothing * elite.mean(axis=0) + (1.0 - c.smoothing) * mu
        var = c.smoothing * elite.var(axis=0) + (1.0 - c.smoothing) * var
        var = np.maximum(var, c.var_floor)
    if score_fn is not None:
        return np.clip(mu, lo, hi)
    return clamp_sequence(model, s0, mu, config.ell_max, config.delta_min)


def plan_powell(model, s0, goal, config: PlanConfig, prev_seq=None,
                score_fn=None) -> np.ndarray:
    """Maximize the horizon objective over the flattened sequence with Powell.

    Warm-started from the previous solution shifted by one step (last action
    repeated); the first call starts at the bound midpoints.
    """
    horizon = config.horizon
    lo, hi = action_bounds(s0, config.ell_max, config.delta_min)
    lo_v = np.tile(lo, horizon)
    hi_v = np.tile(hi, horizon)
    if prev_seq is not None:
        prev = np.asarray(prev_seq, dtype=float).reshape(-1, 2)
        x0 = np.vstack([prev[1:], prev[-1:]])[:horizon].ravel()
        x0 = np.clip(x0, lo_v, hi_v)
    else:
        x0 = np.tile(0.5 * (lo + hi), horizon)

    if score_fn is not None:
        def objective(x):
            return -float(score_fn(x.reshape(1, horizon, 2))[0])
    else:
        def objective(x):
            return -_rollout_scores(model, s0, x.reshape(1, horizon, 2), goal,
                                    config.gamma, config.ell_max, config.delta_min)[0]

    res = powell_minimize(objective, x0, bounds=(lo_v, hi_v),
                          x_tol=config.powell.x_tol, f_tol=config.powell.f_tol,
                          max_iters=config.powell.max_iters,
                          initial_step=0.25 * float(np.max(hi - lo)))
    seq = np.clip(res.x, lo_v, hi_v).reshape(horizon, 2)
    if score_fn is not None:
        return seq
    return clamp_sequence(model, s0, seq, config.ell_max, config.delta_min)


# --- Powell's conjugate direction method -----------------------------------

@dataclass(frozen=True)
class PowellResult:
    x: np.ndarray
    fun: float
    n_iters: int
    converged: bool


def _bracket(f, xa: float, xb: float, max_grow: int = 60):
    """Expand downhill from (xa, xb) until a local minimum is bracketed."""
    fa, fb = f(xa), f(xb)
    if fb > fa:
        xa, xb, fa, fb = xb, xa, fb, fa
    xc = xb + GOLD * (xb - xa)
    fc = f(xc)
    grows = 0
    while fc < fb and grows < max_grow:
        xa, xb, fa, fb = xb, xc, fb, fc
        xc = xb + GOLD * (xb - xa)
        fc = f(xc)
        grows += 1
    return xa, xb, xc, fb


def _brent(f, xa: float, xb: float, xc: float, fb: float, tol: float,
           max_iters: int = 80) -> tuple[float, float]:
    """Brent's parabolic-interpolation line minimum inside a bracket."""
    a, b = (xa, xc) if xa < xc else (xc, xa)
    x = w = v = xb
    fx = fw = fv = fb
    d = e = 0.0
    for _ in range(max_iters):
        xm = 0.5 * (a + b)
        tol1 = tol
        tol2 = 2.0 * tol1
        if abs(x - xm) <= tol2 - 0.5 * (b - a):
            break
        use_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            e_prev = e
            e = d
            if abs(p) < abs(0.5 * q * e_prev) and q * (a - x) < p < q * (b - x):
                d = p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if xm >= x else -tol1
                use_golden = False
        if use_golden:
            e = (b if x < xm else a) - x
            d = INV_GOLD * e
        u = x + d if abs(d) >= tol1 else x + (tol1 if d >= 0.0 else -tol1)
        fu = f(u)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, w, x = w, x, u
            fv, fw, fx = fw, fx, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, w = w, u
                fv, fw = fw, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx


def _line_minimize(f, x: np.ndarray, direction: np.ndarray, fx: float,
                   tol: float, step: float) -> tuple[np.ndarray, float]:
    """Minimize f along x + t * direction; keep x when no strict decrease."""
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        return x, fx
    u = direction / norm

    def f1d(t):
        return f(x + t * u)

    ta, tb, tc, fb = _bracket(f1d, 0.0, step)
    tmin, fmin = _brent(f1d, ta, tb, tc, fb, tol)
    if fmin < fx:
        return x + tmin * u, fmin
    return x, fx


def powell_minimize(f, x0, bounds=None, x_tol: float = 1e-8, f_tol: float = 1e-10,
                    max_iters: int = 200, penalty: float = 1e3,
                    initial_step: float = 1.0) -> PowellResult:
    """Derivative-free minimization by Powell's conjugate direction method.

    Sweeps line minimizations over a maintained direction set, replacing the
    direction of largest per-sweep decrease by the net sweep displacement when
    Powell's test favors it.  Bounds, when given, are enforced by evaluating
    at the clamped point plus a quadratic penalty on the violation, which
    keeps the search smooth near the box faces.  Stops when a sweep improves f
    by at most f_tol or moves x by at most x_tol (converged), or at max_iters
    (returns best-so-far, not converged).
    """
    x = np.array(x0, dtype=float).ravel()
    n = x.size
    if bounds is not None:
        lo, hi = (np.asarray(b, dtype=float).ravel() for b in bounds)

        def fw(p):
            q = np.clip(p, lo, hi)
            v = float(f(q)) + penalty * float(np.sum((p - q) ** 2))
            if not math.isfinite(v):
                raise ValueError("objective returned a non-finite value")
            return v
    else:
        def fw(p):
            v = float(f(p))
            if not math.isfinite(v):
                raise ValueError("objective returned a non-finite value")
            return v

    line_tol = max(0.1 * x_tol, 1e-12)
    dirs = np.eye(n)
    fx = fw(x)
    for it in range(1, max_iters + 1):
        x_start = x.copy()
        f_start = fx
        biggest_drop = 0.0
        drop_idx = 0
        for i in range(n):
            f_before = fx
            x, fx = _line_minimize(fw, x, dirs[i], fx, line_tol, initial_step)
            if f_before - fx > biggest_drop:
                biggest_drop = f_before - fx
                drop_idx = i
        if f_start - fx <= f_tol or float(np.max(np.abs(x - x_start))) <= x_tol:
            return PowellResult(x=x, fun=fx, n_iters=it, converged=True)
        # Powell's direction-replacement test on the extrapolated point.
        x_ext = 2.0 * x - x_start
        f_ext = fw(x_ext)
        if f_ext < f_start:
            t = (2.0 * (f_start - 2.0 * fx + f_ext) * (f_start - fx - biggest_drop) ** 2
                 - biggest_drop * (f_start - f_ext) ** 2)
            if t < 0.0:
                new_dir = x - x_start
                x, fx = _line_minimize(fw, x, new_dir, fx, line_tol, initial_step)
                dirs[drop_idx] = dirs[n - 1]
                dirs[n - 1] = new_dir / (np.linalg.norm(new_dir) or 1.0)
    return PowellResult(x=x, fun=fx, n_iters=max_iters, converged=False)
