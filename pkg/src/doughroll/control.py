"""Episode orchestration: policies, the observe-plan-roll loop, and logs.

An episode repeatedly renders a cloud, featurizes it, checks the goal, picks
an action with the configured policy, and rolls.  In iterative mode the
transition model is refit on schedule from execution-time data (upweighted)
plus the original exploration dataset, never looking ahead of the current
step.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynmodel, planning
from .geometry import DoughState, NoDoughError, featurize
from .planning import PlanConfig
from .sim import DoughSim, RollAction, goal_state_for_length

POLICIES = ("random", "heuristic", "mpc_cem", "mpc_powell")

LOG_COLUMNS = ("step", "l", "w", "h", "x_h", "y_h", "band", "depth",
               "reward", "dist", "model_version")


@dataclass(frozen=True)
class EpisodeConfig:
    policy: str
    goal_length: float  # m
    epsilon: float = 0.01
    max_steps: int = 200
    refit_period: int = 10  # T
    model_mode: str = "fixed"  # fixed | iterative
    seed: int = 0
    ell_max: float = 0.12
    delta_min: float = 0.005
    on_weight: float = 10.0
    cloud_points: int = 2000
    plan: PlanConfig = field(default_factory=PlanConfig)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.model_mode not in ("fixed", "iterative"):
            raise ValueError(f"unknown model mode {self.model_mode!r}")
        if self.epsilon <= 0.0 or self.max_steps < 1 or self.refit_period < 1:
            raise ValueError("epsilon, max_steps and refit_period must be positive")


@dataclass(frozen=True)
class StepRecord:
    step: int
    state: DoughState
    action: tuple[float, float] | None  # None on the terminal observation row
    reward: float
    dist: float
    model_version: int


@dataclass
class EpisodeLog:
    goal: tuple[float, float, float]
    epsilon: float
    policy: str
    seed: int
    records: list[StepRecord] = field(default_factory=list)
    outcome: str = "max_steps"  # reached | max_steps | fault
    steps_to_goal: int = 0
    refit_steps: list[tuple[int, int]] = field(default_factory=list)  # (step, n_onpolicy)


def random_action(state: DoughState, ell_max: float, rng: np.random.Generator,
                  delta_min: float = 0.005) -> RollAction:
    """Uniform sample from the state-dependent action box."""
    if state.w > ell_max:
        band = ell_max  # dough wider than the maximum throw
    else:
        band = float(rng.uniform(state.w, ell_max))
    hi = max(state.h, delta_min)
    depth = delta_min if hi == delta_min else float(rng.uniform(delta_min, hi))
    return RollAction(band=band, depth=depth)


def heuristic_action(state: DoughState, ell_max: float, goal_h: float,
                     delta_min: float = 0.005) -> RollAction:
    """Fixed high-force policy: 4/5 of the maximum throw, press to half goal height."""
    band = max(0.8 * ell_max, state.w)
    band = min(band, ell_max)
    depth = state.h - 0.5 * goal_h
    depth = min(max(depth, delta_min), max(state.h, delta_min))
    return RollAction(band=band, depth=depth)


def goal_reached(state, goal, epsilon: float) -> bool:
    """True iff the (l, w, h) distance to the goal is strictly below epsilon."""
    return goal_distance(state, goal) < epsilon


def goal_distance(state, goal) -> float:
    s = state.lwh() if hasattr(state, "lwh") else np.asarray(state, dtype=float)
    return float(np.linalg.norm(s - np.asarray(goal, dtype=float)))


def run_episode(sim_env: DoughSim, model, config: EpisodeConfig,
                d_off: list[dynmodel.Transition] | None = None):
    """Run one closed-loop episode; returns (EpisodeLog, final model).

    MPC policies need a model; iterative mode additionally needs the original
    exploration dataset d_off for refitting.
    """
    is_mpc = config.policy in ("mpc_cem", "mpc_powell")
    if is_mpc and model is None:
        raise ValueError(f"policy {config.policy!r} requires a transition model")
    if config.model_mode == "iterative" and d_off is None:
        raise ValueError("iterative mode requires the off-policy dataset")

    goal = goal_state_for_length(sim_env.volume, config.goal_length)
    rng = np.random.default_rng(config.seed)
    log = EpisodeLog(goal=goal, epsilon=config.epsilon, policy=config.policy,
                     seed=config.seed)
    d_on: list[dynmodel.Transition] = []
    pending: tuple[DoughState, RollAction] | None = None
    model_version = 0
    prev_seq = None

    for step_idx in range(config.max_steps + 1):
        try:
            state = featurize(sim_env.observe(config.cloud_points))
        except NoDoughError:
            log.outcome = "fault"
            log.steps_to_goal = step_idx
            return log, model
        if pending is not None:
            d_on.append(dynmodel.Transition(
                state=(pending[0].l, pending[0].w, pending[0].h),
                action=(pending[1].band, pending[1].depth),
                next_state=(state.l, state.w, state.h)))
            pending = None
        dist = goal_distance(state, goal)
        if dist < config.epsilon:
            log.records.append(StepRecord(step_idx, state, None, -dist, dist, model_version))
            log.outcome = "reached"
            log.steps_to_goal = step_idx
            return log, model
        if step_idx == config.max_steps:
            log.records.append(StepRecord(step_idx, state, None, -dist, dist, model_version))
            log.outcome = "max_steps"
            log.steps_to_goal = config.max_steps
            return log, model

        if (config.model_mode == "iterative" and step_idx > 0
                and step_idx % config.refit_period == 0):
            model = dynmodel.refit_with_onpolicy(model, d_off, d_on, config.on_weight)
            model_version += 1
            log.refit_steps.append((step_idx, len(d_on)))
            prev_seq = None

        if config.policy == "random":
            action = random_action(state, config.ell_max, rng, config.delta_min)
        elif config.policy == "heuristic":
            action = heuristic_action(state, config.ell_max, goal[2], config.delta_min)
        elif config.policy == "mpc_cem":
            seq = planning.plan_cem(model, state, goal, config.plan, rng)
            action = RollAction(band=float(seq[0, 0]), depth=float(seq[0, 1]))
        else:
            seq = planning.plan_powell(model, state, goal, config.plan, prev_seq=prev_seq)
            prev_seq = seq
            action = RollAction(band=float(seq[0, 0]), depth=float(seq[0, 1]))

        lo, hi = planning.action_bounds(state, config.ell_max, config.delta_min)
        action = RollAction(band=float(np.clip(action.band, lo[0], hi[0])),
                            depth=float(np.clip(action.depth, lo[1], hi[1])))
        sim_env.apply(action, anchor=(state.x_h, state.y_h))
        log.records.append(StepRecord(step_idx, state, (action.band, action.depth),
                                      -dist, dist, model_version))
        pending = (state, action)
    raise AssertionError("unreachable")


def collect_offpolicy(material, n_inits: int, steps_per_init: int, seed: int,
                      diameter: float = 0.04, params=None, cloud_points: int = 2000,
                      ell_max: float = 0.12) -> list[dynmodel.Transition]:
    """Random-exploration dataset with periodic re-initialization.

    Observations come from the full cloud-featurization pipeline, so the
    dataset reflects what the camera would have seen, not the latent state.
    """
    from .sim import DEFAULT_PARAMS
    params = params or DEFAULT_PARAMS
    data: list[dynmodel.Transition] = []
    for init_idx in range(n_inits):
        env = DoughSim(material, seed=seed + 1000 * init_idx, diameter=diameter,
                       params=params)
        rng = np.random.default_rng(seed + 1000 * init_idx + 1)
        state = featurize(env.observe(cloud_points))
        for _ in range(steps_per_init):
            action = random_action(state, ell_max, rng)
            env.apply(action, anchor=(state.x_h, state.y_h))
            nxt = featurize(env.observe(cloud_points))
            data.append(dynmodel.Transition(
                state=(state.l, state.w, state.h),
                action=(action.band, action.depth),
                next_state=(nxt.l, nxt.w, nxt.h)))
            state = nxt
    return data


# --- dataset and log serialization -----------------------------------------

DATASET_COLUMNS = ("l", "w", "h", "band", "depth", "l_next", "w_next", "h_next")


def dataset_to_csv(data: list[dynmodel.Transition]) -> str:
    lines = [",".join(DATASET_COLUMNS)]
    for t in data:
        vals = [*t.state, *t.action, *t.next_state]
        lines.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def dataset_from_csv(text: str) -> list[dynmodel.Transition]:
    lines = text.splitlines()
    if not lines or lines[0].split(",")[0] != "l":
        raise ValueError("line 1: missing dataset header")
    data = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(DATASET_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(DATASET_COLUMNS)} columns, "
                             f"got {len(parts)}")
        try:
            v = [float(p) for p in parts]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        data.append(dynmodel.Transition(state=(v[0], v[1], v[2]), action=(v[3], v[4]),
                                        next_state=(v[5], v[6], v[7])))
    return data


def log_to_csv(log: EpisodeLog) -> str:
    meta = (f"# goal {log.goal[0]!r} {log.goal[1]!r} {log.goal[2]!r} "
            f"epsilon {log.epsilon!r} policy {log.policy} seed {log.seed} "
            f"outcome {log.outcome} steps_to_goal {log.steps_to_goal}")
    lines = [meta, ",".join(LOG_COLUMNS)]
    for r in log.records:
        band = repr(r.action[0]) if r.action else ""
        depth = repr(r.action[1]) if r.action else ""
        lines.append(",".join([
            str(r.step), repr(r.state.l), repr(r.state.w), repr(r.state.h),
            repr(r.state.x_h), repr(r.state.y_h), band, depth,
            repr(r.reward), repr(r.dist), str(r.model_version)]))
    return "\n".join(lines) + "\n"


def log_from_csv(text: str) -> EpisodeLog:
    lines = io.StringIO(text).read().splitlines()
    if not lines or not lines[0].startswith("# goal "):
        raise ValueError("line 1: missing log metadata header")
    meta = lines[0][2:].split()
    try:
        goal = (float(meta[1]), float(meta[2]), float(meta[3]))
        epsilon = float(meta[5])
        policy = meta[7]
        seed = int(meta[9])
        outcome = meta[11]
        steps_to_goal = int(meta[13])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"line 1: malformed metadata: {exc}") from exc
    if len(lines) < 2 or lines[1] != ",".join(LOG_COLUMNS):
        raise ValueError("line 2: missing column header")
    log = EpisodeLog(goal=goal, epsilon=epsilon, policy=policy, seed=seed,
                     outcome=outcome, steps_to_goal=steps_to_goal)
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(LOG_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(LOG_COLUMNS)} columns, "
                             f"got {len(parts)}")
        try:
            state = DoughState(l=float(parts[1]), w=float(parts[2]), h=float(parts[3]),
                               x_h=float(parts[4]), y_h=float(parts[5]))
            action = (float(parts[6]), float(parts[7])) if parts[6] else None
            rec = StepRecord(step=int(parts[0]), state=state, action=action,
                             reward=float(parts[8]), dist=float(parts[9]),
                             model_version=int(parts[10]))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        log.records.append(rec)
    return log


def validate_log(log: EpisodeLog, ell_max: float = 0.12, delta_min: float = 0.005,
                 tol: float = 1e-9) -> list[str]:
    """Check the log invariants; returns a list of human-readable violations."""
    violations = []
    if log.steps_to_goal > max((r.step for r in log.records), default=0):
        violations.append("steps_to_goal exceeds the last recorded step")
    version = 0
    for r in log.records:
        if r.model_version < version:
            violations.append(f"step {r.step}: model version decreased")
        version = r.model_version
        if abs(r.dist - goal_distance(r.state, log.goal)) > 1e-6:
            violations.append(f"step {r.step}: recorded distance does not match the state")
        if r.action is not None:
            band, depth = r.action
            lo, hi = planning.action_bounds(r.state, ell_max, delta_min)
            if not (lo[0] - tol <= band <= hi[0] + tol):
                violations.append(f"step {r.step}: band {band!r} outside [{lo[0]!r}, {hi[0]!r}]")
            if not (lo[1] - tol <= depth <= hi[1] + tol):
                violations.append(f"step {r.step}: depth {depth!r} outside [{lo[1]!r}, {hi[1]!r}]")
    if log.outcome == "reached":
        if not log.records or log.records[-1].action is not None:
            violations.append("reached log must end with a terminal observation row")
        elif log.records[-1].dist >= log.epsilon:
            violations.append("final distance of a reached log is not below epsilon")
    return violations
