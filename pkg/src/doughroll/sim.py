"""Synthetic dough environment.

Holds a latent half-ellipsoid (length l, width w along the table, dome height
h), applies rolling actions through an elasto-plastic flow rule, and renders
noisy surface point clouds in place of the depth camera.  Contact force above
the material's yield force squishes the dome; the displaced volume lengthens
the dough while the cross-section relaxes toward round, so repeated rolling
turns a ball into a log.  Volume is conserved exactly by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import stiffness
from .geometry import DoughState


@dataclass(frozen=True)
class SimParams:
    """Dynamics constants for the synthetic dough.

    yield_mm converts the stiffness proxy (N/mm) into a yield force; flow_gain
    scales plastic displacement per press.  round_base/round_gain control how
    fast the cross-section relaxes toward w == h while rolling.
    """

    yield_mm: float = 1600.0
    flow_gain: float = 0.026
    h_min: float = 0.004
    process_noise: float = 0.02
    round_base: float = 1.6
    round_gain: float = 3.5
    squish_cap: float = 0.25
    max_shrink: float = 0.30
    center_pull: float = 0.2
    ell_max: float = 0.12
    depth_min: float = 0.005
    thin_ref: float = 0.016
    thin_power: float = 1.0
    thin_h_floor: float = 0.006
    dl_scale: float = 0.022

    @classmethod
    def from_mapping(cls, mapping) -> "SimParams":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(mapping) - known
        if bad:
            raise ValueError(f"unknown sim parameter(s): {sorted(bad)}")
        return cls(**{k: float(v) for k, v in mapping.items()})


DEFAULT_PARAMS = SimParams()


@dataclass(frozen=True)
class Material:
    """Ground-truth dough material keyed by its stiffness proxy."""

    name: str
    stiffness_sigma: float  # N/mm
    hydration_g: float  # label only
    yield_scale: float  # N
    noise_std: float = 0.0005  # cloud noise, m


def make_material(name: str, sigma: float, hydration_g: float = 0.0,
                  noise_std: float = 0.0005, params: SimParams = DEFAULT_PARAMS) -> Material:
    if sigma <= 0.0:
        raise ValueError("stiffness must be positive")
    return Material(name=name, stiffness_sigma=sigma, hydration_g=hydration_g,
                    yield_scale=params.yield_mm * sigma, noise_std=noise_std)


def material_presets(params: SimParams = DEFAULT_PARAMS) -> dict[str, Material]:
    """The three reference doughs: hydration grams and stiffness proxies."""
    return {
        "A": make_material("A", 0.49, hydration_g=5.0, params=params),
        "B": make_material("B", 0.85, hydration_g=3.0, params=params),
        "C": make_material("C", 1.23, hydration_g=1.0, params=params),
    }


@dataclass(frozen=True)
class RollAction:
    """Effective 2-D rolling action: band length and press depth, meters."""

    band: float
    depth: float


@dataclass(frozen=True)
class LatentDough:
    """True dough geometry: half-ellipsoid with footprint l x w and height h."""

    l: float
    w: float
    h: float
    x_c: float
    y_c: float
    volume: float


@dataclass(frozen=True)
class StepResult:
    dough: LatentDough
    clamped: bool
    plastic: bool
    force: float


def half_ellipsoid_volume(l: float, w: float, h: float) -> float:
    """Volume of a half-ellipsoid with footprint semi-axes l/2, w/2 and height h."""
    return (2.0 / 3.0) * math.pi * (0.5 * l) * (0.5 * w) * h


def init_dough(material: Material, diameter: float, rng: np.random.Generator,
               jitter: float = 0.05, center: tuple[float, float] = (0.0, 0.0)) -> LatentDough:
    """Hand-rolled ball: footprint ~= diameter, dome ~= half of it, per-axis jitter."""
    if diameter <= 0.0:
        raise ValueError("diameter must be positive")
    f = 1.0 + rng.uniform(-jitter, jitter, size=3) if jitter > 0.0 else np.ones(3)
    l = diameter * float(f[0])
    w = diameter * float(f[1])
    h = 0.5 * diameter * float(f[2])
    if w > l:
        l, w = w, l
    return LatentDough(l=l, w=w, h=h, x_c=center[0], y_c=center[1],
                       volume=half_ellipsoid_volume(l, w, h))


def clamp_action(action: RollAction, w: float, h: float,
                 params: SimParams = DEFAULT_PARAMS) -> tuple[RollAction, bool]:
    """Clamp an action into the state-dependent admissible box."""
    band_lo = min(w, params.ell_max)
    band = min(max(action.band, band_lo), params.ell_max)
    depth_hi = max(h, params.depth_min)
    depth = min(max(action.depth, params.depth_min), depth_hi)
    clamped = band != action.band or depth != action.depth
    return RollAction(band=band, depth=depth), clamped


def step(dough: LatentDough, material: Material, action: RollAction,
         force_model=None, rng: np.random.Generator | None = None,
         params: SimParams = DEFAULT_PARAMS,
         anchor: tuple[float, float] | None = None) -> StepResult:
    """Apply one roll.  Out-of-bounds actions are clamped (flagged, not an error).

    force_model None means the planted ground-truth surface.  rng None (or
    process_noise == 0) gives the exact noiseless dynamics.
    """
    act, clamped = clamp_action(action, dough.w, dough.h, params)
    if force_model is None:
        force = stiffness.true_force(act.band, act.depth)
    else:
        force = stiffness.predict_force(force_model, act.band, act.depth)

    f_yield = material.yield_scale
    if force <= f_yield:
        return StepResult(dough=dough, clamped=clamped, plastic=False, force=force)

    # Thin dough flows more per press: the same indentation displaces a larger
    # fraction of a shallow dome than of a tall one.
    thin = (params.thin_ref / max(dough.h, params.thin_h_floor)) ** params.thin_power
    d_p = params.flow_gain * math.log1p((force - f_yield) / f_yield) * act.depth * thin
    if rng is not None and params.process_noise > 0.0:
        d_p *= 1.0 + params.process_noise * rng.standard_normal()
    d_p = min(max(d_p, 0.0), params.squish_cap * dough.h)
    if d_p == 0.0:
        return StepResult(dough=dough, clamped=clamped, plastic=False, force=force)

    def geometry_after(dp: float) -> tuple[float, float, float]:
        h2 = max(dough.h - dp, params.h_min)
        s_eff = (dough.h - h2) / dough.h
        rho = dough.w / dough.h
        kappa = params.round_base + params.round_gain * max(rho - 1.0, 0.0)
        shrink = min(kappa * s_eff, params.max_shrink)
        w2 = dough.w * (1.0 - shrink)
        w2 = min(max(w2, h2), act.band)
        l2 = dough.volume / ((math.pi / 6.0) * w2 * h2)
        return l2, w2, h2

    l2, w2, h2 = geometry_after(d_p)
    # One roll can only displace so much material: saturate the lengthening
    # smoothly and bisect the plastic displacement to match (monotone in d_p).
    gain = l2 - dough.l
    target = params.dl_scale * math.tanh(gain / params.dl_scale)
    if gain > target + 1e-9:
        lo_dp, hi_dp = 0.0, d_p
        for _ in range(40):
            mid = 0.5 * (lo_dp + hi_dp)
            if geometry_after(mid)[0] - dough.l > target:
                hi_dp = mid
            else:
                lo_dp = mid
        d_p = lo_dp
        l2, w2, h2 = geometry_after(d_p)
    if l2 < w2:
        l2, w2 = w2, l2

    x_c, y_c = dough.x_c, dough.y_c
    if anchor is not None:
        x_c += params.center_pull * (anchor[0] - x_c)
        y_c += params.center_pull * (anchor[1] - y_c)
    new = LatentDough(l=l2, w=w2, h=h2, x_c=x_c, y_c=y_c, volume=dough.volume)
    return StepResult(dough=new, clamped=clamped, plastic=h2 < dough.h, force=force)


def emit_cloud(dough: LatentDough, n_points: int, noise_std: float,
               rng: np.random.Generator) -> np.ndarray:
    """Sample the upper dough surface uniformly by area, plus isotropic noise.

    Stands in for the overhead depth camera; z is clipped at the table plane.
    """
    if n_points < 100:
        raise ValueError(f"n_points must be >= 100, got {n_points}")
    a, b, c = 0.5 * dough.l, 0.5 * dough.w, dough.h
    gmax = max(a * b, a * c, b * c)
    out = np.empty((0, 3))
    while out.shape[0] < n_points:
        m = max(2 * (n_points - out.shape[0]), 256)
        v = rng.standard_normal((m, 3))
        norms = np.linalg.norm(v, axis=1)
        ok = norms > 1e-12
        u = v[ok] / norms[ok, None]
        u[:, 2] = np.abs(u[:, 2])
        # Area-correct rejection for the sphere -> ellipsoid map.
        g = np.sqrt((u[:, 0] * b * c) ** 2 + (u[:, 1] * a * c) ** 2 + (u[:, 2] * a * b) ** 2)
        accept = rng.uniform(0.0, gmax, size=u.shape[0]) < g
        pts = u[accept] * np.array([a, b, c])
        out = np.vstack([out, pts])
    out = out[:n_points]
    if noise_std > 0.0:
        out = out + noise_std * rng.standard_normal(out.shape)
    out[:, 0] += dough.x_c
    out[:, 1] += dough.y_c
    out[:, 2] = np.maximum(out[:, 2], 0.0)
    return out


def goal_state_for_length(volume: float, goal_length: float) -> tuple[float, float, float]:
    """Goal feature vector: a volume-preserving cylinder of the requested length."""
    if goal_length <= 0.0:
        raise ValueError("goal length must be positive")
    r = math.sqrt(volume / (math.pi * goal_length))
    return (goal_length, 2.0 * r, 2.0 * r)


class DoughSim:
    """One episode's simulator instance: latent dough, material, and RNG."""

    def __init__(self, material: Material, seed: int, diameter: float = 0.04,
                 params: SimParams = DEFAULT_PARAMS, force_model=None,
                 jitter: float = 0.05, noiseless: bool = False):
        self.material = material
        self.params = params
        self.force_model = force_model
        self.noiseless = noiseless
        self.rng = np.random.default_rng(seed)
        self.dough = init_dough(material, diameter, self.rng, jitter=jitter)
        self.last_clamped = False

    @property
    def volume(self) -> float:
        return self.dough.volume

    def observe(self, n_points: int = 2000) -> np.ndarray:
        noise = 0.0 if self.noiseless else self.material.noise_std
        return emit_cloud(self.dough, n_points, noise, self.rng)

    def apply(self, action: RollAction, anchor: tuple[float, float] | None = None) -> StepResult:
        rng = None if self.noiseless else self.rng
        result = step(self.dough, self.material, action, force_model=self.force_model,
                      rng=rng, params=self.params, anchor=anchor)
        self.dough = result.dough
        self.last_clamped = result.clamped
        return result

    def probe_deflection_mm(self, band: float, depth: float) -> float:
        """Elastic (pre-yield) palpation response: force over stiffness, in mm."""
        if self.force_model is None:
            force = stiffness.true_force(band, depth)
        else:
            force = stiffness.predict_force(self.force_model, band, depth)
        return force / self.material.stiffness_sigma

    def true_state(self) -> DoughState:
        d = self.dough
        return DoughState(l=d.l, w=d.w, h=d.h, x_h=d.x_c, y_h=d.y_c)
