"""Contact-force surface of the elastic hand and stiffness probing.

The hand's force output grows with both the band stretch and the indentation
depth.  A power-law surface F = c * (band/band_ref)^a * depth_mm^b is fit to
calibration data; pressing force divided by the observed vertical deflection
gives a one-number stiffness proxy in N/mm, which in turn sets the blend
coefficient between the soft-dough and stiff-dough transition models.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

# Planted calibration surface (depth in mm inside the power law).
TRUE_FORCE_C = 50.0
TRUE_FORCE_A = 1.2
TRUE_FORCE_B = 1.3
BAND_REF = 0.06

# A deflection below this is invisible to the overhead camera.
DEFLECTION_THRESHOLD_MM = 1.0

# Ascending palpation probes: (band length m, depth m).
DEFAULT_PROBE_SCHEDULE = ((0.096, 0.002), (0.096, 0.004), (0.096, 0.006), (0.096, 0.008))


class CalibrationError(ValueError):
    """Calibration data produced a non-monotone or unusable force surface."""


class EstimationFailedError(RuntimeError):
    """No probe in the palpation schedule produced an observable deflection."""


@dataclass(frozen=True)
class ForceModel:
    """Fitted force surface F(band, depth) = c * (band/band_ref)^a * depth_mm^b."""

    c: float
    a: float
    b: float
    band_ref: float = BAND_REF
    residual: float = 0.0
    band_range: tuple[float, float] = (0.0, 0.0)
    depth_range: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class StiffnessEstimate:
    sigma: float  # N/mm
    deflection_used: float  # mm
    force_used: float  # N
    band: float  # m
    depth: float  # m


def true_force(band: float, depth: float) -> float:
    """Ground-truth contact force in newtons (band and depth in meters)."""
    if depth <= 0.0:
        return 0.0
    return TRUE_FORCE_C * (band / BAND_REF) ** TRUE_FORCE_A * (depth * 1e3) ** TRUE_FORCE_B


def synthetic_calibration(seed: int = 7041, noise: float = 0.02,
                          bands=(0.06, 0.08, 0.10, 0.12),
                          depths_mm=(1.0, 2.0, 4.0, 6.0, 8.0, 10.0)) -> np.ndarray:
    """Generate the shipped calibration grid: rows of (band_m, depth_m, force_N).

    Multiplicative noise stands in for sensor scatter; the planted power law is
    the only structure.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for band in bands:
        for dmm in depths_mm:
            f = true_force(band, dmm * 1e-3)
            f *= 1.0 + noise * rng.standard_normal()
            rows.append((band, dmm * 1e-3, f))
    return np.array(rows, dtype=float)


def fit_force_model(calibration) -> ForceModel:
    """Least-squares fit of the power-law surface to (band, depth, force) rows.

    The fit is linear in log space; rows with depth == 0 carry no information
    (the surface is pinned to F = 0 there) and are skipped.
    """
    data = np.asarray(calibration, dtype=float).reshape(-1, 3)
    mask = data[:, 1] > 0.0
    data = data[mask]
    if data.shape[0] < 12:
        raise CalibrationError(f"need >= 12 nonzero-depth samples, got {data.shape[0]}")
    if np.any(data[:, 2] <= 0.0):
        raise CalibrationError("non-positive force at nonzero depth")
    band, depth, force = data.T
    X = np.column_stack([np.ones_like(band), np.log(band / BAND_REF), np.log(depth * 1e3)])
    y = np.log(force)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    c, a, b = math.exp(coef[0]), float(coef[1]), float(coef[2])
    if a < 0.0 or b <= 0.0:
        raise CalibrationError(f"fitted surface is not monotone (a={a:.4g}, b={b:.4g})")
    model = ForceModel(
        c=c, a=a, b=b, band_ref=BAND_REF,
        band_range=(float(band.min()), float(band.max())),
        depth_range=(float(depth.min()), float(depth.max())),
    )
    pred = np.array([predict_force(model, bb, dd) for bb, dd in zip(band, depth)])
    resid = float(np.sqrt(np.mean((pred - force) ** 2)))
    return ForceModel(c=c, a=a, b=b, band_ref=BAND_REF, residual=resid,
                      band_range=model.band_range, depth_range=model.depth_range)


def predict_force(model: ForceModel, band: float, depth: float) -> float:
    """Force in newtons for a band length and press depth in meters."""
    if depth <= 0.0:
        return 0.0
    return model.c * (band / model.band_ref) ** model.a * (depth * 1e3) ** model.b


def in_calibrated_range(model: ForceModel, band: float, depth: float) -> bool:
    b0, b1 = model.band_range
    d0, d1 = model.depth_range
    return b0 <= band <= b1 and d0 <= depth <= d1


def palpate_and_estimate(sim_env, force_model: ForceModel,
                         schedule=DEFAULT_PROBE_SCHEDULE) -> StiffnessEstimate:
    """Press the dough with increasing force until it visibly deflects.

    sim_env must expose probe_deflection_mm(band, depth); the first probe whose
    deflection reaches the camera threshold gives sigma = predicted force over
    observed deflection.
    """
    for band, depth in schedule:
        deflection = float(sim_env.probe_deflection_mm(band, depth))
        if deflection >= DEFLECTION_THRESHOLD_MM:
            force = predict_force(force_model, band, depth)
            return StiffnessEstimate(sigma=force / deflection, deflection_used=deflection,
                                     force_used=force, band=band, depth=depth)
    raise EstimationFailedError("no observable deflection across the probe schedule")


def blend_coefficient(sigma_unknown: float, sigma_hydrated: float, sigma_dry: float) -> float:
    """Interpolation weight between the hydrated (soft) and dry (stiff) models.

    Clamped to [0, 1]: an unknown dough outside the two references is treated
    as coinciding with the nearer one.
    """
    if sigma_dry <= sigma_hydrated:
        raise ValueError(f"sigma_dry ({sigma_dry}) must exceed sigma_hydrated ({sigma_hydrated})")
    beta = (sigma_unknown - sigma_hydrated) / (sigma_dry - sigma_hydrated)
    return min(1.0, max(0.0, beta))


# --- persistence ----------------------------------------------------------

def write_calibration_csv(path, calibration) -> None:
    data = np.asarray(calibration, dtype=float).reshape(-1, 3)
    with open(path, "w") as fh:
        fh.write("band_m,depth_m,force_N\n")
        for band, depth, force in data:
            fh.write(f"{band!r},{depth!r},{force!r}\n")


def read_calibration_csv(path) -> np.ndarray:
    with open(path) as fh:
        return parse_calibration_csv(fh.read())


def parse_calibration_csv(text: str) -> np.ndarray:
    rows = []
    lines = io.StringIO(text).read().splitlines()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if lineno == 1 and line.split(",")[0] == "band_m":
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 columns, got {len(parts)}")
        rows.append([float(v) for v in parts])
    return np.array(rows, dtype=float).reshape(-1, 3)


def force_model_to_text(model: ForceModel) -> str:
    lines = [
        "# doughroll force model v1",
        "# F = c * (band/band_ref)^a * (depth_mm)^b",
        f"c {model.c!r}",
        f"a {model.a!r}",
        f"b {model.b!r}",
        f"band_ref {model.band_ref!r}",
        f"residual {model.residual!r}",
        f"band_range {model.band_range[0]!r} {model.band_range[1]!r}",
        f"depth_range {model.depth_range[0]!r} {model.depth_range[1]!r}",
    ]
    return "\n".join(lines) + "\n"


def force_model_from_text(text: str) -> ForceModel:
    fields: dict[str, list[float]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, *vals = line.split()
        fields[key] = [float(v) for v in vals]
    try:
        return ForceModel(
            c=fields["c"][0], a=fields["a"][0], b=fields["b"][0],
            band_ref=fields["band_ref"][0], residual=fields["residual"][0],
            band_range=(fields["band_range"][0], fields["band_range"][1]),
            depth_range=(fields["depth_range"][0], fields["depth_range"][1]),
        )
    except KeyError as exc:
        raise ValueError(f"force model text missing field {exc}") from exc
