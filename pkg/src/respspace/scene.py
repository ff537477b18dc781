"""Synthetic scene definitions: breathing targets, static clutter, noise.

A scene is the ground-truth oracle for the whole pipeline.  Chest motion is
modeled as a frequency-modulated sinusoid whose instantaneous period follows
a piecewise-linear interval profile, so the true respiratory interval at any
time is known in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Longest respiratory interval the estimator searches for; profiles must
# stay within it for the truth to be recoverable.
MAX_INTERVAL_S = 8.0

SCENE_SCHEMA_VERSION = 1


class SceneError(ValueError):
    """Invalid scene description (bad field, impossible geometry)."""


@dataclass(frozen=True)
class BreathingProfile:
    """Chest displacement model for one person.

    ``interval_drift`` is an optional sequence of (time_s, interval_s)
    breakpoints; between breakpoints the instantaneous respiratory interval
    varies linearly, outside them it is held constant.  Without drift the
    interval is ``base_interval_s`` throughout.
    """

    base_interval_s: float
    amplitude_m: float
    interval_drift: tuple = ()
    phase_offset_rad: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.base_interval_s <= MAX_INTERVAL_S:
            raise SceneError("base_interval_s must be in (0, %g]" % MAX_INTERVAL_S)
        if self.amplitude_m <= 0:
            raise SceneError("amplitude_m must be > 0")
        drift = tuple((float(t), float(p)) for t, p in self.interval_drift)
        object.__setattr__(self, "interval_drift", drift)
        times = [t for t, _ in drift]
        if times != sorted(times) or len(set(times)) != len(times):
            raise SceneError("interval_drift times must be strictly increasing")
        for t, p in drift:
            if t < 0:
                raise SceneError("interval_drift times must be >= 0")
            if not 0.0 < p <= MAX_INTERVAL_S:
                raise SceneError("interval_drift intervals must be in (0, %g]" % MAX_INTERVAL_S)

    def interval_at(self, t):
        """Instantaneous respiratory interval in seconds at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        if not self.interval_drift:
            out = np.full(t.shape, self.base_interval_s)
            return float(out) if out.ndim == 0 else out
        knots_t = np.array([k[0] for k in self.interval_drift])
        knots_p = np.array([k[1] for k in self.interval_drift])
        out = np.interp(t, knots_t, knots_p)
        return float(out) if out.ndim == 0 else out

    def phase_at(self, t):
        """Breathing phase: offset plus 2*pi times the integrated rate 1/interval."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if not self.interval_drift:
            phase = self.phase_offset_rad + 2.0 * np.pi * t / self.base_interval_s
            return float(phase[0]) if scalar else phase

        knots_t = np.array([k[0] for k in self.interval_drift])
        knots_p = np.array([k[1] for k in self.interval_drift])
        # cumulative cycles at each knot; segments with changing interval
        # integrate 1/linear in closed form
        cum = np.zeros(len(knots_t))
        for i in range(len(knots_t) - 1):
            cum[i + 1] = cum[i] + _cycles(knots_t[i], knots_t[i + 1],
                                          knots_p[i], knots_p[i + 1])
        idx = np.clip(np.searchsorted(knots_t, t, side="right") - 1, 0, len(knots_t) - 1)
        cycles = np.empty_like(t)
        before = t < knots_t[0]
        cycles[before] = (t[before] - knots_t[0]) / knots_p[0]
        for j in np.unique(idx[~before]):
            sel = (~before) & (idx == j)
            if j == len(knots_t) - 1:
                cycles[sel] = cum[j] + (t[sel] - knots_t[j]) / knots_p[j]
            else:
                p_end = np.interp(t[sel], knots_t, knots_p)
                cycles[sel] = cum[j] + _cycles_vec(knots_t[j], t[sel], knots_p[j], p_end)
        phase = self.phase_offset_rad + 2.0 * np.pi * cycles
        return float(phase[0]) if scalar else phase


def _cycles(t0, t1, p0, p1):
    """Breaths completed while the interval varies linearly p0 -> p1 over [t0, t1]."""
    if t1 == t0:
        return 0.0
    m = (p1 - p0) / (t1 - t0)
    if abs(m) < 1e-12:
        return (t1 - t0) / p0
    return math.log(p1 / p0) / m


def _cycles_vec(t0, t1, p0, p1):
    dt = t1 - t0
    m = np.where(dt > 0, (p1 - p0) / np.where(dt > 0, dt, 1.0), 0.0)
    small = np.abs(m) < 1e-12
    out = np.empty_like(t1)
    out[small] = dt[small] / p0
    out[~small] = np.log(p1[~small] / p0) / m[~small]
    return out


def breathing_displacement(profile: BreathingProfile, t):
    """Chest displacement in meters at time(s) ``t`` (seconds, >= 0)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    return profile.amplitude_m * np.sin(profile.phase_at(t))


@dataclass(frozen=True)
class Scatterer:
    """Static reflector at (x, y) meters from the radar.

    ``extent_m`` gives the reflector a cross-range width (a rigid strip of
    coherent sub-reflectors perpendicular to the line of sight), approximating
    a human torso; 0 keeps an ideal point.
    """

    position: tuple
    rcs_scale: float = 1.0
    extent_m: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if self.rcs_scale <= 0:
            raise SceneError("rcs_scale must be > 0")
        if self.extent_m < 0:
            raise SceneError("extent_m must be >= 0")

    @property
    def range_m(self) -> float:
        return math.hypot(*self.position)

    @property
    def theta_rad(self) -> float:
        # boresight along +y, positive angles toward +x
        return math.atan2(self.position[0], self.position[1])


@dataclass(frozen=True)
class Target(Scatterer):
    """Breathing point scatterer."""

    breathing: BreathingProfile = field(default=None)

    def __post_init__(self):
        super().__post_init__()
        if self.breathing is None:
            raise SceneError("target requires a breathing profile")


@dataclass(frozen=True)
class SceneSpec:
    targets: tuple = ()
    clutter: tuple = ()
    noise_power: float = 0.0
    duration_s: float = 120.0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "clutter", tuple(self.clutter))
        if self.duration_s <= 0:
            raise SceneError("duration_s must be > 0")
        if self.noise_power < 0:
            raise SceneError("noise_power must be >= 0")

    @property
    def max_range_m(self) -> float:
        ranges = [s.range_m + s.extent_m / 2.0 for s in self.targets + self.clutter]
        return max(ranges) if ranges else 0.0


def truth_intervals(scene: SceneSpec, t: float):
    """True instantaneous respiratory interval of every target at time ``t``."""
    if not 0.0 <= t <= scene.duration_s:
        raise ValueError("t must be within [0, duration_s]")
    return [(i, float(tgt.breathing.interval_at(t))) for i, tgt in enumerate(scene.targets)]


def snr_to_noise_power(snr_db: float) -> float:
    """Per-sample noise variance giving ``snr_db`` for a unit reflector at 1 m."""
    return 10.0 ** (-snr_db / 10.0)


# ---------------------------------------------------------------------------
# JSON scene files


def scene_to_dict(scene: SceneSpec) -> dict:
    return {
        "schema_version": SCENE_SCHEMA_VERSION,
        "duration_s": scene.duration_s,
        "noise_power": scene.noise_power,
        "targets": [
            {
                "position": list(t.position),
                "rcs_scale": t.rcs_scale,
                "extent_m": t.extent_m,
                "breathing": {
                    "base_interval_s": t.breathing.base_interval_s,
                    "amplitude_m": t.breathing.amplitude_m,
                    "phase_offset_rad": t.breathing.phase_offset_rad,
                    "interval_drift": [list(k) for k in t.breathing.interval_drift],
                },
            }
            for t in scene.targets
        ],
        "clutter": [
            {"position": list(c.position), "rcs_scale": c.rcs_scale, "extent_m": c.extent_m}
            for c in scene.clutter
        ],
    }


def save_scene(scene: SceneSpec, path, radar_overrides: dict | None = None):
    doc = scene_to_dict(scene)
    if radar_overrides:
        doc["radar"] = radar_overrides
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise SceneError(f"{where}: missing required field '{key}'")
    return doc[key]


def scene_from_dict(doc: dict) -> tuple:
    """Parse a scene document; returns (SceneSpec, radar_overrides)."""
    if not isinstance(doc, dict):
        raise SceneError("scene document must be a JSON object")
    version = doc.get("schema_version", SCENE_SCHEMA_VERSION)
    if version != SCENE_SCHEMA_VERSION:
        raise SceneError(f"schema_version: unsupported value {version!r}")

    if "noise_power" in doc and "snr_db_at_1m" in doc:
        raise SceneError("specify either noise_power or snr_db_at_1m, not both")
    if "snr_db_at_1m" in doc:
        noise_power = snr_to_noise_power(float(doc["snr_db_at_1m"]))
    else:
        noise_power = float(doc.get("noise_power", 0.0))

    targets = []
    for i, td in enumerate(doc.get("targets", [])):
        where = f"targets[{i}]"
        pos = _require(td, "position", where)
        bd = _require(td, "breathing", where)
        try:
            profile = BreathingProfile(
                base_interval_s=float(_require(bd, "base_interval_s", where + ".breathing")),
                amplitude_m=float(_require(bd, "amplitude_m", where + ".breathing")),
                interval_drift=tuple(tuple(k) for k in bd.get("interval_drift", [])),
                phase_offset_rad=float(bd.get("phase_offset_rad", 0.0)),
            )
            targets.append(Target(position=tuple(pos), rcs_scale=float(td.get("rcs_scale", 1.0)),
                                  extent_m=float(td.get("extent_m", 0.0)),
                                  breathing=profile))
        except SceneError as exc:
            raise SceneError(f"{where}: {exc}") from None
    clutter = []
    for i, cd in enumerate(doc.get("clutter", [])):
        where = f"clutter[{i}]"
        pos = _require(cd, "position", where)
        try:
            clutter.append(Scatterer(position=tuple(pos), rcs_scale=float(cd.get("rcs_scale", 1.0)),
                                     extent_m=float(cd.get("extent_m", 0.0))))
        except SceneError as exc:
            raise SceneError(f"{where}: {exc}") from None

    try:
        scene = SceneSpec(
            targets=tuple(targets),
            clutter=tuple(clutter),
            noise_power=noise_power,
            duration_s=float(doc.get("duration_s", 120.0)),
        )
    except SceneError as exc:
        raise SceneError(str(exc)) from None
    radar_overrides = doc.get("radar", {})
    if not isinstance(radar_overrides, dict):
        raise SceneError("radar: must be an object of RadarConfig overrides")
    return scene, radar_overrides


def load_scene(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return scene_from_dict(doc)
