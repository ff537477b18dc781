"""Shared fixtures and helpers for the respspace test suite."""

from pathlib import Path

import numpy as np
import pytest

from respspace.config import RadarConfig
from respspace.scene import BreathingProfile, SceneSpec, Target, snr_to_noise_power

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENES_DIR = REPO_ROOT / "scenes"


@pytest.fixture(scope="session")
def scenes_dir() -> Path:
    assert SCENES_DIR.is_dir(), "scenes/ directory missing; run scripts/make_scenes.py"
    return SCENES_DIR


def make_breather(position, interval_s, amplitude_m=3e-3, phase=0.0,
                  rcs=1.0, extent_m=0.0, drift=()):
    return Target(
        position=position,
        rcs_scale=rcs,
        extent_m=extent_m,
        breathing=BreathingProfile(
            base_interval_s=interval_s,
            amplitude_m=amplitude_m,
            interval_drift=drift,
            phase_offset_rad=phase,
        ),
    )


def tiny_scene(duration_s=80.0, snr_db=20.0) -> SceneSpec:
    """Two well-separated breathers; small enough for fast end-to-end tests."""
    return SceneSpec(
        targets=[
            make_breather((-1.0, 2.5), 3.0, extent_m=0.4, rcs=1.5),
            make_breather((1.2, 3.5), 5.0, extent_m=0.4, rcs=1.5, phase=1.3),
        ],
        clutter=[],
        noise_power=snr_to_noise_power(snr_db),
        duration_s=duration_s,
    )


def small_radar(num_range_bins=96) -> RadarConfig:
    return RadarConfig(num_range_bins=num_range_bins)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
