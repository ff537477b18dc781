"""Scene synthesis: per-sample signal model, noise statistics, determinism."""

import math

import numpy as np
import pytest

from respspace.config import RadarConfig
from respspace.scene import Scatterer, SceneSpec, breathing_displacement
from respspace.simulate import (
    ENVELOPE_HALF_WIDTH_BINS,
    SUB_REFLECTORS,
    _sub_reflectors,
    radar_for_scene,
    synthesize_scene,
)
from tests.conftest import make_breather


def test_point_on_bin_center_at_boresight():
    """A static point exactly on a bin center at theta=0 fills exactly one
    range bin (the sinc^2 envelope has nulls on the neighboring centers) with
    amplitude rcs/r and identical phase on every element."""
    radar = RadarConfig(num_range_bins=64)
    r = 20 * radar.range_resolution_m
    scene = SceneSpec(clutter=[Scatterer(position=(0.0, r), rcs_scale=2.0)],
                      noise_power=0.0, duration_s=1.0)
    cube = synthesize_scene(scene, radar, seed=0)
    expected = np.zeros((10, 64, radar.num_virtual_elements), dtype=complex)
    expected[:, 20, :] = 2.0 / r
    np.testing.assert_allclose(cube.data, expected, atol=1e-12)


def test_off_axis_point_matches_direct_model():
    """General case: amplitude * sinc^2 range envelope * steering phase."""
    radar = RadarConfig(num_range_bins=64)
    x, y = 0.9, 2.0
    scene = SceneSpec(clutter=[Scatterer(position=(x, y), rcs_scale=1.3)],
                      noise_power=0.0, duration_s=0.5)
    cube = synthesize_scene(scene, radar, seed=0)

    r = math.hypot(x, y)
    theta = math.atan2(x, y)
    grid = radar.range_grid_m
    center = r / radar.range_resolution_m
    expected = np.zeros((5, 64, radar.num_virtual_elements), dtype=complex)
    lo = int(math.floor(center)) - ENVELOPE_HALF_WIDTH_BINS
    hi = int(math.ceil(center)) + ENVELOPE_HALF_WIDTH_BINS + 1
    for b in range(lo, hi):
        env = np.sinc((grid[b] - r) / radar.range_resolution_m) ** 2
        for k in range(radar.num_virtual_elements):
            expected[:, b, k] = (1.3 / r) * env * np.exp(-1j * np.pi * k * math.sin(theta))
    np.testing.assert_allclose(cube.data, expected, rtol=1e-12, atol=1e-15)


def test_breathing_modulates_slow_time_phase():
    radar = RadarConfig(num_range_bins=64)
    r = 25 * radar.range_resolution_m
    target = make_breather((0.0, r), 4.0, amplitude_m=2e-3)
    scene = SceneSpec(targets=[target], noise_power=0.0, duration_s=12.0)
    cube = synthesize_scene(scene, radar, seed=0)
    t = np.arange(cube.num_frames) * radar.slow_time_step_s
    d = breathing_displacement(target.breathing, t)
    got = np.unwrap(np.angle(cube.data[:, 25, 0]))
    want = 4.0 * np.pi * d / radar.center_wavelength_m
    np.testing.assert_allclose(got - got[0], want - want[0], atol=1e-9)


def test_superposition_of_scatterers():
    radar = RadarConfig(num_range_bins=64)
    s1 = Scatterer(position=(-0.4, 1.5), rcs_scale=1.0)
    s2 = Scatterer(position=(0.8, 2.2), rcs_scale=0.7)
    one = synthesize_scene(SceneSpec(clutter=[s1], duration_s=1.0), radar)
    two = synthesize_scene(SceneSpec(clutter=[s2], duration_s=1.0), radar)
    both = synthesize_scene(SceneSpec(clutter=[s1, s2], duration_s=1.0), radar)
    np.testing.assert_allclose(both.data, one.data + two.data, rtol=1e-12, atol=1e-15)


def test_noise_power_and_seed():
    radar = RadarConfig(num_range_bins=32)
    scene = SceneSpec(noise_power=0.04, duration_s=20.0)
    a = synthesize_scene(scene, radar, seed=7)
    b = synthesize_scene(scene, radar, seed=7)
    c = synthesize_scene(scene, radar, seed=8)
    np.testing.assert_array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    # complex circular Gaussian: E|n|^2 equals the configured power
    assert np.mean(np.abs(a.data) ** 2) == pytest.approx(0.04, rel=0.02)
    quiet = synthesize_scene(SceneSpec(noise_power=0.0, duration_s=1.0), radar)
    assert np.all(quiet.data == 0)


def test_radar_for_scene_expands_range_coverage():
    near = SceneSpec(targets=[make_breather((0.0, 2.0), 4.0)])
    assert radar_for_scene(near) == RadarConfig()
    far_r = RadarConfig().max_range_m + 1.0
    far = SceneSpec(targets=[make_breather((0.0, far_r), 4.0)])
    radar = radar_for_scene(far)
    assert radar.max_range_m >= far_r + ENVELOPE_HALF_WIDTH_BINS * radar.range_resolution_m
    # only the bin count may change
    assert radar.num_virtual_elements == RadarConfig().num_virtual_elements


def test_sub_reflectors_geometry():
    scat = Scatterer(position=(1.0, 2.0), rcs_scale=1.5, extent_m=0.5)
    subs = _sub_reflectors(scat)
    assert len(subs) == SUB_REFLECTORS
    # total reflectivity preserved and edges tapered
    assert sum(rcs for _, _, rcs in subs) == pytest.approx(1.5)
    assert subs[0][2] < subs[SUB_REFLECTORS // 2][2]
    x0, y0 = scat.position
    for x, y, _ in subs:
        off = np.array([x - x0, y - y0])
        # strip is perpendicular to the line of sight and spans the extent
        assert abs(off @ np.array([x0, y0])) < 1e-12
        assert np.linalg.norm(off) <= 0.25 + 1e-12
    point = _sub_reflectors(Scatterer(position=(1.0, 2.0), rcs_scale=1.5))
    assert point == [(1.0, 2.0, 1.5)]


def test_extended_target_is_rigid():
    """All strip pieces share one displacement waveform: the slow-time phase
    at the footprint's strongest cell tracks the same breathing signal."""
    radar = RadarConfig(num_range_bins=64)
    target = make_breather((0.0, 25 * radar.range_resolution_m), 3.0,
                           amplitude_m=1.5e-3, extent_m=0.5)
    scene = SceneSpec(targets=[target], noise_power=0.0, duration_s=9.0)
    cube = synthesize_scene(scene, radar, seed=0)
    t = np.arange(cube.num_frames) * radar.slow_time_step_s
    d = breathing_displacement(target.breathing, t)
    want = 4.0 * np.pi * d / radar.center_wavelength_m
    got = np.unwrap(np.angle(cube.data[:, 25, 3]))
    np.testing.assert_allclose(got - got[0], want - want[0], atol=1e-9)


def test_scatterer_at_origin_rejected():
    scene = SceneSpec(clutter=[Scatterer(position=(0.0, 0.0))], duration_s=1.0)
    with pytest.raises(ValueError, match="positive range"):
        synthesize_scene(scene, RadarConfig(num_range_bins=16), seed=0)
