"""Scene model: breathing phase law, serialization, validation."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from respspace.scene import (
    MAX_INTERVAL_S,
    BreathingProfile,
    SceneError,
    SceneSpec,
    Scatterer,
    Target,
    breathing_displacement,
    load_scene,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    snr_to_noise_power,
    truth_intervals,
)
from tests.conftest import make_breather, tiny_scene


# ---------------------------------------------------------------------------
# interval_at: piecewise-linear profile

def test_interval_constant_without_drift():
    p = BreathingProfile(base_interval_s=4.0, amplitude_m=1e-3)
    assert p.interval_at(0.0) == 4.0
    assert p.interval_at(123.0) == 4.0
    np.testing.assert_array_equal(p.interval_at(np.array([0.0, 5.0])), [4.0, 4.0])


def test_interval_piecewise_linear():
    p = BreathingProfile(
        base_interval_s=4.0, amplitude_m=1e-3,
        interval_drift=((10.0, 4.0), (20.0, 5.0), (30.0, 3.0)),
    )
    assert p.interval_at(10.0) == 4.0
    assert p.interval_at(15.0) == pytest.approx(4.5)
    assert p.interval_at(20.0) == 5.0
    assert p.interval_at(25.0) == pytest.approx(4.0)
    # held constant outside the knot span
    assert p.interval_at(0.0) == 4.0
    assert p.interval_at(100.0) == 3.0


# ---------------------------------------------------------------------------
# phase_at: closed form against numerical integration of the rate

def _phase_by_quadrature(profile: BreathingProfile, t: float, du=2e-4) -> float:
    """Independent oracle: 2*pi * integral_0^t du / interval(u) by trapezoid."""
    u = np.linspace(0.0, t, int(round(t / du)) + 1)
    rate = 1.0 / profile.interval_at(u)
    return profile.phase_offset_rad + 2.0 * np.pi * np.trapezoid(rate, u)


@pytest.mark.parametrize("t", [0.0, 7.3, 60.0, 95.5, 170.0])
def test_phase_matches_quadrature_with_drift(t):
    p = BreathingProfile(
        base_interval_s=4.0, amplitude_m=1e-3, phase_offset_rad=0.7,
        interval_drift=((0.0, 4.0), (60.0, 5.0), (120.0, 2.8), (170.0, 4.0)),
    )
    assert p.phase_at(t) == pytest.approx(_phase_by_quadrature(p, t), abs=1e-5)


def test_phase_before_first_knot_uses_first_interval():
    p = BreathingProfile(
        base_interval_s=4.0, amplitude_m=1e-3,
        interval_drift=((10.0, 4.0), (20.0, 5.0)),
    )
    # t < first knot: constant rate 1/4
    assert p.phase_at(2.0) == pytest.approx(2.0 * np.pi * (2.0 - 10.0) / 4.0 + p.phase_at(10.0))


def test_phase_linear_segment_closed_form():
    # one linear segment 4 s -> 5 s over 60 s: cycles = ln(5/4) / ((5-4)/60)
    p = BreathingProfile(
        base_interval_s=4.0, amplitude_m=1e-3, phase_offset_rad=0.25,
        interval_drift=((0.0, 4.0), (60.0, 5.0)),
    )
    cycles = 13.388613078852586  # 60 * ln(1.25)
    assert p.phase_at(60.0) == pytest.approx(0.25 + 2.0 * np.pi * cycles, rel=1e-12)


def test_phase_vector_matches_scalar():
    p = BreathingProfile(
        base_interval_s=3.0, amplitude_m=1e-3,
        interval_drift=((0.0, 3.0), (40.0, 3.6), (80.0, 3.0)),
    )
    ts = np.array([0.0, 11.1, 40.0, 55.0, 99.0])
    vec = p.phase_at(ts)
    for t, v in zip(ts, vec):
        assert v == pytest.approx(p.phase_at(float(t)), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    knots=st.lists(
        st.tuples(
            st.floats(min_value=0.0, max_value=100.0),
            st.floats(min_value=2.0, max_value=8.0),
        ),
        min_size=2, max_size=5,
        unique_by=lambda k: round(k[0], 3),
    ),
    t=st.floats(min_value=0.0, max_value=120.0),
)
def test_phase_monotone_property(knots, t):
    # positive instantaneous rate makes the phase strictly increasing
    knots = sorted((round(a, 3), b) for a, b in knots)
    p = BreathingProfile(base_interval_s=4.0, amplitude_m=1e-3,
                         interval_drift=tuple(knots))
    assert p.phase_at(t + 0.5) > p.phase_at(t)


def test_displacement_is_amplitude_times_sine():
    p = BreathingProfile(base_interval_s=4.0, amplitude_m=2.5e-3, phase_offset_rad=0.4)
    t = np.arange(0.0, 12.0, 0.1)
    np.testing.assert_allclose(
        breathing_displacement(p, t), 2.5e-3 * np.sin(p.phase_at(t)), rtol=1e-12
    )
    with pytest.raises(ValueError):
        breathing_displacement(p, -1.0)


# ---------------------------------------------------------------------------
# validation

def test_breathing_validation_errors():
    with pytest.raises(SceneError):
        BreathingProfile(base_interval_s=0.0, amplitude_m=1e-3)
    with pytest.raises(SceneError):
        BreathingProfile(base_interval_s=MAX_INTERVAL_S + 0.1, amplitude_m=1e-3)
    with pytest.raises(SceneError):
        BreathingProfile(base_interval_s=4.0, amplitude_m=0.0)
    with pytest.raises(SceneError):
        BreathingProfile(base_interval_s=4.0, amplitude_m=1e-3,
                         interval_drift=((10.0, 4.0), (5.0, 4.0)))
    with pytest.raises(SceneError):
        BreathingProfile(base_interval_s=4.0, amplitude_m=1e-3,
                         interval_drift=((0.0, 4.0), (0.0, 5.0)))
    with pytest.raises(SceneError):
        BreathingProfile(base_interval_s=4.0, amplitude_m=1e-3,
                         interval_drift=((-1.0, 4.0), (5.0, 4.0)))
    with pytest.raises(SceneError):
        BreathingProfile(base_interval_s=4.0, amplitude_m=1e-3,
                         interval_drift=((0.0, 9.0), (5.0, 4.0)))


def test_scatterer_and_scene_validation():
    with pytest.raises(SceneError):
        Scatterer(position=(1.0, 1.0), rcs_scale=0.0)
    with pytest.raises(SceneError):
        Scatterer(position=(1.0, 1.0), extent_m=-0.1)
    with pytest.raises(SceneError):
        Target(position=(1.0, 1.0))  # breathing required
    with pytest.raises(SceneError):
        SceneSpec(duration_s=0.0)
    with pytest.raises(SceneError):
        SceneSpec(noise_power=-1.0)


def test_scatterer_geometry_properties():
    s = Scatterer(position=(3.0, 4.0))
    assert s.range_m == pytest.approx(5.0)
    assert s.theta_rad == pytest.approx(math.atan2(3.0, 4.0))
    boresight = Scatterer(position=(0.0, 2.0))
    assert boresight.theta_rad == 0.0


def test_truth_intervals_and_bounds():
    scene = tiny_scene()
    rows = truth_intervals(scene, 10.0)
    assert [sid for sid, _ in rows] == [0, 1]
    assert rows[0][1] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        truth_intervals(scene, scene.duration_s + 1.0)


def test_max_range_includes_extent():
    scene = SceneSpec(targets=[make_breather((0.0, 4.0), 4.0, extent_m=0.5)])
    assert scene.max_range_m == pytest.approx(4.25)


def test_snr_to_noise_power():
    assert snr_to_noise_power(20.0) == pytest.approx(0.01)
    assert snr_to_noise_power(0.0) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# JSON round trips

def test_scene_dict_round_trip():
    scene = SceneSpec(
        targets=[
            make_breather((-0.5, 3.0), 4.2, amplitude_m=2.2e-3, phase=0.9,
                          rcs=2.0, extent_m=0.5,
                          drift=((0.0, 4.2), (30.0, 4.5), (60.0, 4.2))),
        ],
        clutter=[Scatterer(position=(1.0, 2.0), rcs_scale=3.0, extent_m=0.7)],
        noise_power=0.01,
        duration_s=90.0,
    )
    back, overrides = scene_from_dict(scene_to_dict(scene))
    assert overrides == {}
    assert back == scene


def test_scene_file_round_trip(tmp_path):
    scene = tiny_scene()
    path = tmp_path / "scene.json"
    save_scene(scene, path, radar_overrides={"num_range_bins": 64})
    back, overrides = load_scene(path)
    assert back == scene
    assert overrides == {"num_range_bins": 64}


def test_frozen_scene_files_round_trip(scenes_dir):
    for name in ("experiment1.json", "experiment2.json"):
        scene, overrides = load_scene(scenes_dir / name)
        assert overrides == {}
        back, _ = scene_from_dict(scene_to_dict(scene))
        assert back == scene
        assert scene.duration_s == 170.0
        assert scene.noise_power == pytest.approx(snr_to_noise_power(20.0))
    exp1, _ = load_scene(scenes_dir / "experiment1.json")
    exp2, _ = load_scene(scenes_dir / "experiment2.json")
    assert len(exp1.targets) == 7
    assert len(exp2.targets) == 5
    # every subject interval is distinct within each scene
    for scene in (exp1, exp2):
        bases = [t.breathing.base_interval_s for t in scene.targets]
        assert len(set(bases)) == len(bases)


def test_scene_from_dict_snr_field():
    doc = {
        "targets": [{
            "position": [0.0, 2.0],
            "breathing": {"base_interval_s": 4.0, "amplitude_m": 1e-3},
        }],
        "snr_db_at_1m": 20.0,
    }
    scene, _ = scene_from_dict(doc)
    assert scene.noise_power == pytest.approx(0.01)
    doc["noise_power"] = 0.02
    with pytest.raises(SceneError):
        scene_from_dict(doc)


def test_scene_from_dict_errors():
    with pytest.raises(SceneError):
        scene_from_dict([])  # not an object
    with pytest.raises(SceneError):
        scene_from_dict({"schema_version": 99})
    with pytest.raises(SceneError, match="targets\\[0\\]"):
        scene_from_dict({"targets": [{"breathing": {}}]})  # missing position
    with pytest.raises(SceneError, match="base_interval_s"):
        scene_from_dict({"targets": [{
            "position": [0, 2], "breathing": {"amplitude_m": 1e-3},
        }]})
    with pytest.raises(SceneError, match="radar"):
        scene_from_dict({"targets": [], "radar": [1, 2]})


def test_load_scene_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(SceneError, match="invalid JSON"):
        load_scene(path)


def test_saved_scene_is_plain_json(tmp_path):
    path = tmp_path / "scene.json"
    save_scene(tiny_scene(), path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    assert doc["schema_version"] == 1
    assert len(doc["targets"]) == 2
