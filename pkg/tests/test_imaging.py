"""Imaging chain: beamformer against a direct sum, tapers, clutter, power."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from respspace.config import RadarConfig
from respspace.imaging import (
    ComplexImage,
    PowerImage,
    _trailing_mean,
    beamform,
    beamform_frames,
    estimate_noise_region,
    normalize_power,
    power_image,
    suppress_clutter,
    taylor_taper,
    write_image_csv,
)
from respspace.rcube import ChannelCube

# taylor_taper(12) at the default -35 dB / nbar=5 design, frozen so a scipy
# behavior change cannot silently move the beam pattern
TAYLOR_12_35DB = [
    0.183468038518, 0.316582880539, 0.519018210852, 0.728475689737,
    0.901578558613, 1.0, 1.0, 0.901578558613, 0.728475689737,
    0.519018210852, 0.316582880539, 0.183468038518,
]


def direct_beamform(frames, calib, taper, sin_theta):
    """Independent oracle: per-angle weighted sum over elements."""
    frames = np.asarray(frames)
    k = np.arange(frames.shape[-1])
    out = np.empty(frames.shape[:-1] + (len(sin_theta),), dtype=complex)
    for n, s in enumerate(sin_theta):
        phase = np.exp(1j * np.pi * k * s)
        out[..., n] = (frames * (taper * calib) * phase).sum(axis=-1)
    return out


@pytest.mark.parametrize("grid", ["symmetric", "onesided"])
def test_beamformer_matches_direct_sum(rng, grid):
    frames = (rng.standard_normal((6, 5, 12)) + 1j * rng.standard_normal((6, 5, 12)))
    taper = taylor_taper(12)
    calib = np.exp(1j * rng.uniform(-0.2, 0.2, 12))
    img, sin_theta = beamform_frames(frames, calib=calib, taper=taper,
                                     n_fft=32, grid=grid)
    want = direct_beamform(frames, calib, taper, sin_theta)
    scale = np.abs(want).max()
    assert np.abs(img - want).max() <= 1e-9 * scale


def test_beamformer_grids():
    frames = np.zeros((1, 1, 12), dtype=complex)
    _, sym = beamform_frames(frames, n_fft=32, grid="symmetric")
    np.testing.assert_allclose(sym, 2.0 * np.arange(-16, 16) / 32)
    _, one = beamform_frames(frames, n_fft=32, grid="onesided")
    np.testing.assert_allclose(one, np.arange(32) / 32)
    with pytest.raises(ValueError, match="unknown angle grid"):
        beamform_frames(frames, grid="diagonal")
    with pytest.raises(ValueError, match="n_fft"):
        beamform_frames(frames, n_fft=8)
    with pytest.raises(ValueError, match="one entry per element"):
        beamform_frames(frames, taper=np.ones(5))


def test_boresight_plane_wave_peaks_at_zero_angle():
    frames = np.ones((1, 1, 12), dtype=complex)  # theta = 0 arrival
    img, sin_theta = beamform_frames(frames, taper=taylor_taper(12))
    mag = np.abs(img[0, 0])
    assert sin_theta[mag.argmax()] == 0.0
    assert mag.max() == pytest.approx(sum(TAYLOR_12_35DB), rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(min_value=0.1, max_value=10.0),
       seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_beamformer_linearity_property(scale, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((2, 3, 12)) + 1j * r.standard_normal((2, 3, 12))
    img1, _ = beamform_frames(x)
    img2, _ = beamform_frames(scale * x)
    np.testing.assert_allclose(img2, scale * img1, rtol=1e-9, atol=1e-12)


def test_taylor_taper_frozen_values():
    np.testing.assert_allclose(taylor_taper(12), TAYLOR_12_35DB, atol=1e-10)
    assert taylor_taper(12).max() == 1.0
    np.testing.assert_array_equal(taylor_taper(8, sidelobe_db=0), np.ones(8))
    with pytest.raises(ValueError):
        taylor_taper(1)
    with pytest.raises(ValueError):
        taylor_taper(12, sidelobe_db=20.0)
    with pytest.raises(ValueError):
        taylor_taper(12, nbar=7)


def test_trailing_mean_matches_loop(rng):
    x = rng.standard_normal((25, 3))
    got = _trailing_mean(x, 7)
    for i in range(25):
        want = x[max(0, i - 6): i + 1].mean(axis=0)
        np.testing.assert_allclose(got[i], want, rtol=1e-12)


def _image_from_values(values, dt=0.1):
    t, r, n = values.shape
    return ComplexImage(
        values=values,
        range_grid_m=np.arange(r) * 0.043,
        sin_theta=np.linspace(-0.9, 0.9, n),
        times_s=np.arange(t) * dt,
    )


def test_clutter_suppression_removes_statics_exactly():
    values = np.full((80, 4, 3), 2.0 - 1.5j)
    img = _image_from_values(values)
    out = suppress_clutter(img, window_s=3.0)
    assert out.kind == "clutter-suppressed"
    np.testing.assert_allclose(out.values, 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        suppress_clutter(img, window_s=0.0)


def test_clutter_suppression_keeps_moving_signal():
    t = np.arange(400) * 0.1
    sig = np.exp(1j * 2 * np.pi * 0.25 * t)  # 4 s period
    values = np.zeros((400, 2, 2), dtype=complex)
    values[:, 0, 0] = 5.0 + sig  # static offset plus motion
    img = _image_from_values(values)
    out = suppress_clutter(img, window_s=30.0)
    # once the window is full, the static part is gone and the tone remains
    tail = out.values[350:, 0, 0]
    assert np.abs(tail).mean() == pytest.approx(1.0, rel=0.25)


def test_power_image_constant_signal():
    values = np.full((50, 3, 2), 3.0 * np.exp(0.7j))
    img = _image_from_values(values)
    p = power_image(img, window_s=2.0)
    np.testing.assert_allclose(p.values, 9.0, rtol=1e-12)
    assert p.noise_floor is None
    with pytest.raises(ValueError):
        power_image(img, window_s=-1.0)


def test_noise_region_and_normalization():
    values = np.ones((20, 4, 4))
    values[:, 1, 2] = 50.0  # one hot cell
    p = PowerImage(values=values, range_grid_m=np.arange(4) * 0.043,
                   sin_theta=np.linspace(-0.5, 0.5, 4), times_s=np.arange(20) * 0.1)
    mask = estimate_noise_region(p, quantile=0.5)
    assert not mask[1, 2]
    assert mask.sum() == 15
    norm = normalize_power(p, mask)
    assert norm.noise_floor == pytest.approx(1.0)
    assert norm.values[:, 1, 2] == pytest.approx(50.0)
    assert norm.values[:, mask].mean() == pytest.approx(1.0)


def test_normalization_errors():
    p = PowerImage(values=np.zeros((5, 2, 2)), range_grid_m=np.arange(2) * 0.043,
                   sin_theta=np.array([-0.1, 0.1]), times_s=np.arange(5) * 0.1)
    with pytest.raises(ValueError, match="shaped"):
        normalize_power(p, np.ones((3, 3), dtype=bool))
    with pytest.raises(ValueError, match="empty"):
        normalize_power(p, np.zeros((2, 2), dtype=bool))
    with pytest.raises(ValueError, match="zero power"):
        normalize_power(p, np.ones((2, 2), dtype=bool))
    with pytest.raises(ValueError, match="quantile"):
        estimate_noise_region(p, quantile=0.0)


def test_image_validation():
    with pytest.raises(ValueError, match="3-D"):
        ComplexImage(values=np.zeros((2, 2), dtype=complex),
                     range_grid_m=np.arange(2), sin_theta=np.arange(2),
                     times_s=np.arange(2))
    with pytest.raises(ValueError, match="strictly increasing"):
        _image_from_values(np.zeros((2, 2, 2), dtype=complex)).__class__(
            values=np.zeros((2, 2, 2), dtype=complex),
            range_grid_m=np.arange(2), sin_theta=np.array([0.5, -0.5]),
            times_s=np.arange(2))
    with pytest.raises(ValueError, match="nonnegative"):
        PowerImage(values=-np.ones((2, 2, 2)), range_grid_m=np.arange(2),
                   sin_theta=np.array([-0.5, 0.5]), times_s=np.arange(2))


def test_beamform_cube_wrapper():
    radar = RadarConfig(num_range_bins=8)
    data = np.ones((4, 8, 12), dtype=complex)
    cube = ChannelCube(data=data, radar=radar)
    img = beamform(cube, n_fft=32)
    assert img.values.shape == (4, 8, 32)
    np.testing.assert_allclose(img.range_grid_m, radar.range_grid_m)
    assert img.kind == "raw"
    np.testing.assert_allclose(np.arcsin(img.sin_theta), img.theta_rad)


def test_write_image_csv(tmp_path):
    path = tmp_path / "img.csv"
    write_image_csv(np.arange(6.0).reshape(2, 3), np.array([0.0, 0.043]),
                    np.array([-0.1, 0.0, 0.1]), path)
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("range_m")
    assert [float(v) for v in lines[1].split(",")[1:]] == [0.0, 1.0, 2.0]
