"""Range-angle imaging: tapered beamforming, clutter suppression, power maps.

The beamformer steers with w_k = exp(-j*pi*k*sin(theta)) over K virtual
elements, so evaluating w^H s on a uniform sin(theta) grid is a zero-padded
inverse FFT along the element axis.  Static clutter is removed per cell by
subtracting a trailing mean, and a trailing mean of |I_c|^2 gives the power
image used for gating and point weighting.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import windows

from .rcube import ChannelCube


@dataclass
class ComplexImage:
    """Complex image indexed [slow_time, range_bin, angle_bin]."""

    values: np.ndarray
    range_grid_m: np.ndarray
    sin_theta: np.ndarray
    times_s: np.ndarray
    kind: str = "raw"

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("image must be 3-D [slow_time, range, angle]")
        if self.values.shape[1] != len(self.range_grid_m):
            raise ValueError("range grid length mismatch")
        if self.values.shape[2] != len(self.sin_theta):
            raise ValueError("angle grid length mismatch")
        if np.any(np.diff(self.sin_theta) <= 0):
            raise ValueError("angle grid must be strictly increasing in sin(theta)")

    @property
    def theta_rad(self) -> np.ndarray:
        return np.arcsin(np.clip(self.sin_theta, -1.0, 1.0))


@dataclass
class PowerImage:
    """Nonnegative power indexed [slow_time, range_bin, angle_bin]."""

    values: np.ndarray
    range_grid_m: np.ndarray
    sin_theta: np.ndarray
    times_s: np.ndarray
    noise_floor: float | None = None

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("power values must be nonnegative")

    @property
    def theta_rad(self) -> np.ndarray:
        return np.arcsin(np.clip(self.sin_theta, -1.0, 1.0))


def taylor_taper(num_elements: int, sidelobe_db: float = -35.0, nbar: int = 5) -> np.ndarray:
    """Taylor window weights, max-normalized to 1.

    ``sidelobe_db`` is the target peak sidelobe level (negative dB); passing 0
    requests a uniform (untapered) array.
    """
    if num_elements < 2:
        raise ValueError("num_elements must be >= 2")
    if sidelobe_db == 0:
        return np.ones(num_elements)
    if sidelobe_db > 0:
        raise ValueError("sidelobe_db must be <= 0 (0 selects the uniform taper)")
    if not 1 <= nbar <= num_elements // 2:
        raise ValueError(f"nbar must be in [1, {num_elements // 2}] for {num_elements} elements")
    w = windows.taylor(num_elements, nbar=nbar, sll=-sidelobe_db, norm=True, sym=True)
    return w / w.max()


def beamform_frames(frames: np.ndarray, calib: np.ndarray | None = None,
                    taper: np.ndarray | None = None, n_fft: int = 32,
                    grid: str = "symmetric") -> tuple:
    """Beamform [..., element] arrays; returns (image [..., angle], sin_theta)."""
    frames = np.asarray(frames)
    n_elem = frames.shape[-1]
    if calib is None:
        calib = np.ones(n_elem)
    if taper is None:
        taper = np.ones(n_elem)
    calib = np.asarray(calib)
    taper = np.asarray(taper, dtype=float)
    if calib.shape != (n_elem,) or taper.shape != (n_elem,):
        raise ValueError("calib and taper must have one entry per element")
    if n_fft < n_elem:
        raise ValueError("n_fft must be at least the element count")

    x = frames * (taper * calib)
    if grid == "symmetric":
        # sum_k x_k exp(j*pi*k*(2n/N)) == N * ifft(x, N); shift to n in [-N/2, N/2)
        img = n_fft * np.fft.ifft(x, n=n_fft, axis=-1)
        img = np.fft.fftshift(img, axes=-1)
        sin_theta = 2.0 * np.arange(-(n_fft // 2), n_fft - n_fft // 2) / n_fft
    elif grid == "onesided":
        # sum_k x_k exp(j*pi*k*n/N): embed in a length-2N transform, keep n < N
        img = 2 * n_fft * np.fft.ifft(x, n=2 * n_fft, axis=-1)[..., :n_fft]
        sin_theta = np.arange(n_fft) / n_fft
    else:
        raise ValueError(f"unknown angle grid {grid!r}")
    return img, sin_theta


def beamform(cube: ChannelCube, calib: np.ndarray | None = None,
             taper: np.ndarray | None = None, n_fft: int = 32,
             grid: str = "symmetric") -> ComplexImage:
    """Form the complex image I_0(t, r, theta) from a channel cube."""
    values, sin_theta = beamform_frames(cube.data, calib=calib, taper=taper,
                                        n_fft=n_fft, grid=grid)
    return ComplexImage(
        values=values,
        range_grid_m=cube.radar.range_grid_m,
        sin_theta=sin_theta,
        times_s=cube.times_s,
        kind="raw",
    )


def _trailing_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Mean over the trailing ``window`` samples (truncated near the start)."""
    csum = np.cumsum(values, axis=0)
    out = np.empty_like(csum)
    out[:window] = csum[:window]
    out[window:] = csum[window:] - csum[:-window]
    n = np.minimum(np.arange(1, len(values) + 1), window)
    return out / n.reshape((-1,) + (1,) * (values.ndim - 1))


def suppress_clutter(img: ComplexImage, window_s: float = 30.0) -> ComplexImage:
    """Remove static echoes: subtract the trailing mean over (t - T_c, t]."""
    if window_s <= 0:
        raise ValueError("window_s must be > 0")
    dt = float(img.times_s[1] - img.times_s[0]) if len(img.times_s) > 1 else 1.0
    window = int(round(window_s / dt))
    if window < 1:
        raise ValueError("clutter window shorter than one slow-time step")
    suppressed = img.values - _trailing_mean(img.values, window)
    return replace(img, values=suppressed, kind="clutter-suppressed")


def power_image(img: ComplexImage, window_s: float = 20.0) -> PowerImage:
    """Trailing time average of |I_c|^2 over (t - T_P, t]."""
    if window_s <= 0:
        raise ValueError("window_s must be > 0")
    dt = float(img.times_s[1] - img.times_s[0]) if len(img.times_s) > 1 else 1.0
    window = max(1, int(round(window_s / dt)))
    power = _trailing_mean(np.abs(img.values) ** 2, window)
    # rounding in |.|^2 accumulation can leave tiny negatives
    np.maximum(power, 0.0, out=power)
    return PowerImage(
        values=power,
        range_grid_m=img.range_grid_m,
        sin_theta=img.sin_theta,
        times_s=img.times_s,
        noise_floor=None,
    )


def estimate_noise_region(power: PowerImage, quantile: float = 0.5) -> np.ndarray:
    """Boolean (range, angle) mask of presumed target-free cells.

    Cells whose time-averaged power falls at or below the given quantile of
    all cells are taken as noise; targets occupy few cells, so the lower half
    of the distribution is background.
    """
    if not 0.0 < quantile <= 1.0:
        raise ValueError("quantile must be in (0, 1]")
    cell_mean = power.values.mean(axis=0)
    cutoff = np.quantile(cell_mean, quantile)
    mask = cell_mean <= cutoff
    if not mask.any():
        mask = cell_mean <= cell_mean.min()
    return mask


def normalize_power(power: PowerImage, noise_cells: np.ndarray) -> PowerImage:
    """Scale the power image so the mean over ``noise_cells`` is 1."""
    noise_cells = np.asarray(noise_cells, dtype=bool)
    if noise_cells.shape != power.values.shape[1:]:
        raise ValueError("noise_cells mask must be shaped (range, angle)")
    if not noise_cells.any():
        raise ValueError("noise region is empty")
    floor = float(power.values[:, noise_cells].mean())
    if floor <= 0:
        raise ValueError("noise region has zero power; cannot normalize")
    return PowerImage(
        values=power.values / floor,
        range_grid_m=power.range_grid_m,
        sin_theta=power.sin_theta,
        times_s=power.times_s,
        noise_floor=floor,
    )


def write_image_csv(values2d: np.ndarray, range_grid_m: np.ndarray,
                    sin_theta: np.ndarray, path):
    """Write one (range x angle) image slice as a CSV grid with axis headers."""
    values2d = np.asarray(values2d)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("range_m\\sin_theta," + ",".join(f"{s:.6f}" for s in sin_theta) + "\n")
        for r, row in zip(range_grid_m, values2d):
            fh.write(f"{r:.4f}," + ",".join(f"{v:.9g}" for v in row) + "\n")
