"""Per-cell displacement waveforms and respiratory-interval estimation.

The phase of the clutter-suppressed image is unwrapped along slow time and
scaled to displacement, band-passed to the breathing band, and each gated
cell's respiratory interval is the lag minimizing a forward+backward mean
squared self-difference cost over a 2*T_0 window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .imaging import ComplexImage, PowerImage


@dataclass
class DisplacementField:
    """Displacement in meters indexed [slow_time, range_bin, angle_bin]."""

    values: np.ndarray
    range_grid_m: np.ndarray
    sin_theta: np.ndarray
    times_s: np.ndarray
    kind: str = "raw"

    @property
    def dt_s(self) -> float:
        return float(self.times_s[1] - self.times_s[0]) if len(self.times_s) > 1 else 1.0


@dataclass
class RespImage:
    """Respiratory-interval estimates at decimated tick times.

    ``tau_s`` is NaN wherever ``valid`` is False (cell failed the power gate
    or lacked data).
    """

    tau_s: np.ndarray
    valid: np.ndarray
    tick_times_s: np.ndarray
    range_grid_m: np.ndarray
    sin_theta: np.ndarray
    max_interval_s: float

    def __post_init__(self):
        ok = self.valid & np.isfinite(self.tau_s)
        if np.any(self.valid != ok):
            raise ValueError("valid cells must carry finite intervals")
        if np.any(self.tau_s[self.valid] <= 0) or np.any(
            self.tau_s[self.valid] > self.max_interval_s + 1e-9
        ):
            raise ValueError("valid intervals must lie in (0, max_interval_s]")


def displacement(img: ComplexImage, wavelength_m: float) -> DisplacementField:
    """Phase-derived displacement d_0 = (lambda / 4 pi) * unwrap(angle(I_c))."""
    phase = np.unwrap(np.angle(img.values), axis=0)
    return DisplacementField(
        values=phase * (wavelength_m / (4.0 * np.pi)),
        range_grid_m=img.range_grid_m,
        sin_theta=img.sin_theta,
        times_s=img.times_s,
        kind="raw",
    )


def _odd_kernel_length(window_s: float, dt_s: float) -> int:
    """Odd sample count spanning ``window_s`` end to end (zero-phase kernels)."""
    half = int(round(window_s / (2.0 * dt_s)))
    return 2 * max(half, 1) + 1


def rect_kernel(window_s: float, dt_s: float) -> np.ndarray:
    n = _odd_kernel_length(window_s, dt_s)
    return np.full(n, 1.0 / n)


def hann_kernel(window_s: float, dt_s: float) -> np.ndarray:
    n = _odd_kernel_length(window_s, dt_s)
    k = np.hanning(n)
    return k / k.sum()


def _smooth_same(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Centered convolution along axis 0 with truncated-window renormalization.

    Near the edges the kernel hangs off the record; dividing by the
    convolution of an all-ones signal renormalizes the partial kernel mass so
    constants pass through unchanged everywhere.
    """
    shape = (len(kernel),) + (1,) * (values.ndim - 1)
    num = fftconvolve(values, kernel.reshape(shape), mode="same", axes=0)
    den = fftconvolve(np.ones(len(values)), kernel, mode="same")
    return num / den.reshape((-1,) + (1,) * (values.ndim - 1))


def bandpass(d0: DisplacementField, highpass_window_s: float = 51.0,
             lowpass_window_s: float = 1.1) -> DisplacementField:
    """Breathing band-pass: subtract a long moving average, then smooth.

    d = (d_0 - d_0 * h_HPF) * h_LPF with a rectangular h_HPF and a Hann
    h_LPF, both unit-DC-gain, applied as zero-phase centered convolutions.
    The defaults keep the 0.15-0.5 Hz breathing band within 20% of unity
    gain while rejecting drift below ~0.02 Hz and noise above ~1 Hz.
    """
    dt = d0.dt_s
    if not highpass_window_s > lowpass_window_s > dt:
        raise ValueError("need highpass_window_s > lowpass_window_s > slow-time step")
    n_hpf = _odd_kernel_length(highpass_window_s, dt)
    n_lpf = _odd_kernel_length(lowpass_window_s, dt)
    if len(d0.times_s) < max(n_hpf, n_lpf):
        raise ValueError(
            f"record of {len(d0.times_s)} frames too short for a "
            f"{max(n_hpf, n_lpf)}-sample kernel"
        )
    baseline = _smooth_same(d0.values, rect_kernel(highpass_window_s, dt))
    banded = _smooth_same(d0.values - baseline, hann_kernel(lowpass_window_s, dt))
    return DisplacementField(
        values=banded,
        range_grid_m=d0.range_grid_m,
        sin_theta=d0.sin_theta,
        times_s=d0.times_s,
        kind="bandpassed",
    )


def tau_grid_s(dt_s: float, max_interval_s: float) -> np.ndarray:
    """Candidate lags: dt, 2 dt, ..., up to max_interval_s."""
    n = int(round(max_interval_s / dt_s))
    return np.arange(1, n + 1) * dt_s


def resp_cost(d: np.ndarray, dt_s: float, t_s: float, tau_s: float,
              max_interval_s: float = 8.0) -> float:
    """Forward+backward mean squared self-difference of a cell waveform.

    f(tau) = mean |d(t') - d(t'+tau)|^2 + mean |d(t') - d(t'-tau)|^2 over
    t' in [t - 2 T_0, t].  Requires samples covering [t - 3 T_0, t + T_0].
    """
    if not 0 < tau_s <= max_interval_s + 1e-12:
        raise ValueError("tau_s must be in (0, max_interval_s]")
    d = np.asarray(d, dtype=float)
    i = int(round(t_s / dt_s))
    m = int(round(tau_s / dt_s))
    w0 = int(round(max_interval_s / dt_s))
    lo = i - 2 * w0
    if lo - w0 < 0 or i + w0 >= len(d):
        raise ValueError("insufficient samples around t for the cost window")
    base = d[lo : i + 1]
    fwd = base - d[lo + m : i + 1 + m]
    bwd = base - d[lo - m : i + 1 - m]
    return float(np.mean(fwd**2) + np.mean(bwd**2))


def resp_cost_grid(values: np.ndarray, dt_s: float, t_s: float,
                   taus_s: np.ndarray, max_interval_s: float = 8.0) -> np.ndarray:
    """Vectorized resp_cost over a tau grid for [time, ...cell] arrays.

    Returns an array of shape (len(taus_s), ...cell).
    """
    values = np.asarray(values, dtype=float)
    i = int(round(t_s / dt_s))
    w0 = int(round(max_interval_s / dt_s))
    lo = i - 2 * w0
    max_m = int(round(taus_s.max() / dt_s))
    if lo - max_m < 0 or i + max_m >= values.shape[0]:
        raise ValueError("insufficient samples around t for the cost window")
    base = values[lo : i + 1]
    costs = np.empty((len(taus_s),) + values.shape[1:])
    for k, tau in enumerate(taus_s):
        m = int(round(tau / dt_s))
        fwd = base - values[lo + m : i + 1 + m]
        bwd = base - values[lo - m : i + 1 - m]
        costs[k] = (fwd**2).mean(axis=0) + (bwd**2).mean(axis=0)
    return costs


# A periodic waveform has (near-)zero cost at every multiple of its period,
# so under noise the raw argmin hops between the fundamental and 2x/3x/4x
# lags.  The guard checks the submultiples of the argmin lag and keeps the
# shortest one whose cost stays within a slack fraction of the cost spread.
# Only true period submultiples can qualify: for in-band waveforms the cost
# at tau/2, tau/3, tau/4 sits near the spread maximum, far above any sane
# slack, while a genuine fundamental under a 2x/3x/4x lock sits at the floor.
_SUBHARMONIC_DIVISORS = (2, 3, 4)


def _guarded_argmin(costs: np.ndarray, slack: float) -> np.ndarray:
    """Index of the minimum along axis 0 with a period-multiple guard.

    Exact ties resolve toward index 0 (the shorter lag); with ``slack`` > 0
    the shortest submultiple of the argmin lag whose cost is within
    ``cmin + slack * (cmax - cmin)`` replaces the argmin.
    """
    cmin = costs.min(axis=0)
    threshold = cmin + slack * (costs.max(axis=0) - cmin)
    best = costs.argmin(axis=0)
    flat = costs.reshape(costs.shape[0], -1)
    cols = np.arange(flat.shape[1])
    m_star = best + 1  # 1-based lag index: taus[j] = (j + 1) * dt
    for k in _SUBHARMONIC_DIVISORS:
        for cand_m in (np.maximum(m_star // k, 1), (m_star + k - 1) // k):
            cand = cand_m - 1
            cand_cost = flat[cand.reshape(-1), cols].reshape(best.shape)
            better = (cand_cost <= threshold) & (cand < best)
            best = np.where(better, cand, best)
    return best


def _parabolic_offset(costs: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Sub-sample vertex offset in [-0.5, 0.5] from 3-point parabola fits."""
    n_tau = costs.shape[0]
    offset = np.zeros(idx.shape)
    interior = (idx > 0) & (idx < n_tau - 1)
    if not interior.any():
        return offset
    flat = costs.reshape(n_tau, -1)
    cols = np.arange(flat.shape[1]).reshape(idx.shape)
    c0 = flat[np.clip(idx - 1, 0, n_tau - 1), cols]
    c1 = flat[idx, cols]
    c2 = flat[np.clip(idx + 1, 0, n_tau - 1), cols]
    denom = c0 - 2 * c1 + c2
    ok = interior & (denom > 0)
    offset[ok] = np.clip(0.5 * (c0[ok] - c2[ok]) / denom[ok], -0.5, 0.5)
    return offset


def resp_interval_slice(d: DisplacementField, power: PowerImage, t_s: float,
                        gate_db: float = 10.0, max_interval_s: float = 8.0,
                        parabolic_refine: bool = False,
                        harmonic_slack: float = 0.2) -> tuple:
    """Estimate (tau, valid) maps at one evaluation time.

    Cells whose normalized power at ``t_s`` is below ``gate_db`` over the
    noise floor are marked invalid.  Returns (tau_s [range, angle], valid).
    Shares the lag-selection machinery with :func:`resp_interval_series`, so
    a slice equals the matching series row exactly.
    """
    dt = d.dt_s
    i = int(round(t_s / dt))
    if not 0 <= i < len(d.times_s):
        raise ValueError("t_s outside the record")
    w0 = int(round(max_interval_s / dt))
    if i - 3 * w0 < 0 or i + w0 >= len(d.times_s):
        raise ValueError("insufficient samples around t for the cost window")
    taus = tau_grid_s(dt, max_interval_s)

    x = np.ascontiguousarray(d.values.reshape(d.values.shape[0], -1))
    best, offset = _select_lags(x, i, i, w0, harmonic_slack, parabolic_refine)
    cell_shape = d.values.shape[1:]
    tau_map = (taus[best[0]] + offset[0] * dt).reshape(cell_shape)

    gate = 10.0 ** (gate_db / 10.0)
    valid = power.values[i] >= gate
    tau_map[~valid] = np.nan
    return tau_map, valid


class _LagCosts:
    """Reusable-buffer evaluator of the window cost at one lag for a whole
    column block, using prefix sums over the squared difference series."""

    def __init__(self, x: np.ndarray, i0: int, i1: int, w0: int):
        self.x = x
        self.i0, self.i1, self.w0 = i0, i1, w0
        n_frames, n_cols = x.shape
        self._work = np.empty((n_frames - 1, n_cols))
        self._prefix = np.empty((n_frames, n_cols))
        self.n_out = i1 - i0 + 1

    def compute(self, m: int, out: np.ndarray) -> np.ndarray:
        x, i0, i1, w0 = self.x, self.i0, self.i1, self.w0
        n = x.shape[0] - m
        sq = self._work[:n]
        np.subtract(x[m:], x[:-m], out=sq)
        np.multiply(sq, sq, out=sq)
        prefix = self._prefix[: n + 1]
        prefix[0] = 0.0
        np.cumsum(sq, axis=0, out=prefix[1:])
        np.subtract(prefix[i0 + 1 : i1 + 2], prefix[i0 - 2 * w0 : i1 + 1 - 2 * w0], out=out)
        out += prefix[i0 - m + 1 : i1 - m + 2]
        out -= prefix[i0 - 2 * w0 - m : i1 + 1 - 2 * w0 - m]
        out *= 1.0 / (2 * w0 + 1)
        return out


def _select_lags(x: np.ndarray, i0: int, i1: int, w0: int, harmonic_slack: float,
                 parabolic_refine: bool) -> tuple:
    """Per-sample, per-column lag selection with the period-multiple guard.

    Two passes over the lag grid: the first tracks each cell's cost extrema
    and argmin, the second scans lags in ascending order and keeps the first
    candidate — a submultiple of the argmin lag, or the argmin itself —
    whose cost is within the slack threshold, mirroring
    :func:`_guarded_argmin`.  Returns (best_index, sub_sample_offset).
    """
    evaluator = _LagCosts(x, i0, i1, w0)
    shape = (evaluator.n_out, x.shape[1])
    cost = np.empty(shape)
    cmin = np.full(shape, np.inf)
    cmax = np.full(shape, -np.inf)
    amin = np.zeros(shape, dtype=np.int64)
    for m in range(1, w0 + 1):
        evaluator.compute(m, cost)
        update = cost < cmin  # strict: ties keep the shorter lag
        amin[update] = m - 1
        np.minimum(cmin, cost, out=cmin)
        np.maximum(cmax, cost, out=cmax)

    threshold = cmin + harmonic_slack * (cmax - cmin)
    m_star = amin + 1
    candidates = [m_star]
    for k in _SUBHARMONIC_DIVISORS:
        candidates.append(np.maximum(m_star // k, 1))
        candidates.append((m_star + k - 1) // k)

    best = np.zeros(shape, dtype=np.int64)
    chosen = np.zeros(shape, dtype=bool)
    c_prev = np.zeros(shape) if parabolic_refine else None
    c_ctr = np.zeros(shape) if parabolic_refine else None
    c_next = np.zeros(shape) if parabolic_refine else None
    cost_before = np.empty(shape) if parabolic_refine else None
    for m in range(1, w0 + 1):
        evaluator.compute(m, cost)
        is_candidate = np.zeros(shape, dtype=bool)
        for cand_m in candidates:
            is_candidate |= cand_m == m
        newly = ~chosen & is_candidate & (cost <= threshold)
        best[newly] = m - 1
        chosen |= newly
        if parabolic_refine:
            c_ctr[newly] = cost[newly]
            if m > 1:
                c_prev[newly] = cost_before[newly]
            after = chosen & (best == m - 2)
            c_next[after] = cost[after]
            cost_before, cost = cost, cost_before
        elif chosen.all():
            break

    offset = np.zeros(shape)
    if parabolic_refine:
        interior = (best > 0) & (best < w0 - 1)
        denom = c_prev - 2 * c_ctr + c_next
        ok = interior & (denom > 0)
        offset[ok] = np.clip(0.5 * (c_prev[ok] - c_next[ok]) / denom[ok], -0.5, 0.5)
    return best, offset


def resp_interval_series(d: DisplacementField, power: PowerImage,
                         gate_db: float = 10.0, max_interval_s: float = 8.0,
                         parabolic_refine: bool = False,
                         harmonic_slack: float = 0.2) -> RespImage:
    """Respiratory image at every slow-time sample with full window support.

    Covers t in [3 T_0, end - T_0].  Lag costs are evaluated only for cells
    that pass the power gate at least once (the others are invalid
    throughout), one lag at a time over prefix sums.
    """
    dt = d.dt_s
    w0 = int(round(max_interval_s / dt))
    n_frames = d.values.shape[0]
    i0 = 3 * w0
    i1 = n_frames - w0 - 1
    if i1 < i0:
        raise ValueError(
            f"record of {n_frames} frames too short for interval estimation "
            f"(needs at least {4 * w0 + 1})"
        )
    taus = tau_grid_s(dt, max_interval_s)
    gate = 10.0 ** (gate_db / 10.0)
    valid = power.values[i0 : i1 + 1] >= gate
    active = valid.any(axis=0)

    tau_map = np.full(valid.shape, np.nan)
    if active.any():
        x = np.ascontiguousarray(d.values[:, active])
        best, offset = _select_lags(x, i0, i1, w0, harmonic_slack, parabolic_refine)
        tau_active = taus[best] + offset * dt
        tau_active[~valid[:, active]] = np.nan
        tau_map[:, active] = tau_active
    return RespImage(
        tau_s=tau_map,
        valid=valid,
        tick_times_s=d.times_s[i0 : i1 + 1],
        range_grid_m=d.range_grid_m,
        sin_theta=d.sin_theta,
        max_interval_s=max_interval_s,
    )


def first_feasible_tick_s(dt_s: float, max_interval_s: float) -> float:
    """Earliest t with full cost-window support [t - 3 T_0, t + T_0]."""
    return 3.0 * max_interval_s


def last_feasible_tick_s(duration_s: float, dt_s: float, max_interval_s: float) -> float:
    """Latest t with full forward support t + T_0 within the record."""
    return duration_s - max_interval_s - dt_s


def write_resp_csv(resp: RespImage, tick_index: int, path):
    """Export one respiratory-image slice as CSV rows with a validity flag."""
    tau = resp.tau_s[tick_index]
    valid = resp.valid[tick_index]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("range_m,sin_theta,tau_s,valid\n")
        for li, r in enumerate(resp.range_grid_m):
            for ni, s in enumerate(resp.sin_theta):
                tau_txt = f"{tau[li, ni]:.4f}" if valid[li, ni] else ""
                fh.write(f"{r:.4f},{s:.6f},{tau_txt},{int(valid[li, ni])}\n")
