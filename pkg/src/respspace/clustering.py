"""Respiratory-space point cloud, X-means/BIC clustering, cluster merging.

Each gated range-angle cell becomes a stack of identical 4D points
[r, theta, v*tau_now, v*tau_prev] whose multiplicity grows with range-
compensated echo power, so breathing intervals turn into geometric
separation.  X-means splits recursively while the BIC of a 2-means split
beats the unsplit model; clusters whose ground-plane centroids sit closer
than a torso diameter are merged back.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .respiration import RespImage


def polar_to_cartesian(r, theta):
    """(x, y) with x = r*sin(theta) cross-range and y = r*cos(theta) boresight."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be >= 0")
    theta = np.asarray(theta, dtype=float)
    x = r * np.sin(theta)
    y = r * np.cos(theta)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def weighted_median(values, weights) -> float:
    """Lower weighted median: smallest value whose cumulative weight
    reaches half the total."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if len(values) == 0:
        raise ValueError("weighted_median of empty data")
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    k = int(np.searchsorted(cum, 0.5 * cum[-1]))
    return float(values[order][min(k, len(values) - 1)])


@dataclass(frozen=True)
class PointCloud:
    """Multiset of co-located points: one row per cell, ``counts`` copies each.

    ``coords`` holds the clustering-space coordinates (theta possibly
    rescaled); ``thetas`` keeps the raw beam angle per row for exact polar
    conversions.
    """

    coords: np.ndarray
    counts: np.ndarray
    cells: np.ndarray
    thetas: np.ndarray

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def total_points(self) -> int:
        return int(self.counts.sum())

    @property
    def is_empty(self) -> bool:
        return len(self.counts) == 0


@dataclass(frozen=True)
class Cluster:
    """A subset of the cloud with its weighted 4D (or 2D) centroid."""

    coords: np.ndarray
    counts: np.ndarray
    cells: np.ndarray
    thetas: np.ndarray

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    @property
    def centroid(self) -> np.ndarray:
        return np.average(self.coords, axis=0, weights=self.counts)

    @property
    def centroid_xy(self) -> tuple:
        x, y = polar_to_cartesian(self.coords[:, 0], self.thetas)
        w = self.counts
        return float(np.average(x, weights=w)), float(np.average(y, weights=w))

    @property
    def member_cells(self) -> set:
        return {(int(l), int(n)) for l, n in self.cells}


@dataclass(frozen=True)
class PersonEstimate:
    person_id: int
    x_m: float
    y_m: float
    interval_s: float
    timestamp_s: float
    cluster_size: int


def build_point_cloud(power_slice: np.ndarray, range_grid_m: np.ndarray,
                      theta_rad: np.ndarray, tau_now: np.ndarray,
                      valid_now: np.ndarray, tau_prev: np.ndarray,
                      valid_prev: np.ndarray, alpha: float, v: float,
                      theta_scale: float = 1.0) -> PointCloud:
    """4D respiratory-space cloud from one evaluation time.

    A cell contributes rho = rint(alpha * r * I_P) copies of
    [r, theta, v*tau_now, v*tau_prev]; cells lacking a valid interval in
    either slice contribute nothing.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if v <= 0:
        raise ValueError("v must be > 0")
    rho = np.rint(alpha * range_grid_m[:, None] * power_slice).astype(np.int64)
    mask = valid_now & valid_prev & (rho >= 1)
    cells = np.argwhere(mask)
    l_idx, n_idx = cells[:, 0], cells[:, 1]
    thetas = theta_rad[n_idx]
    coords = np.column_stack([
        range_grid_m[l_idx],
        theta_scale * thetas,
        v * tau_now[l_idx, n_idx],
        v * tau_prev[l_idx, n_idx],
    ])
    return PointCloud(coords=coords, counts=rho[mask], cells=cells, thetas=thetas)


def build_point_cloud_2d(power_slice: np.ndarray, range_grid_m: np.ndarray,
                         theta_rad: np.ndarray, gate: float, alpha: float,
                         theta_scale: float = 1.0) -> PointCloud:
    """Conventional radar-image cloud: [r, theta] for gated cells only."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    rho = np.rint(alpha * range_grid_m[:, None] * power_slice).astype(np.int64)
    mask = (power_slice >= gate) & (rho >= 1)
    cells = np.argwhere(mask)
    l_idx, n_idx = cells[:, 0], cells[:, 1]
    thetas = theta_rad[n_idx]
    coords = np.column_stack([range_grid_m[l_idx], theta_scale * thetas])
    return PointCloud(coords=coords, counts=rho[mask], cells=cells, thetas=thetas)


def _draw_point_index(rng, cum_counts: np.ndarray) -> int:
    """Index of a point drawn uniformly from the expanded multiset."""
    u = int(rng.integers(int(cum_counts[-1])))
    return int(np.searchsorted(cum_counts, u, side="right"))


def kmeans2(coords: np.ndarray, counts: np.ndarray, rng) -> np.ndarray:
    """Weighted 2-means by Lloyd iteration; returns a 0/1 label per row.

    Initial centers are two coordinate-distinct points drawn from the
    expanded multiset, so duplicated-point and integer-weighted runs with the
    same generator state coincide.  Raises ValueError when every point is
    identical (no split exists).
    """
    coords = np.asarray(coords, dtype=float)
    counts = np.asarray(counts)
    if len(coords) == 0:
        raise ValueError("cannot split an empty cloud")
    cum = np.cumsum(counts)
    j1 = _draw_point_index(rng, cum)
    same = np.all(coords == coords[j1], axis=1)
    if same.all():
        raise ValueError("all points identical; split refused")
    cum2 = np.cumsum(np.where(same, 0, counts))
    u = int(rng.integers(int(cum2[-1])))
    j2 = int(np.searchsorted(cum2, u, side="right"))

    centers = np.stack([coords[j1], coords[j2]]).astype(float)
    labels = None
    for _ in range(100):
        d2 = ((coords[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        new_labels = d2.argmin(axis=1)
        for k in (0, 1):
            if not (new_labels == k).any():
                centers[k] = coords[d2[:, 1 - k].argmax()]
                d2 = ((coords[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
                new_labels = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in (0, 1):
            sel = labels == k
            centers[k] = np.average(coords[sel], axis=0, weights=counts[sel])
    return labels


# Pooled-variance floor: the squared sigma of the angular point-spread
# function, the coarsest resolution axis of the image ((0.132 rad beam
# width at half power / 2.355)^2).  A cluster of image cells can never be
# more compact than the system's point spread, so variance estimates below
# this are measurement artifacts (in the extreme, a single repeated point
# has zero variance and an unbounded likelihood).  Capping the likelihood
# term here keeps bic() finite and makes splits that only shave
# sub-resolution variance lose to the assignment-entropy cost, so they are
# refused; genuine structure wider than a resolution cell is unaffected.
_RESOLUTION_VARIANCE = (0.132 / 2.355) ** 2


def bic(clusters: list) -> float:
    """Bayesian information criterion of a hard-assignment Gaussian mixture.

    The model is k spherical Gaussians with a shared per-dimension variance
    (pooled MLE, floored at the point-spread variance) and multinomial
    mixing weights; BIC = max log-likelihood minus (p/2) log R with
    p = k (dim + 1) + 1.  Larger is better.
    """
    if not clusters:
        raise ValueError("bic of empty cluster list")
    d = clusters[0].coords.shape[1]
    r_total = 0.0
    sse = 0.0
    sizes = []
    for c in clusters:
        w = c.counts.astype(float)
        rn = w.sum()
        sizes.append(rn)
        r_total += rn
        sse += float((w * ((c.coords - c.centroid) ** 2).sum(axis=1)).sum())
    sigma2 = max(sse / (r_total * d), _RESOLUTION_VARIANCE)
    ll = 0.0
    for rn in sizes:
        ll += rn * math.log(rn / r_total)
    ll -= 0.5 * r_total * d * (math.log(2.0 * math.pi * sigma2) + 1.0)
    p = len(clusters) * (d + 1) + 1
    return ll - 0.5 * p * math.log(r_total)


def _subcluster(cluster: Cluster, mask: np.ndarray) -> Cluster:
    return Cluster(
        coords=cluster.coords[mask],
        counts=cluster.counts[mask],
        cells=cluster.cells[mask],
        thetas=cluster.thetas[mask],
    )


def xmeans(cloud: PointCloud, seed) -> list:
    """Recursive 2-means splitting governed by the BIC split test.

    Depth-first: every cluster is trial-split with k=2 and the split is kept
    iff BIC(children) > BIC(parent).  Accepted splits strictly shrink
    cluster sizes, so recursion terminates.  Deterministic for a given seed.
    """
    if cloud.is_empty:
        return []
    rng = np.random.default_rng(seed)
    root = Cluster(coords=cloud.coords, counts=cloud.counts,
                   cells=cloud.cells, thetas=cloud.thetas)
    out = []
    stack = [root]
    while stack:
        cluster = stack.pop()
        if cluster.size < 2:
            out.append(cluster)
            continue
        try:
            labels = kmeans2(cluster.coords, cluster.counts, rng)
        except ValueError:
            out.append(cluster)
            continue
        children = [_subcluster(cluster, labels == 0), _subcluster(cluster, labels == 1)]
        if bic(children) > bic([cluster]):
            stack.extend(reversed(children))
        else:
            out.append(cluster)
    return out


def _merge_pair(a: Cluster, b: Cluster) -> Cluster:
    return Cluster(
        coords=np.concatenate([a.coords, b.coords]),
        counts=np.concatenate([a.counts, b.counts]),
        cells=np.concatenate([a.cells, b.cells]),
        thetas=np.concatenate([a.thetas, b.thetas]),
    )


def merge_clusters(clusters: list, diameter_m: float = 0.6) -> list:
    """Fuse clusters closer (in ground-plane centroid distance) than a torso.

    Repeatedly merges the closest pair while its distance is below
    ``diameter_m``; the result has all pairwise centroid distances >= D.
    """
    if diameter_m <= 0:
        raise ValueError("diameter_m must be > 0")
    work = list(clusters)
    while len(work) >= 2:
        xy = np.array([c.centroid_xy for c in work])
        diff = xy[:, None, :] - xy[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        iu = np.triu_indices(len(work), k=1)
        flat = dist[iu]
        best = int(flat.argmin())
        if flat[best] >= diameter_m:
            break
        i, j = int(iu[0][best]), int(iu[1][best])
        work[i] = _merge_pair(work[i], work[j])
        del work[j]
    return work


def representative_positions(clusters: list, power_slice: np.ndarray,
                             range_grid_m: np.ndarray, theta_rad: np.ndarray,
                             timestamp_s: float, v: float) -> list:
    """One PersonEstimate per cluster, positioned at its strongest cell.

    The person's position is the polar-to-Cartesian conversion of the member
    cell with maximum power; the interval is the point-count-weighted median
    of member u1/v values (absent for 2D clouds).  Output is sorted by
    position for a stable person numbering.
    """
    people = []
    for c in clusters:
        powers = power_slice[c.cells[:, 0], c.cells[:, 1]]
        best = int(powers.argmax())
        l_idx, n_idx = int(c.cells[best, 0]), int(c.cells[best, 1])
        x, y = polar_to_cartesian(range_grid_m[l_idx], theta_rad[n_idx])
        if c.coords.shape[1] >= 4:
            interval = weighted_median(c.coords[:, 2] / v, c.counts)
        else:
            interval = float("nan")
        people.append((x, y, interval, c.size))
    people.sort(key=lambda p: (p[0], p[1]))
    return [
        PersonEstimate(person_id=i, x_m=x, y_m=y, interval_s=interval,
                       timestamp_s=timestamp_s, cluster_size=size)
        for i, (x, y, interval, size) in enumerate(people)
    ]


def _trailing_sum(values: np.ndarray, window: int) -> np.ndarray:
    csum = np.cumsum(values, axis=0)
    out = np.empty_like(csum)
    out[:window] = csum[:window]
    out[window:] = csum[window:] - csum[:-window]
    return out


def _shifted(values: np.ndarray, dr: int, dn: int) -> np.ndarray:
    """Shift a [..., range, angle] stack by (dr, dn), padding with NaN."""
    out = np.full_like(values, np.nan)
    rs = slice(max(dr, 0), values.shape[-2] + min(dr, 0))
    ns = slice(max(dn, 0), values.shape[-1] + min(dn, 0))
    rsrc = slice(max(-dr, 0), values.shape[-2] + min(-dr, 0))
    nsrc = slice(max(-dn, 0), values.shape[-1] + min(-dn, 0))
    out[..., rs, ns] = values[..., rsrc, nsrc]
    return out


def smooth_resp_image(resp: RespImage, window_s: float = 6.0,
                      out_times_s: np.ndarray | None = None,
                      median_range_bins: int = 3,
                      median_angle_bins: int = 4) -> RespImage:
    """Time-average valid intervals over (t - T_cy, t], then median filter.

    The trailing mean uses only valid samples; a cell is valid at t when the
    window holds at least one valid estimate.  The spatial median (default 3
    range bins x 4 angle bins) replaces each valid cell's value with the
    median of valid neighbors, leaving the validity mask untouched.
    """
    if window_s <= 0:
        raise ValueError("window_s must be > 0")
    times = resp.tick_times_s
    if len(times) > 1:
        dt = float(times[1] - times[0])
        steps = np.diff(times)
        if np.any(np.abs(steps - dt) > 1e-9):
            raise ValueError("smoothing requires uniformly sampled input")
    else:
        dt = window_s
    window = max(1, int(round(window_s / dt)))

    tau_fill = np.where(resp.valid, resp.tau_s, 0.0)
    sums = _trailing_sum(tau_fill, window)
    cnts = _trailing_sum(resp.valid.astype(float), window)
    valid_mean = cnts > 0.5
    with np.errstate(invalid="ignore", divide="ignore"):
        tau_mean = np.where(valid_mean, sums / np.maximum(cnts, 1.0), np.nan)

    if out_times_s is None:
        out_times_s = times
        sel = np.arange(len(times))
    else:
        out_times_s = np.asarray(out_times_s, dtype=float)
        sel = np.round((out_times_s - times[0]) / dt).astype(int)
        if np.any(sel < 0) or np.any(sel >= len(times)):
            raise ValueError("requested output time outside the series")
        if np.any(np.abs(times[sel] - out_times_s) > dt / 2):
            raise ValueError("requested output time not on the sample grid")

    tau_sel = tau_mean[sel]
    valid_sel = valid_mean[sel]
    r_off = range(-(median_range_bins // 2), median_range_bins - median_range_bins // 2)
    n_off = range(-(median_angle_bins // 2), median_angle_bins - median_angle_bins // 2)
    stack = np.stack([_shifted(tau_sel, dr, dn) for dr in r_off for dn in n_off])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(stack, axis=0)
    tau_out = np.where(valid_sel, med, np.nan)

    return RespImage(
        tau_s=tau_out,
        valid=valid_sel,
        tick_times_s=out_times_s,
        range_grid_m=resp.range_grid_m,
        sin_theta=resp.sin_theta,
        max_interval_s=resp.max_interval_s,
    )
