"""Binary container for beat-signal channel cubes.

Layout (all integers little-endian):

    bytes 0..3    magic ``RCUB``
    bytes 4..7    u32 format version (currently 1)
    bytes 8..11   u32 header length H
    bytes 12..    UTF-8 JSON header of H bytes
    then          frame data: float32 interleaved I/Q pairs ordered
                  [slow_time][range][element]

The JSON header records the cube dimensions plus the radar geometry needed
to interpret them, so a cube file round-trips without side channels.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import RadarConfig

MAGIC = b"RCUB"
FORMAT_VERSION = 1


class RcubeError(IOError):
    """Malformed or truncated cube file."""


@dataclass
class ChannelCube:
    """Complex beat signal indexed [slow_time, range_bin, element]."""

    data: np.ndarray
    radar: RadarConfig
    start_time_s: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError("cube data must be 3-D [slow_time, range, element]")
        if not np.iscomplexobj(self.data):
            raise ValueError("cube data must be complex")
        if self.data.shape[1] != self.radar.num_range_bins:
            raise ValueError(
                "cube range dimension %d does not match radar num_range_bins %d"
                % (self.data.shape[1], self.radar.num_range_bins)
            )
        if self.data.shape[2] != self.radar.num_virtual_elements:
            raise ValueError(
                "cube element dimension %d does not match radar num_virtual_elements %d"
                % (self.data.shape[2], self.radar.num_virtual_elements)
            )

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def times_s(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.num_frames) * self.radar.slow_time_step_s

    @property
    def duration_s(self) -> float:
        return self.num_frames * self.radar.slow_time_step_s


def save_cube(cube: ChannelCube, path):
    header = {
        "num_frames": cube.num_frames,
        "num_range_bins": cube.radar.num_range_bins,
        "num_elements": cube.radar.num_virtual_elements,
        "start_time_s": cube.start_time_s,
        "radar": cube.radar.to_dict(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(cube.data.astype(np.complex64))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        # complex64 serializes as interleaved little-endian float32 I/Q
        fh.write(payload.tobytes())


def load_cube(path) -> ChannelCube:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise RcubeError(f"{path}: file too short for header ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise RcubeError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise RcubeError(f"{path}: unsupported format version {version}")
    if len(blob) < 12 + header_len:
        raise RcubeError(
            f"{path}: truncated header, expected {header_len} bytes, got {len(blob) - 12}"
        )
    try:
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RcubeError(f"{path}: invalid header JSON: {exc}") from None

    for key in ("num_frames", "num_range_bins", "num_elements", "radar"):
        if key not in header:
            raise RcubeError(f"{path}: header missing field '{key}'")
    frames = int(header["num_frames"])
    n_range = int(header["num_range_bins"])
    n_elem = int(header["num_elements"])
    radar = RadarConfig.from_dict(header["radar"])

    expected = frames * n_range * n_elem * 8  # complex64
    got = len(blob) - 12 - header_len
    if got != expected:
        raise RcubeError(
            f"{path}: frame data is {got} bytes, expected {expected} "
            f"({frames} frames x {n_range} range bins x {n_elem} elements x 8 bytes)"
        )
    data = np.frombuffer(blob, dtype="<c8", offset=12 + header_len).reshape(
        frames, n_range, n_elem
    )
    return ChannelCube(
        data=data.astype(np.complex128),
        radar=radar,
        start_time_s=float(header.get("start_time_s", 0.0)),
    )
