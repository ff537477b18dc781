#!/usr/bin/env python3
"""Construct and freeze the two benchmark scenes used by the experiments.

Writes scenes/experiment1.json and scenes/experiment2.json.  Both scenes are
fully deterministic functions of the constants below, so re-running this
script reproduces the committed files byte for byte.

Experiment 1 — seven people in a U-shaped arrangement, all at distinct
angles, with distinct slowly drifting respiratory intervals spanning
2.5-6 s.  Exercises counting when every subject is angularly resolvable.

Experiment 2 — five people, two of which sit in the same beam (equal range,
angular separation within one beamwidth).  A conventional power-image
cloud cannot separate the in-beam pair; the respiratory-space features can.
"""

import argparse
from pathlib import Path

from respspace.scene import (
    BreathingProfile,
    SceneSpec,
    Target,
    save_scene,
    snr_to_noise_power,
)

DURATION_S = 170.0
SNR_DB = 20.0
MIN_INTERVAL_S = 2.5


def drift(base_s: float, swing_s: float):
    """Piecewise-linear interval drift: out to one extreme, across to the
    other, back to the base value.  A zero swing keeps the interval fixed."""
    lo = max(base_s - abs(swing_s), MIN_INTERVAL_S)
    hi = base_s + abs(swing_s)
    first, second = (hi, lo) if swing_s > 0 else (lo, hi)
    return (
        (0.0, base_s),
        (60.0, first),
        (120.0, second),
        (DURATION_S, base_s),
    )


def build_experiment1() -> SceneSpec:
    positions = [
        (-1.5, 2.0),
        (-1.5, 3.0),
        (-0.72, 4.4927),
        (0.0, 4.55),
        (0.72, 4.4927),
        (1.5, 3.0),
        (1.5, 2.0),
    ]
    intervals = [3.05, 5.25, 4.15, 2.5, 3.6, 4.7, 5.8]
    swings = [0.2, -0.2, 0.2, 0.2, -0.2, 0.2, -0.2]
    targets = [
        Target(
            position=pos,
            rcs_scale=1.5,
            extent_m=0.5,
            breathing=BreathingProfile(
                base_interval_s=tau,
                amplitude_m=3e-3,
                interval_drift=drift(tau, swing),
                phase_offset_rad=0.9 * i,
            ),
        )
        for i, (pos, tau, swing) in enumerate(zip(positions, intervals, swings))
    ]
    return SceneSpec(
        targets=targets,
        clutter=[],
        noise_power=snr_to_noise_power(SNR_DB),
        duration_s=DURATION_S,
    )


def build_experiment2() -> SceneSpec:
    positions = [
        (-0.75, 4.7),
        (0.75, 4.7),
        (-0.45, 6.0),
        (0.45, 6.0),
        (0.0, 5.42),
    ]
    intervals = [5.0, 3.45, 7.2, 3.3, 7.6]
    swings = [-0.15, 0.15, 0.0, 0.0, -0.1]
    amplitudes = [3e-3, 3e-3, 2.2e-3, 2.2e-3, 3e-3]
    targets = [
        Target(
            position=pos,
            rcs_scale=2.0,
            extent_m=0.5,
            breathing=BreathingProfile(
                base_interval_s=tau,
                amplitude_m=amp,
                interval_drift=drift(tau, swing),
                phase_offset_rad=1.1 * i,
            ),
        )
        for i, (pos, tau, swing, amp) in enumerate(
            zip(positions, intervals, swings, amplitudes)
        )
    ]
    return SceneSpec(
        targets=targets,
        clutter=[],
        noise_power=snr_to_noise_power(SNR_DB),
        duration_s=DURATION_S,
    )


BUILDERS = {
    "experiment1": build_experiment1,
    "experiment2": build_experiment2,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out-dir",
        default=Path(__file__).resolve().parent.parent / "scenes",
        type=Path,
        help="directory for the scene JSON files",
    )
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, build in BUILDERS.items():
        path = args.out_dir / f"{name}.json"
        save_scene(build(), path)
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
