"""Find the channel noise level that puts the 20 m end-to-end BER at the target.

The shipped ``CALIBRATED_NOISE_LEVEL`` in ``aquamodem.channel`` came from a
run of this script with its defaults. Expect several minutes of runtime.
"""

import argparse

import numpy as np

from aquamodem.experiments import calibrate_noise_level


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", default="0.38:0.48:0.02", help="start:stop:step, stop inclusive")
    ap.add_argument("--target", type=float, default=0.02)
    ap.add_argument("--distance", type=float, default=20.0)
    ap.add_argument("--frames", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    start, stop, step = map(float, args.levels.split(":"))
    levels = np.round(np.arange(start, stop + step / 2, step), 6)
    level, _ = calibrate_noise_level(levels, args.target, args.distance, args.frames, args.seed, log=print)
    print(f"calibrated noise_level = {level:.4f}")


if __name__ == "__main__":
    main()
