#!/usr/bin/env python3
"""Write a synthetic ground-truth file in the EuRoC
``state_groundtruth_estimate0/data.csv`` layout.

Used to build the replay test fixture: a 10 s, 100 Hz flight over a
1.5 m circle with altitude, roll and pitch oscillations.
"""

import argparse
import math
import os


def quat_from_euler(roll, pitch, yaw):
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return (
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("out")
    ap.add_argument("--rate", type=float, default=100.0)
    ap.add_argument("--duration", type=float, default=10.0)
    args = ap.parse_args()
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    ns0 = 1403715273262142976
    n = int(round(args.duration * args.rate)) + 1
    with open(args.out, "w") as f:
        f.write("#timestamp, p_RS_R_x [m], p_RS_R_y [m], p_RS_R_z [m], q_RS_w [], q_RS_x [], "
                "q_RS_y [], q_RS_z [], v_RS_R_x [m s^-1], v_RS_R_y [m s^-1], v_RS_R_z [m s^-1], "
                "b_w_RS_S_x [rad s^-1], b_w_RS_S_y [rad s^-1], b_w_RS_S_z [rad s^-1], "
                "b_a_RS_S_x [m s^-2], b_a_RS_S_y [m s^-2], b_a_RS_S_z [m s^-2]\n")
        for k in range(n):
            t = k / args.rate
            p = (1.5 * math.cos(0.5 * t), 1.5 * math.sin(0.5 * t), 1.2 + 0.3 * math.sin(t))
            v = (-0.75 * math.sin(0.5 * t), 0.75 * math.cos(0.5 * t), 0.3 * math.cos(t))
            q = quat_from_euler(0.1 * math.sin(0.7 * t), 0.08 * math.cos(0.9 * t), 0.5 * t + math.pi / 2)
            ns = ns0 + int(round(t * 1e9))
            vals = list(p) + list(q) + list(v) + [0.0] * 6
            f.write(str(ns) + "," + ",".join(f"{x:.9f}" for x in vals) + "\n")


if __name__ == "__main__":
    main()
