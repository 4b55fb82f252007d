#!/usr/bin/env python3
"""Convert an EuRoC MAV ground-truth file into the geoslam replay CSVs.

Contract
--------
Input: ``state_groundtruth_estimate0/data.csv`` of an EuRoC sequence
(``timestamp_ns, p_RS_R xyz, q_RS wxyz, v_RS_R xyz, b_w_RS_S xyz,
b_a_RS_S xyz``) and, optionally, ``imu0/data.csv`` (``timestamp_ns,
w_RS_S xyz, a_RS_S xyz``).

Conventions:

* Body frame = EuRoC sensor frame S (the IMU). Inertial frame = EuRoC R.
* ``t = (timestamp - first timestamp) * 1e-9`` seconds.
* Rotation ``R = R(q_RS)`` maps body to inertial; position ``P = p_RS_R``.
* Angular velocity (body): forward difference ``log(R_k^T R_{k+1}) / dt``,
  or with ``--imu`` the gyro reading minus the ground-truth gyro bias,
  linearly interpolated to the ground-truth stamps.
* Translational velocity (body): forward difference
  ``R_k^T (P_{k+1} - P_k) / dt`` (``--velocity diff``), or ``R_k^T v_RS_R``
  (``--velocity gt``). The difference form replays the truth exactly under
  zero-order-hold integration.
* The last row repeats the previous velocities.
* IMU direction columns are synthesized as ``a_j = R^T r_j`` for the
  reference directions given by ``--reference`` (EuRoC has no magnetometer,
  and the accelerometer is dominated by motion in aggressive sequences).
* ``--bias-angular``, ``--bias-translational`` and ``--std`` corrupt the
  velocities with a constant bias and i.i.d. Gaussian noise.

Output: ``imu.csv`` (``t,wx,wy,wz,vx,vy,vz,a1x,...``) and ``truth.csv``
(``t,r11..r33,px,py,pz``) in ``--out``. Landmark measurements are left to the
replay command, which synthesizes them from the truth.
"""

import argparse
import bisect
import csv
import math
import os
import random
import sys


def quat_to_matrix(w, x, y, z):
    n = math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]


def transpose(m):
    return [[m[j][i] for j in range(3)] for i in range(3)]


def matmul(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)] for i in range(3)]


def matvec(m, v):
    return [sum(m[i][k] * v[k] for k in range(3)) for i in range(3)]


def log_so3(r):
    c = max(-1.0, min(1.0, 0.5 * (r[0][0] + r[1][1] + r[2][2] - 1.0)))
    theta = math.acos(c)
    v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]]
    if theta < 1e-6:
        return [0.5 * x for x in v]
    if math.pi - theta < 1e-6:
        raise ValueError("rotation step close to a half turn; decimate less")
    k = theta / (2.0 * math.sin(theta))
    return [k * x for x in v]


def read_rows(path):
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].lstrip().startswith("#")]
    return [[float(x) for x in r] for r in rows]


def fmt(x):
    return f"{x:.16e}"


def interp(times, values, t):
    j = bisect.bisect_left(times, t)
    if j == 0:
        return values[0]
    if j >= len(times):
        return values[-1]
    t0, t1 = times[j - 1], times[j]
    s = (t - t0) / (t1 - t0)
    return [a + s * (b - a) for a, b in zip(values[j - 1], values[j])]


def vec3(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z")
    return parts


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("groundtruth", help="state_groundtruth_estimate0/data.csv")
    ap.add_argument("--imu", help="imu0/data.csv; use the gyro for angular velocity")
    ap.add_argument("--out", required=True)
    ap.add_argument("--velocity", choices=["diff", "gt"], default="diff")
    ap.add_argument("--every", type=int, default=1, help="keep every N-th ground-truth row")
    ap.add_argument("--max-rows", type=int, default=0)
    ap.add_argument("--reference", type=vec3, action="append",
                    help="inertial reference direction x,y,z (repeatable); "
                         "default -1,1,1.1 and 0,0,1.3")
    ap.add_argument("--bias-angular", type=vec3, default=[0.0, 0.0, 0.0])
    ap.add_argument("--bias-translational", type=vec3, default=[0.0, 0.0, 0.0])
    ap.add_argument("--std", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    refs = args.reference or [[-1.0, 1.0, 1.1], [0.0, 0.0, 1.3]]
    gt = read_rows(args.groundtruth)[:: max(1, args.every)]
    if args.max_rows > 0:
        gt = gt[: args.max_rows]
    if len(gt) < 2:
        sys.exit("need at least two ground-truth rows")
    ns0 = gt[0][0]
    t = [(r[0] - ns0) * 1e-9 for r in gt]
    rot = [quat_to_matrix(*r[4:8]) for r in gt]
    pos = [r[1:4] for r in gt]

    gyro = None
    if args.imu:
        imu = read_rows(args.imu)
        times = [(r[0] - ns0) * 1e-9 for r in imu]
        gyro = (times, [r[1:4] for r in imu])

    n = len(gt)
    omega, vel = [], []
    for k in range(n):
        j = min(k, n - 2)
        dt = t[j + 1] - t[j]
        if not dt > 0:
            sys.exit(f"timestamps not increasing at row {j + 1}")
        rt = transpose(rot[j])
        if gyro:
            w = interp(gyro[0], gyro[1], t[k])
            w = [a - b for a, b in zip(w, gt[k][11:14])]
        else:
            w = [x / dt for x in log_so3(matmul(rt, rot[j + 1]))]
        if args.velocity == "diff":
            v = [x / dt for x in matvec(rt, [b - a for a, b in zip(pos[j], pos[j + 1])])]
        else:
            v = matvec(transpose(rot[k]), gt[k][8:11])
        omega.append(w)
        vel.append(v)

    rng = random.Random(args.seed)
    os.makedirs(args.out, exist_ok=True)
    header = ["t", "wx", "wy", "wz", "vx", "vy", "vz"]
    for j in range(1, len(refs) + 1):
        header += [f"a{j}x", f"a{j}y", f"a{j}z"]
    with open(os.path.join(args.out, "imu.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for k in range(n):
            wk = [a + b + rng.gauss(0.0, args.std) for a, b in zip(omega[k], args.bias_angular)]
            vk = [a + b + rng.gauss(0.0, args.std) for a, b in zip(vel[k], args.bias_translational)]
            rt = transpose(rot[k])
            dirs = [x for r in refs for x in matvec(rt, r)]
            w.writerow([fmt(x) for x in [t[k]] + wk + vk + dirs])
    with open(os.path.join(args.out, "truth.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33", "px", "py", "pz"])
        for k in range(n):
            w.writerow([fmt(x) for x in [t[k]] + [e for row in rot[k] for e in row] + pos[k]])
    print(f"wrote {n} rows to {args.out}")


if __name__ == "__main__":
    main()
