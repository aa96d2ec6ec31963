"""Per-step telemetry records and their CSV serialization.

Column layout for an n-DOF run (one row per control step):

    t, q1..qn, qdes1..qdesn, err, u1..un, s1..sn, dhat1..dhatn,
    v, vdot_pred, vdot_meas, sat

``err`` is the Euclidean norm of the position error.  Rows from methods
without a sliding controller (PID) carry nan in s/dhat/v columns.  Floats
are written with repr() so parsing returns bit-identical values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import RejectedInputError

__all__ = ["Telemetry", "write_telemetry", "read_telemetry"]


@dataclass
class Telemetry:
    """Column-stacked per-step records of one episode."""

    t: np.ndarray  # (N,)
    q: np.ndarray  # (N, n)
    q_des: np.ndarray  # (N, n)
    err: np.ndarray  # (N,)
    u: np.ndarray  # (N, n)
    s: np.ndarray  # (N, n)
    d_hat: np.ndarray  # (N, n)
    v: np.ndarray  # (N,)
    vdot_pred: np.ndarray  # (N,)
    vdot_meas: np.ndarray  # (N,)
    sat: np.ndarray  # (N,) 0/1

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def __len__(self) -> int:
        return self.t.shape[0]

    def equals(self, other: "Telemetry") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
            for f in ("t", "q", "q_des", "err", "u", "s", "d_hat", "v", "vdot_pred", "vdot_meas", "sat")
        )


def _columns(n: int) -> list[str]:
    cols = ["t"]
    cols += [f"q{i+1}" for i in range(n)]
    cols += [f"qdes{i+1}" for i in range(n)]
    cols += ["err"]
    cols += [f"u{i+1}" for i in range(n)]
    cols += [f"s{i+1}" for i in range(n)]
    cols += [f"dhat{i+1}" for i in range(n)]
    cols += ["v", "vdot_pred", "vdot_meas", "sat"]
    return cols


def write_telemetry(path, telemetry: Telemetry) -> None:
    n = telemetry.n
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_columns(n))
        for i in range(len(telemetry)):
            row = [repr(float(telemetry.t[i]))]
            row += [repr(float(x)) for x in telemetry.q[i]]
            row += [repr(float(x)) for x in telemetry.q_des[i]]
            row += [repr(float(telemetry.err[i]))]
            row += [repr(float(x)) for x in telemetry.u[i]]
            row += [repr(float(x)) for x in telemetry.s[i]]
            row += [repr(float(x)) for x in telemetry.d_hat[i]]
            row += [
                repr(float(telemetry.v[i])),
                repr(float(telemetry.vdot_pred[i])),
                repr(float(telemetry.vdot_meas[i])),
                repr(int(telemetry.sat[i])),
            ]
            writer.writerow(row)


def read_telemetry(path) -> Telemetry:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, row)) for row in reader]
    if not rows:
        raise RejectedInputError(f"{path}: telemetry file has no rows")
    n = sum(1 for c in header if c.startswith("q") and not c.startswith("qdes"))
    expected = _columns(n)
    if header != expected:
        bad = next((c for c, e in zip(header, expected) if c != e), "<missing>")
        raise RejectedInputError(f"{path}: unexpected telemetry column {bad!r}")
    data = np.asarray(rows, dtype=np.float64)
    idx = 0

    def take(width):
        nonlocal idx
        block = data[:, idx : idx + width]
        idx += width
        return block[:, 0] if width == 1 else block

    return Telemetry(
        t=take(1),
        q=take(n),
        q_des=take(n),
        err=take(1),
        u=take(n),
        s=take(n),
        d_hat=take(n),
        v=take(1),
        vdot_pred=take(1),
        vdot_meas=take(1),
        sat=take(1),
    )
