"""Trajectory CSV ingestion, scenario slicing and conversion to GP datasets.

CSV layout::

    # comment lines are ignored
    time_s,leader_speed_mps,follower_speed_mps
    0.0,15.0,15.0
    0.1,15.0,15.0

Extra columns after the first three are allowed and ignored on load (the
prediction exports carry a ``predicted_speed_mps`` column).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gp import Dataset

__all__ = [
    "HEADER",
    "DT_TOLERANCE",
    "TrajectoryFormatError",
    "Trajectory",
    "ScenarioSlice",
    "load_trajectory_csv",
    "save_trajectory_csv",
    "slice_trajectory",
    "to_dataset",
]

HEADER = ("time_s", "leader_speed_mps", "follower_speed_mps")
DT_TOLERANCE = 1e-6
SLICE_LABELS = ("constant", "deceleration", "acceleration", "full_oscillation", "custom")


class TrajectoryFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class Trajectory:
    dt: float
    leader_speed: np.ndarray
    follower_speed: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        lead = np.array(self.leader_speed, dtype=float).reshape(-1)
        foll = np.array(self.follower_speed, dtype=float).reshape(-1)
        if lead.shape != foll.shape:
            raise ValueError(f"leader ({lead.size}) and follower ({foll.size}) series differ in length")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        for name, arr in (("leader_speed", lead), ("follower_speed", foll)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            if np.any(arr < 0):
                raise ValueError(f"{name} contains negative speeds")
        lead.flags.writeable = False
        foll.flags.writeable = False
        object.__setattr__(self, "leader_speed", lead)
        object.__setattr__(self, "follower_speed", foll)

    def __len__(self) -> int:
        return self.leader_speed.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt


@dataclass(frozen=True)
class ScenarioSlice:
    start: int
    end: int
    label: str = "custom"

    def __post_init__(self):
        if self.label not in SLICE_LABELS:
            raise ValueError(f"unknown slice label {self.label!r}; expected one of {SLICE_LABELS}")
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid slice [{self.start}, {self.end})")


def load_trajectory_csv(path, source_tag: str | None = None) -> Trajectory:
    path = Path(path)
    rows: list[tuple[int, list[float]]] = []
    header_seen = False
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in row]
            if not header_seen:
                if tuple(cells[:3]) != HEADER:
                    raise TrajectoryFormatError(f"expected header {','.join(HEADER)}, got {','.join(cells)}", lineno)
                header_seen = True
                continue
            if len(cells) < 3:
                raise TrajectoryFormatError(f"expected 3 columns, got {len(cells)}", lineno)
            try:
                rows.append((lineno, [float(c) for c in cells[:3]]))
            except ValueError:
                raise TrajectoryFormatError(f"unparseable number in {','.join(cells[:3])}", lineno) from None
    if not header_seen:
        raise TrajectoryFormatError(f"{path}: no header found (empty file?)")
    if not rows:
        raise TrajectoryFormatError(f"{path}: no data rows")
    lines = [r[0] for r in rows]
    data = np.array([r[1] for r in rows])
    t, lead, foll = data.T
    for name, col in (("time_s", t), ("leader_speed_mps", lead), ("follower_speed_mps", foll)):
        bad = np.flatnonzero(~np.isfinite(col))
        if bad.size:
            raise TrajectoryFormatError(f"non-finite {name}", lines[bad[0]])
        neg = np.flatnonzero(col < 0) if name != "time_s" else np.array([], dtype=int)
        if neg.size:
            raise TrajectoryFormatError(f"negative {name} {col[neg[0]]}", lines[neg[0]])
    if len(rows) == 1:
        raise TrajectoryFormatError(f"{path}: a single row does not define a time step", lines[0])
    steps = np.diff(t)
    back = np.flatnonzero(steps <= 0)
    if back.size:
        raise TrajectoryFormatError("timestamps must be strictly increasing", lines[back[0] + 1])
    dt = float(steps[0])
    off = np.flatnonzero(np.abs(steps - dt) > DT_TOLERANCE)
    if off.size:
        i = off[0]
        raise TrajectoryFormatError(
            f"time step {steps[i]:.6g} s differs from {dt:.6g} s (inconsistent dt)", lines[i + 1]
        )
    return Trajectory(dt, lead, foll, source_tag if source_tag is not None else path.name)


def save_trajectory_csv(traj: Trajectory, path, predicted=None, comment: str | None = None) -> Path:
    """Write ``traj`` in the ingestion format; ``predicted`` adds a
    ``predicted_speed_mps`` column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(HEADER)
    cols = [traj.times, traj.leader_speed, traj.follower_speed]
    if predicted is not None:
        predicted = np.asarray(predicted, dtype=float).reshape(-1)
        if predicted.size != len(traj):
            raise ValueError(f"{predicted.size} predictions for a trajectory of length {len(traj)}")
        header.append("predicted_speed_mps")
        cols.append(predicted)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
    return path


def slice_trajectory(traj: Trajectory, s: ScenarioSlice) -> Trajectory:
    if s.end > len(traj):
        raise ValueError(f"slice [{s.start}, {s.end}) out of range for length {len(traj)}")
    return Trajectory(
        traj.dt,
        traj.leader_speed[s.start : s.end],
        traj.follower_speed[s.start : s.end],
        f"{traj.source_tag}[{s.label}:{s.start}:{s.end}]",
    )


def to_dataset(traj: Trajectory, vehicle_id: str) -> Dataset:
    # Same-time pairing: leader speed at t -> follower speed at t.
    return Dataset(traj.leader_speed, traj.follower_speed, vehicle_id)
