"""Linear car-following controller and leader speed profiles.

The follower keeps a constant time gap: desired spacing ``v * time_gap +
standstill``.  Its command is ``u = k_s * (d - d*) + k_v * (v_leader - v) +
k_a * a``, clamped to +/- ``accel_limit``, applied as the acceleration over the
next step and integrated with forward Euler.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ACCEL_LIMIT",
    "ControllerConfig",
    "CFState",
    "SpeedProfile",
    "FollowerTrace",
    "AGGRESSIVE",
    "PASSIVE",
    "desired_spacing",
    "control_input",
    "simulate_follower",
    "equilibrium_state",
    "generate_oscillation",
    "oscillation_phases",
]

ACCEL_LIMIT = 3.0  # m/s^2, comfort bound


@dataclass(frozen=True)
class ControllerConfig:
    gains: tuple[float, float, float]  # k_s [1/s^2], k_v [1/s], k_a [-]
    time_gap: float  # s
    standstill: float  # m
    accel_limit: float = ACCEL_LIMIT

    def __post_init__(self):
        gains = tuple(float(g) for g in self.gains)
        if len(gains) != 3:
            raise ValueError(f"expected 3 gains (k_s, k_v, k_a), got {self.gains!r}")
        object.__setattr__(self, "gains", gains)
        if not self.time_gap > 0:
            raise ValueError(f"time_gap must be > 0, got {self.time_gap}")
        if not self.standstill >= 0:
            raise ValueError(f"standstill must be >= 0, got {self.standstill}")
        if not self.accel_limit > 0:
            raise ValueError(f"accel_limit must be > 0, got {self.accel_limit}")


AGGRESSIVE = ControllerConfig(gains=(0.01, 10.0, -0.01), time_gap=0.5, standstill=5.0)
PASSIVE = ControllerConfig(gains=(10.0, 0.01, -0.01), time_gap=2.5, standstill=7.0)


@dataclass(frozen=True)
class CFState:
    spacing: float  # m, gap to the leader
    speed: float  # m/s
    accel: float = 0.0  # m/s^2


@dataclass(frozen=True)
class SpeedProfile:
    dt: float
    speeds: np.ndarray

    def __post_init__(self):
        v = np.array(self.speeds, dtype=float).reshape(-1)
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("speeds must be finite and >= 0")
        v.flags.writeable = False
        object.__setattr__(self, "speeds", v)

    def __len__(self) -> int:
        return self.speeds.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.speeds.size) * self.dt

    def __getitem__(self, s: slice) -> "SpeedProfile":
        return SpeedProfile(self.dt, self.speeds[s])


@dataclass(frozen=True)
class FollowerTrace:
    follower: SpeedProfile
    spacing: np.ndarray = field(repr=False)
    accel: np.ndarray = field(repr=False)
    collisions: list[int] = field(default_factory=list)  # step indices with spacing <= 0


def desired_spacing(speed: float, cfg: ControllerConfig) -> float:
    return speed * cfg.time_gap + cfg.standstill


def control_input(state: CFState, leader_speed: float, cfg: ControllerConfig, clamp: bool = True) -> float:
    k_s, k_v, k_a = cfg.gains
    gap_error = state.spacing - desired_spacing(state.speed, cfg)
    speed_diff = leader_speed - state.speed
    u = k_s * gap_error + k_v * speed_diff + k_a * state.accel
    if clamp:
        u = min(max(u, -cfg.accel_limit), cfg.accel_limit)
    return u


def equilibrium_state(speed: float, cfg: ControllerConfig) -> CFState:
    return CFState(spacing=desired_spacing(speed, cfg), speed=speed, accel=0.0)


def simulate_follower(leader: SpeedProfile, cfg: ControllerConfig, init: CFState | None = None) -> FollowerTrace:
    """Integrate the follower against ``leader``; the output has the leader's
    length, with ``init`` at index 0.  ``init`` defaults to equilibrium at the
    leader's first speed.  Collisions are recorded, not raised."""
    n = len(leader)
    if n == 0:
        raise ValueError("leader profile is empty")
    if init is None:
        init = equilibrium_state(float(leader.speeds[0]), cfg)
    dt = leader.dt
    vl = leader.speeds
    speed = np.empty(n)
    spacing = np.empty(n)
    accel = np.empty(n)
    state = init
    speed[0], spacing[0], accel[0] = state.speed, state.spacing, state.accel
    collisions = [0] if state.spacing <= 0 else []
    for t in range(n - 1):
        a = control_input(state, float(vl[t]), cfg)
        v = max(0.0, state.speed + a * dt)
        d = state.spacing + (float(vl[t]) - state.speed) * dt
        state = CFState(spacing=d, speed=v, accel=a)
        speed[t + 1], spacing[t + 1], accel[t + 1] = v, d, a
        if d <= 0:
            collisions.append(t + 1)
    return FollowerTrace(SpeedProfile(dt, speed), spacing, accel, collisions)


def _phase_lengths(durations, dt: float) -> list[int]:
    durations = [float(d) for d in durations]
    if len(durations) != 4 or any(d <= 0 for d in durations):
        raise ValueError(f"need four positive phase durations, got {durations}")
    total = int(round(sum(durations) / dt))
    edges = [int(round(e / dt)) for e in np.cumsum(durations)[:-1]]
    edges = [0, *edges, total]
    return [b - a for a, b in zip(edges[:-1], edges[1:])]


def oscillation_phases(durations, dt: float) -> list[tuple[int, int, str]]:
    """Half-open index ranges of the phases of :func:`generate_oscillation`."""
    labels = ("constant", "deceleration", "acceleration", "constant")
    out, start = [], 0
    for n, label in zip(_phase_lengths(durations, dt), labels):
        out.append((start, start + n, label))
        start += n
    return out


def generate_oscillation(
    base_speed: float,
    dip_speed: float,
    durations=(5.0, 4.0, 4.0, 6.7),
    dt: float = 0.1,
) -> SpeedProfile:
    """Constant cruise, linear deceleration to ``dip_speed``, linear
    acceleration back to ``base_speed``, constant cruise.

    ``durations`` are the four phase lengths in seconds.  The two samples on
    either side of each phase boundary are replaced by a 3-point moving
    average of the piecewise-linear profile.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if dip_speed < 0 or dip_speed > base_speed:
        raise ValueError(f"need base_speed >= dip_speed >= 0, got base={base_speed}, dip={dip_speed}")
    n1, n2, n3, n4 = _phase_lengths(durations, dt)
    drop = base_speed - dip_speed
    v = np.concatenate(
        [
            np.full(n1, float(base_speed)),
            base_speed - drop * np.arange(1, n2 + 1) / n2,
            dip_speed + drop * np.arange(1, n3 + 1) / n3,
            np.full(n4, float(base_speed)),
        ]
    )
    raw = v.copy()
    for b in np.cumsum([n1, n2, n3]):
        for i in (b - 1, b):
            if 0 < i < v.size - 1:
                v[i] = raw[i - 1 : i + 2].mean()
    return SpeedProfile(dt, v)
