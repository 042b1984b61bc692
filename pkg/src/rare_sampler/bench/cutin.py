"""Simplified longitudinal cut-in-tailgate surrogate.

Three cars on a line: A cuts into the AV's (B's) lane ahead of it while C
tailgates from behind. B follows its current leader with an intelligent
driver model; the crash probability under disturbed initial gaps, speeds,
and cut-in timing is the rare event. The scenario runs T=15 Euler steps of
0.6 s (9 s, roughly a human reaction-time grid).

Disturbances (12 by default): A's initial gap and speed, C's initial gap
and speed, plus one lateral-intrusion timing offset per phase of the cut-in
maneuver. Every coordinate is oriented so that increasing the mapped value
never makes the scenario safer, which is what the monotone-hull machinery
assumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError

DT = 0.6
N_STEPS = 15
CAR_LENGTH = 4.5
LATERAL_SLACK = 4.0
INTRUSION_LEADER = 0.3
INTRUSION_WEIGHT = 0.25

# nominal initial conditions (disturbances are offsets from these)
A_GAP_NOM = 20.0
A_SPEED_NOM = 24.0
C_GAP_NOM = 14.0
C_SPEED_NOM = 30.0
B_SPEED0 = 28.0


@dataclass(frozen=True)
class IdmParams:
    """Intelligent driver model constants; defaults are standard literature values."""

    v0: float = 30.0        # desired speed (m/s)
    a_max: float = 1.5      # max acceleration (m/s^2)
    b: float = 2.0          # comfortable deceleration (m/s^2)
    t_headway: float = 1.0  # time headway (s)
    s0: float = 2.0         # jam distance (m)
    delta_exp: float = 4.0  # acceleration exponent

    def __post_init__(self):
        if min(self.v0, self.a_max, self.b, self.t_headway, self.s0, self.delta_exp) <= 0:
            raise ContractError("IDM parameters must be positive")


AGGRESSIVE_TAILGATER = IdmParams(v0=36.0, a_max=2.5, b=2.0, t_headway=0.45, s0=1.5)


@dataclass(frozen=True)
class CutInState:
    """Longitudinal snapshot of the three cars at step t."""

    pos_a: float
    vel_a: float
    pos_b: float
    vel_b: float
    pos_c: float
    vel_c: float
    t: int


def idm_accel(gap, v, dv, p: IdmParams = IdmParams()):
    """IDM acceleration a_max[1 - (v/v0)^delta - (s*/gap)^2], clamped to [-3b, a_max].

    dv is the closing speed (ego minus leader). Callers must flag gap <= 0
    as a crash before asking for an acceleration.
    """
    gap_arr = np.asarray(gap, dtype=float)
    if np.any(gap_arr <= 0.0):
        raise ContractError("idm_accel requires gap > 0 (crash should be flagged first)")
    v = np.asarray(v, dtype=float)
    dv = np.asarray(dv, dtype=float)
    s_star = p.s0 + v * p.t_headway + v * dv / (2.0 * np.sqrt(p.a_max * p.b))
    a = p.a_max * (1.0 - (v / p.v0) ** p.delta_exp - (s_star / gap_arr) ** 2)
    return np.clip(a, -3.0 * p.b, p.a_max)


def _free_road_accel(v, p: IdmParams):
    return p.a_max * (1.0 - (np.asarray(v, dtype=float) / p.v0) ** p.delta_exp)


def _intrusion(step: int, offsets: np.ndarray) -> np.ndarray:
    """Per-row intrusion increment for one step; offsets shaped (n, phases)."""
    n_phases = offsets.shape[1]
    base = np.clip((step - 2) / 7.0, 0.0, 1.0)
    phase = min(step * n_phases // N_STEPS, n_phases - 1)
    return np.clip(base + INTRUSION_WEIGHT * offsets[:, phase], 0.0, 1.0)


def simulate_cut_in_batch(X: np.ndarray, av: IdmParams = IdmParams(),
                          tailgater: IdmParams = AGGRESSIVE_TAILGATER) -> np.ndarray:
    """Vectorized crash indicator for disturbance rows X of shape (n, 4 + phases)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] < 5:
        raise ContractError("cut-in disturbance needs >= 5 coordinates")
    if not np.isfinite(X).all():
        raise ContractError("disturbances must be finite")
    n = X.shape[0]
    offsets = X[:, 4:]

    pos_b = np.zeros(n)
    vel_b = np.full(n, B_SPEED0)
    gap_a0 = A_GAP_NOM + X[:, 0]
    pos_a = pos_b + CAR_LENGTH + gap_a0
    vel_a = np.maximum(A_SPEED_NOM + X[:, 1], 0.0)
    gap_c0 = C_GAP_NOM + X[:, 2]
    pos_c = pos_b - CAR_LENGTH - gap_c0
    vel_c = np.maximum(C_SPEED_NOM + X[:, 3], 0.0)

    crashed = np.zeros(n, dtype=bool)
    # A immediately overlapping B counts as contact once it intrudes
    intr = np.zeros(n)

    for step in range(N_STEPS):
        intr = np.maximum(intr, _intrusion(step, offsets))  # merge is irreversible

        gap_ab = pos_a - pos_b - CAR_LENGTH + (1.0 - intr) * LATERAL_SLACK
        gap_bc = pos_b - pos_c - CAR_LENGTH

        front_crash = (intr >= INTRUSION_LEADER) & (gap_ab <= 0.0)
        rear_crash = gap_bc <= 0.0
        crashed |= front_crash | rear_crash

        leader = (intr >= INTRUSION_LEADER) & (pos_a > pos_b)
        safe_gap_ab = np.maximum(gap_ab, 0.1)
        acc_b = np.where(
            leader,
            idm_accel(safe_gap_ab, vel_b, vel_b - vel_a, av),
            _free_road_accel(vel_b, av),
        )
        safe_gap_bc = np.maximum(gap_bc, 0.1)
        acc_c = idm_accel(safe_gap_bc, vel_c, vel_c - vel_b, tailgater)

        vel_b = np.maximum(vel_b + acc_b * DT, 0.0)
        vel_c = np.maximum(vel_c + acc_c * DT, 0.0)
        pos_a = pos_a + vel_a * DT
        pos_b = pos_b + vel_b * DT
        pos_c = pos_c + vel_c * DT

    return crashed.astype(np.int8)


def simulate_cut_in(x: np.ndarray, av: IdmParams = IdmParams(),
                    tailgater: IdmParams = AGGRESSIVE_TAILGATER) -> int:
    """Crash indicator for a single disturbance vector; deterministic."""
    return int(simulate_cut_in_batch(np.asarray(x, dtype=float).reshape(1, -1),
                                     av, tailgater)[0])


def trajectory(x: np.ndarray, av: IdmParams = IdmParams(),
               tailgater: IdmParams = AGGRESSIVE_TAILGATER) -> list[CutInState]:
    """Step-by-step states for one disturbance vector (debug/inspection)."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    offsets = x[:, 4:]
    pos_b, vel_b = 0.0, B_SPEED0
    pos_a = CAR_LENGTH + A_GAP_NOM + x[0, 0]
    vel_a = max(A_SPEED_NOM + x[0, 1], 0.0)
    pos_c = -CAR_LENGTH - C_GAP_NOM - x[0, 2]
    vel_c = max(C_SPEED_NOM + x[0, 3], 0.0)
    out = [CutInState(pos_a, vel_a, pos_b, vel_b, pos_c, vel_c, 0)]
    intr = 0.0
    for step in range(N_STEPS):
        intr = max(intr, float(_intrusion(step, offsets)[0]))
        gap_ab = pos_a - pos_b - CAR_LENGTH + (1.0 - intr) * LATERAL_SLACK
        gap_bc = pos_b - pos_c - CAR_LENGTH
        leader = intr >= INTRUSION_LEADER and pos_a > pos_b
        acc_b = float(idm_accel(max(gap_ab, 0.1), vel_b, vel_b - vel_a, av)) if leader \
            else float(_free_road_accel(vel_b, av))
        acc_c = float(idm_accel(max(gap_bc, 0.1), vel_c, vel_c - vel_b, tailgater))
        vel_b = max(vel_b + acc_b * DT, 0.0)
        vel_c = max(vel_c + acc_c * DT, 0.0)
        pos_a += vel_a * DT
        pos_b += vel_b * DT
        pos_c += vel_c * DT
        out.append(CutInState(pos_a, vel_a, pos_b, vel_b, pos_c, vel_c, step + 1))
    return out
