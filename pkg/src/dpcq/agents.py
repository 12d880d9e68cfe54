"""Femtocell agents: state encoding, action grid, rewards, IL/CL action rules."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .radio_env import P_MAX_FEMTO_DBM, dbm_to_mw
from .tabular_q import LearningParams, QTable, epsilon_active, greedy, select_action_epsilon

__all__ = [
    "N_STATES",
    "ACTION_LEVELS_DBM",
    "action_levels",
    "AgentState",
    "RewardKind",
    "RewardSpec",
    "SharedQRow",
    "CooperationError",
    "power_level",
    "encode_state",
    "state_ids",
    "reward_rf1",
    "reward_rf2",
    "reward_rf3",
    "compute_reward",
    "reward_in_bounds",
    "select_action_il",
    "select_action_cl",
    "explore_or",
]

N_STATES = 6


def action_levels(low: float = -20.0, high: float = 15.0, step: float = 2.0,
                  include_high: bool = True) -> np.ndarray:
    """Power grid from ``low`` in ``step`` increments, optionally closed at ``high``.

    With the defaults the stepped grid stops at 14 dBm, and 15 dBm is
    appended to give 19 levels. ``include_high=False`` keeps only the 18
    stepped levels.
    """
    levels = np.arange(low, high + 1e-9, step)
    if include_high and not np.isclose(levels[-1], high):
        levels = np.append(levels, high)
    return levels.astype(float)


ACTION_LEVELS_DBM = action_levels()


@dataclass(frozen=True)
class AgentState:
    interference: int  # 1 when the macro user is below its target capacity
    power_level: int  # 0 below budget band, 1 inside, 2 over budget

    def __post_init__(self):
        if self.interference not in (0, 1) or self.power_level not in (0, 1, 2):
            raise ValueError(f"invalid state {self}")

    @property
    def id(self) -> int:
        return self.interference * 3 + self.power_level

    @classmethod
    def from_id(cls, sid: int) -> "AgentState":
        if not 0 <= sid < N_STATES:
            raise ValueError(f"state id {sid} out of range")
        return cls(sid // 3, sid % 3)


class RewardKind(str, Enum):
    RF1 = "RF1"
    RF2 = "RF2"
    RF3 = "RF3"


@dataclass(frozen=True)
class RewardSpec:
    kind: RewardKind = RewardKind.RF1
    target_capacity: float = 6.0
    K: float = 80.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RewardKind(self.kind))
        if self.target_capacity <= 0:
            raise ValueError("target_capacity must be positive")
        if self.kind is RewardKind.RF2 and self.K <= 0:
            raise ValueError("RF2 needs K > 0")

    @property
    def label(self) -> str:
        if self.kind is RewardKind.RF2:
            return f"RF2(K={self.K:g})"
        return self.kind.value


class CooperationError(ValueError):
    """The set of rows received over the cooperation bus is inconsistent."""


@dataclass(frozen=True)
class SharedQRow:
    sender: int
    subcarrier: int
    row: tuple[float, ...]

    def __post_init__(self):
        row = tuple(float(v) for v in self.row)
        if not all(np.isfinite(row)):
            raise ValueError("shared Q-row must be finite")
        object.__setattr__(self, "row", row)

    def to_wire(self) -> str:
        return ",".join([str(self.sender), str(self.subcarrier)] + [repr(v) for v in self.row])

    @classmethod
    def from_wire(cls, text: str) -> "SharedQRow":
        fields = text.strip().split(",")
        return cls(int(fields[0]), int(fields[1]), tuple(float(v) for v in fields[2:]))


def power_level(total_mw, p_max_dbm: float = P_MAX_FEMTO_DBM, margin_db: float = 5.0):
    """Bucket a femtocell's summed linear power into levels 0/1/2.

    Level 1 is the closed band ``[p_max - margin, p_max]`` (dBm, compared in mW).
    Works elementwise on arrays.
    """
    total = np.asarray(total_mw, dtype=float)
    lower = dbm_to_mw(p_max_dbm - margin_db)
    upper = dbm_to_mw(p_max_dbm)
    level = np.where(total > upper, 2, np.where(total >= lower, 1, 0))
    return int(level) if level.ndim == 0 else level


def encode_state(c_o_n: float, total_femto_power_mw: float, spec: RewardSpec,
                 p_max_dbm: float = P_MAX_FEMTO_DBM, margin_db: float = 5.0) -> AgentState:
    if total_femto_power_mw < 0:
        raise ValueError("total power must be non-negative")
    flag = 1 if c_o_n < spec.target_capacity else 0
    return AgentState(flag, power_level(total_femto_power_mw, p_max_dbm, margin_db))


def state_ids(c_o_n, total_mw, target_capacity: float, p_max_dbm: float = P_MAX_FEMTO_DBM,
              margin_db: float = 5.0) -> np.ndarray:
    """Vectorized ``encode_state(...).id``; broadcasts ``c_o_n`` against ``total_mw``."""
    flag = (np.asarray(c_o_n) < target_capacity).astype(np.int64)
    return flag * 3 + power_level(np.asarray(total_mw), p_max_dbm, margin_db)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def reward_rf1(c_o_n, budget_ok, target_capacity: float):
    return _out(np.where(budget_ok, np.exp(-(np.asarray(c_o_n) - target_capacity) ** 2), -1.0))


def reward_rf2(c_o_n, budget_ok, target_capacity: float, K: float):
    if K <= 0:
        raise ValueError("K must be positive")
    return _out(np.where(budget_ok, K - (np.asarray(c_o_n) - target_capacity) ** 2, 0.0))


def reward_rf3(c_o_n, c_i_n, budget_ok, target_capacity: float):
    if np.any(np.asarray(c_i_n) < 0):
        raise ValueError("femto capacity must be non-negative")
    macro_term = np.exp(-(np.asarray(c_o_n) - target_capacity) ** 2)
    return _out(np.where(budget_ok, macro_term - np.exp(-np.asarray(c_i_n)), -3.0))


def compute_reward(spec: RewardSpec, c_o_n, c_i_n, budget_ok):
    if spec.kind is RewardKind.RF1:
        return reward_rf1(c_o_n, budget_ok, spec.target_capacity)
    if spec.kind is RewardKind.RF2:
        return reward_rf2(c_o_n, budget_ok, spec.target_capacity, spec.K)
    return reward_rf3(c_o_n, c_i_n, budget_ok, spec.target_capacity)


def reward_in_bounds(spec: RewardSpec, r) -> np.ndarray:
    """Elementwise check that ``r`` lies in the admissible set for ``spec``.

    Intervals are closed at the ends: ``exp(-x)`` for huge ``x`` underflows
    to zero in floating point.
    """
    r = np.asarray(r, dtype=float)
    if spec.kind is RewardKind.RF1:
        return (r == -1.0) | ((r >= 0.0) & (r <= 1.0))
    if spec.kind is RewardKind.RF2:
        return (r == 0.0) | (r <= spec.K)
    return (r == -3.0) | ((r >= -1.0) & (r <= 1.0))


def explore_or(choose, n_actions: int, params: LearningParams, t: int, t_total: int,
               rng: np.random.Generator) -> int:
    """Epsilon gate shared by both paradigms; ``choose()`` is the greedy rule.

    Draws one uniform per call, plus one action index when exploring.
    """
    u = rng.random()
    if epsilon_active(params, t, t_total) and u < params.epsilon:
        return int(rng.integers(n_actions))
    return choose()


def select_action_il(table: QTable, state: AgentState | int, params: LearningParams, t: int,
                     t_total: int, rng: np.random.Generator) -> int:
    sid = state.id if isinstance(state, AgentState) else int(state)
    return select_action_epsilon(table, sid, params, t, t_total, rng)


def cooperative_sum(own: SharedQRow, received: Sequence[SharedQRow], n_agents: int | None = None) -> np.ndarray:
    senders = [own.sender] + [m.sender for m in received]
    if len(set(senders)) != len(senders):
        raise CooperationError(f"duplicate sender among {senders}")
    if n_agents is not None and sorted(senders) != list(range(n_agents)):
        raise CooperationError(f"expected rows from all {n_agents} agents, got senders {sorted(senders)}")
    width = len(own.row)
    for m in received:
        if len(m.row) != width:
            raise CooperationError(f"row from agent {m.sender} has length {len(m.row)}, expected {width}")
        if m.subcarrier != own.subcarrier:
            raise CooperationError(f"row from agent {m.sender} is for subcarrier {m.subcarrier}")
    total = np.array(own.row)
    for m in received:
        total = total + np.array(m.row)
    return total


def select_action_cl(agent: int, own: SharedQRow, received: Sequence[SharedQRow],
                     n_agents: int | None = None) -> int:
    """Greedy action on the sum of every agent's current-state row.

    Raises :class:`CooperationError` when a sender is missing or duplicated.
    """
    if own.sender != agent:
        raise CooperationError(f"own row is from agent {own.sender}, not {agent}")
    return greedy(cooperative_sum(own, received, n_agents))
