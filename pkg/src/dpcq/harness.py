"""Multi-agent DPC-Q episode loop.

One Q-iteration visits subcarriers in ascending order. On each subcarrier
every femtocell observes its state, CL agents exchange their current-state
Q-rows over a lossless bus, and each agent commits a power level. Once all
subcarriers are set, capacities are recomputed for the joint allocation and
every agent applies one Q-update per subcarrier.

Agents on the same subcarrier do not influence each other's state, so each
subcarrier step is vectorized across agents. The random stream is consumed
in a fixed pattern (one uniform and one action index per agent per
subcarrier per iteration) regardless of paradigm or exploration window.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .agents import (
    ACTION_LEVELS_DBM,
    N_STATES,
    RewardSpec,
    SharedQRow,
    compute_reward,
    state_ids,
)
from .radio_env import (
    NOISE_POWER,
    P_MAX_FEMTO_DBM,
    P_MAX_MACRO_DBM,
    ChannelMatrix,
    Topology,
    capacities_mw,
    channel_gains,
    dbm_to_mw,
    equal_split_macro_dbm,
    generate_topology,
)
from .tabular_q import LearningParams

__all__ = [
    "Paradigm",
    "SimConfig",
    "RunTrace",
    "CooperationBus",
    "Episode",
    "cooperation_bus_exchange",
    "initial_state",
    "run_episode",
    "derive_seeds",
]


class Paradigm(str, Enum):
    IL = "IL"
    CL = "CL"


@dataclass(frozen=True)
class SimConfig:
    n_femto: int = 4
    n_sub: int = 6
    q_iterations: int = 3000
    paradigm: Paradigm = Paradigm.IL
    reward: RewardSpec = field(default_factory=RewardSpec)
    learning: LearningParams = field(default_factory=LearningParams)
    noise_power: float = NOISE_POWER
    path_loss_exponent: float = 2.0
    rng_seed: int = 0
    initial_power_dbm: float = -20.0
    p_max_femto_dbm: float = P_MAX_FEMTO_DBM
    p_max_macro_dbm: float = P_MAX_MACRO_DBM
    level_margin_db: float = 5.0
    action_levels_dbm: tuple[float, ...] = tuple(ACTION_LEVELS_DBM.tolist())

    def __post_init__(self):
        object.__setattr__(self, "paradigm", Paradigm(self.paradigm))
        if isinstance(self.reward, dict):
            object.__setattr__(self, "reward", RewardSpec(**self.reward))
        if isinstance(self.learning, dict):
            object.__setattr__(self, "learning", LearningParams(**self.learning))
        object.__setattr__(self, "action_levels_dbm", tuple(float(v) for v in self.action_levels_dbm))
        if self.n_femto < 0:
            raise ValueError("n_femto must be non-negative")
        if self.n_sub < 1 or self.q_iterations < 1:
            raise ValueError("n_sub and q_iterations must be at least 1")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if len(self.action_levels_dbm) < 1 or list(self.action_levels_dbm) != sorted(self.action_levels_dbm):
            raise ValueError("action levels must be a non-empty ascending list")

    @property
    def target_capacity(self) -> float:
        return self.reward.target_capacity

    @property
    def n_actions(self) -> int:
        return len(self.action_levels_dbm)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["paradigm"] = self.paradigm.value
        d["reward"]["kind"] = self.reward.kind.value
        d["action_levels_dbm"] = list(self.action_levels_dbm)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def label(self) -> str:
        return f"{self.reward.label}-{self.paradigm.value}"


def derive_seeds(rng_seed: int) -> tuple[int, np.random.SeedSequence]:
    """Split one user seed into a topology seed and a learning seed sequence.

    The topology depends only on ``(rng_seed, n_femto)``, so runs that differ
    only in reward or paradigm share the same network.
    """
    topo_ss, learn_ss = np.random.SeedSequence(rng_seed).spawn(2)
    return int(topo_ss.generate_state(1)[0]), learn_ss


@dataclass
class RunTrace:
    """Full-resolution record of one episode.

    Arrays are indexed ``[iteration]``, ``[iteration, subcarrier]`` or
    ``[iteration, agent, subcarrier]``. ``states`` are the states the agents
    acted in; capacities and rewards are those after the joint commit.
    """

    config: SimConfig
    macro_capacity: np.ndarray  # (T, n_sub)
    femto_capacity: np.ndarray  # (T, N, n_sub)
    states: np.ndarray  # (T, N, n_sub)
    actions: np.ndarray  # (T, N, n_sub)
    rewards: np.ndarray  # (T, N, n_sub)
    shared_entries: np.ndarray  # (T,) cumulative
    update_counts: np.ndarray  # (T, N) Q-updates applied per agent

    @property
    def n_iterations(self) -> int:
        return self.macro_capacity.shape[0]

    @property
    def n_femto(self) -> int:
        return self.femto_capacity.shape[1]

    def femto_total_capacity(self) -> np.ndarray:
        """Per-iteration, per-femtocell capacity summed over subcarriers, (T, N)."""
        return self.femto_capacity.sum(axis=2)

    def action_dbm(self) -> np.ndarray:
        return np.asarray(self.config.action_levels_dbm)[self.actions]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.config.digest().encode())
        for name in ("macro_capacity", "femto_capacity", "states", "actions", "rewards", "shared_entries"):
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return h.hexdigest()

    def slice(self, stop: int) -> "RunTrace":
        return replace(
            self,
            macro_capacity=self.macro_capacity[:stop],
            femto_capacity=self.femto_capacity[:stop],
            states=self.states[:stop],
            actions=self.actions[:stop],
            rewards=self.rewards[:stop],
            shared_entries=self.shared_entries[:stop],
            update_counts=self.update_counts[:stop],
        )


class CooperationBus:
    """Lossless, zero-delay all-to-all exchange with an entry counter."""

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.rows_delivered = 0

    @property
    def entries_delivered(self) -> int:
        return self.rows_delivered * self.n_actions

    def exchange(self, rows: Sequence[SharedQRow]) -> list[list[SharedQRow]]:
        senders = [r.sender for r in rows]
        if len(set(senders)) != len(senders):
            raise ValueError("one row per agent per exchange")
        received = [[r for r in rows if r.sender != m.sender] for m in rows]
        n = len(rows)
        self.rows_delivered += n * (n - 1)
        return received

    def account(self, n_agents: int) -> None:
        """Count one exchange without materializing messages (fast path)."""
        self.rows_delivered += n_agents * (n_agents - 1)


def cooperation_bus_exchange(rows: Sequence[SharedQRow], bus: CooperationBus | None = None):
    """Deliver every row to every other agent.

    Returns the per-agent received lists in the order of ``rows``.
    """
    bus = bus or CooperationBus(len(rows[0].row) if rows else 0)
    return bus.exchange(rows)


def initial_state(cfg: SimConfig, topo: Topology, channels: ChannelMatrix):
    """Initial powers, capacities and per-(agent, subcarrier) state ids.

    Returns ``(femto_dbm (N, n_sub), macro_capacity, femto_capacity, states)``.
    """
    N, n_sub = topo.n_femto, cfg.n_sub
    femto_dbm = np.full((N, n_sub), float(cfg.initial_power_dbm))
    macro_mw = dbm_to_mw(equal_split_macro_dbm(n_sub, cfg.p_max_macro_dbm))
    c_o, c_f = capacities_mw(channels, dbm_to_mw(femto_dbm), macro_mw, cfg.noise_power)
    totals = dbm_to_mw(femto_dbm).sum(axis=1)
    states = state_ids(c_o[None, :], totals[:, None], cfg.target_capacity, cfg.p_max_femto_dbm,
                       cfg.level_margin_db)
    states = np.broadcast_to(states, (N, n_sub)).copy()
    return femto_dbm, c_o, c_f, states


class Episode:
    """Resumable DPC-Q episode; ``run()`` executes every remaining iteration."""

    def __init__(self, cfg: SimConfig, topology: Topology | None = None):
        self.cfg = cfg
        topo_seed, learn_ss = derive_seeds(cfg.rng_seed)
        self.topology = topology if topology is not None else generate_topology(cfg.n_femto, topo_seed)
        if self.topology.n_femto != cfg.n_femto:
            raise ValueError("topology size does not match n_femto")
        self.channels = channel_gains(self.topology, cfg.path_loss_exponent, cfg.n_sub)
        self.rng = np.random.default_rng(learn_ss)
        self.levels_dbm = np.asarray(cfg.action_levels_dbm)
        self.levels_mw = dbm_to_mw(self.levels_dbm)
        self.macro_mw = dbm_to_mw(equal_split_macro_dbm(cfg.n_sub, cfg.p_max_macro_dbm))
        self.budget_mw = float(dbm_to_mw(cfg.p_max_femto_dbm))

        N, n_sub, A, T = cfg.n_femto, cfg.n_sub, cfg.n_actions, cfg.q_iterations
        self.q = np.zeros((N, N_STATES, A))
        femto_dbm, c_o, c_f, _ = initial_state(cfg, self.topology, self.channels)
        self.femto_mw = dbm_to_mw(femto_dbm)
        self.macro_capacity = c_o
        self.bus = CooperationBus(A)
        self.iteration = 0

        self._macro = np.zeros((T, n_sub))
        self._femto = np.zeros((T, N, n_sub))
        self._states = np.zeros((T, N, n_sub), dtype=np.int8)
        self._actions = np.zeros((T, N, n_sub), dtype=np.int8)
        self._rewards = np.zeros((T, N, n_sub))
        self._shared = np.zeros(T, dtype=np.int64)
        self._updates = np.zeros((T, N), dtype=np.int64)

    @property
    def femto_dbm(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.femto_mw)

    def _states_now(self, n: int) -> np.ndarray:
        cfg = self.cfg
        return state_ids(self.macro_capacity[n], self.femto_mw.sum(axis=1), cfg.target_capacity,
                         cfg.p_max_femto_dbm, cfg.level_margin_db)

    def step(self) -> None:
        cfg = self.cfg
        t = self.iteration
        if t >= cfg.q_iterations:
            raise RuntimeError("episode already finished")
        N, n_sub, A = cfg.n_femto, cfg.n_sub, cfg.n_actions
        agents = np.arange(N)
        exploring_window = t < cfg.learning.epsilon_active_fraction * cfg.q_iterations
        cooperative = cfg.paradigm is Paradigm.CL

        acted_in = np.empty((N, n_sub), dtype=np.int64)
        chosen = np.empty((N, n_sub), dtype=np.int64)
        for n in range(n_sub):
            s = self._states_now(n)
            rows = self.q[agents, s]  # each agent's current-state row
            u = self.rng.random(N)
            random_a = self.rng.integers(A, size=N)
            if cooperative and N > 0:
                self.bus.account(N)
                consensus = int(rows.sum(axis=0).argmax())
                a = np.full(N, consensus)
            else:
                a = rows.argmax(axis=1)
            if exploring_window:
                explore = u < cfg.learning.epsilon
                a = np.where(explore, random_a, a)
            self.femto_mw[:, n] = self.levels_mw[a]
            acted_in[:, n] = s
            chosen[:, n] = a

        c_o, c_f = capacities_mw(self.channels, self.femto_mw, self.macro_mw, cfg.noise_power)
        totals = self.femto_mw.sum(axis=1)
        budget_ok = totals <= self.budget_mw
        rewards = compute_reward(cfg.reward, c_o[None, :], c_f, budget_ok[:, None])
        rewards = np.broadcast_to(rewards, (N, n_sub))
        next_states = state_ids(c_o[None, :], totals[:, None], cfg.target_capacity,
                                cfg.p_max_femto_dbm, cfg.level_margin_db)
        next_states = np.broadcast_to(next_states, (N, n_sub))

        alpha, gamma = cfg.learning.alpha, cfg.learning.gamma
        for n in range(n_sub):
            s, a, s2 = acted_in[:, n], chosen[:, n], next_states[:, n]
            target = rewards[:, n] + gamma * self.q[agents, s2].max(axis=1, initial=-np.inf)
            self.q[agents, s, a] = (1.0 - alpha) * self.q[agents, s, a] + alpha * target

        self.macro_capacity = c_o
        self._macro[t] = c_o
        self._femto[t] = c_f
        self._states[t] = acted_in
        self._actions[t] = chosen
        self._rewards[t] = rewards
        self._shared[t] = self.bus.entries_delivered
        self._updates[t] = n_sub
        self.iteration = t + 1

    def run(self, until: int | None = None) -> "Episode":
        stop = self.cfg.q_iterations if until is None else min(until, self.cfg.q_iterations)
        while self.iteration < stop:
            self.step()
        return self

    def trace(self) -> RunTrace:
        k = self.iteration
        return RunTrace(
            config=self.cfg,
            macro_capacity=self._macro[:k].copy(),
            femto_capacity=self._femto[:k].copy(),
            states=self._states[:k].copy(),
            actions=self._actions[:k].copy(),
            rewards=self._rewards[:k].copy(),
            shared_entries=self._shared[:k].copy(),
            update_counts=self._updates[:k].copy(),
        )

    # -- checkpointing ---------------------------------------------------

    def checkpoint(self) -> dict:
        k = self.iteration
        return {
            "format": "dpcq-checkpoint/1",
            "config": self.cfg.to_dict(),
            "topology": json.loads(self.topology.to_json(digits=None)),
            "iteration": k,
            "q_tables": self.q.tolist(),
            "femto_mw": self.femto_mw.tolist(),
            "macro_capacity": self.macro_capacity.tolist(),
            "rng_state": self.rng.bit_generator.state,
            "bus_rows": self.bus.rows_delivered,
            "trace": {
                "macro_capacity": self._macro[:k].tolist(),
                "femto_capacity": self._femto[:k].tolist(),
                "states": self._states[:k].tolist(),
                "actions": self._actions[:k].tolist(),
                "rewards": self._rewards[:k].tolist(),
                "shared_entries": self._shared[:k].tolist(),
                "update_counts": self._updates[:k].tolist(),
            },
        }

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "Episode":
        if doc.get("format") != "dpcq-checkpoint/1":
            raise ValueError("not a DPC-Q checkpoint")
        cfg = SimConfig.from_dict(doc["config"])
        topo = Topology.from_json(json.dumps(doc["topology"]))
        ep = cls(cfg, topology=topo)
        ep.iteration = int(doc["iteration"])
        ep.q = np.array(doc["q_tables"], dtype=float).reshape(ep.q.shape)
        ep.femto_mw = np.array(doc["femto_mw"], dtype=float).reshape(ep.femto_mw.shape)
        ep.macro_capacity = np.array(doc["macro_capacity"], dtype=float)
        ep.rng.bit_generator.state = doc["rng_state"]
        ep.bus.rows_delivered = int(doc["bus_rows"])
        k = ep.iteration
        for name, dtype in (("macro_capacity", float), ("femto_capacity", float), ("states", np.int8),
                            ("actions", np.int8), ("rewards", float), ("shared_entries", np.int64),
                            ("update_counts", np.int64)):
            buf = getattr(ep, "_" + {"macro_capacity": "macro", "femto_capacity": "femto",
                                      "shared_entries": "shared", "update_counts": "updates"}.get(name, name))
            if k:
                buf[:k] = np.array(doc["trace"][name], dtype=dtype).reshape(buf[:k].shape)
        return ep


def run_episode(cfg: SimConfig, topology: Topology | None = None) -> RunTrace:
    return Episode(cfg, topology).run().trace()
