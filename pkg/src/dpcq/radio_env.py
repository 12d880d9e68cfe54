"""Downlink radio environment: topology placement, path-loss gains and
per-subcarrier Shannon capacities for one macrocell underlaid with femtocells.

Powers are carried in dBm at the interface and converted to linear
milliwatts before any arithmetic. Noise power is in the same linear unit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NOISE_POWER",
    "P_MAX_FEMTO_DBM",
    "P_MAX_MACRO_DBM",
    "PlacementLimits",
    "Topology",
    "ChannelMatrix",
    "PowerAllocation",
    "CapacityReport",
    "TopologyError",
    "dbm_to_mw",
    "mw_to_dbm",
    "generate_topology",
    "channel_gains",
    "macro_capacity",
    "femto_capacity",
    "capacities",
    "equal_split_macro_dbm",
]

NOISE_POWER = 1e-7
P_MAX_FEMTO_DBM = 15.0
P_MAX_MACRO_DBM = 43.0


class TopologyError(RuntimeError):
    """Raised when placement cannot satisfy the distance constraints."""


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(np.asarray(mw, dtype=float))


@dataclass(frozen=True)
class PlacementLimits:
    """Maximum link distances (meters) used when placing nodes."""

    mbs_to_macro_user: float = 1000.0
    mbs_to_femto_user: float = 800.0
    fbs_to_own_user: float = 80.0
    fbs_to_other_user: float = 300.0
    fbs_to_macro_user: float = 800.0
    min_separation: float = 1.0


@dataclass(frozen=True)
class Topology:
    mbs_position: np.ndarray
    macro_user_position: np.ndarray
    fbs_positions: np.ndarray
    femto_user_positions: np.ndarray

    def __post_init__(self):
        for name in ("mbs_position", "macro_user_position"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(2))
        for name in ("fbs_positions", "femto_user_positions"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1, 2))
        if len(self.fbs_positions) != len(self.femto_user_positions):
            raise ValueError("need exactly one femto user per FBS")

    @property
    def n_femto(self) -> int:
        return len(self.fbs_positions)

    def link_distances(self) -> dict[str, np.ndarray | float]:
        """Distances for every link the capacity formulas touch.

        ``fbs_to_femto_user[j, i]`` is the distance from FBS ``j`` to the user
        served by FBS ``i``.
        """
        mbs, mu = self.mbs_position, self.macro_user_position
        fbs, fu = self.fbs_positions, self.femto_user_positions
        return {
            "mbs_to_macro_user": float(np.linalg.norm(mu - mbs)),
            "mbs_to_femto_user": np.linalg.norm(fu - mbs, axis=1),
            "fbs_to_macro_user": np.linalg.norm(fbs - mu, axis=1),
            "fbs_to_femto_user": np.linalg.norm(fbs[:, None, :] - fu[None, :, :], axis=2),
        }

    def violations(self, limits: PlacementLimits = PlacementLimits()) -> list[str]:
        """Human-readable list of broken constraints (empty when valid)."""
        d = self.link_distances()
        out = []
        if d["mbs_to_macro_user"] > limits.mbs_to_macro_user:
            out.append("MBS to macro user")
        if np.any(d["mbs_to_femto_user"] > limits.mbs_to_femto_user):
            out.append("MBS to femto user")
        if np.any(d["fbs_to_macro_user"] > limits.fbs_to_macro_user):
            out.append("FBS to macro user")
        ff = d["fbs_to_femto_user"]
        if np.any(np.diag(ff) > limits.fbs_to_own_user):
            out.append("FBS to own user")
        off = ~np.eye(self.n_femto, dtype=bool)
        if np.any(ff[off] > limits.fbs_to_other_user):
            out.append("FBS to other femto user")
        smallest = min(
            d["mbs_to_macro_user"],
            np.min(d["mbs_to_femto_user"], initial=np.inf),
            np.min(d["fbs_to_macro_user"], initial=np.inf),
            np.min(ff, initial=np.inf),
        )
        if smallest < limits.min_separation:
            out.append("minimum separation")
        return out

    def to_json(self, digits: int | None = 6) -> str:
        """Positions rounded to ``digits`` significant digits; ``None`` keeps full precision."""
        def r(a):
            return [float(v) if digits is None else float(f"{v:.{digits}g}") for v in np.ravel(a)]

        doc = {
            "units": "m",
            "mbs_position": r(self.mbs_position),
            "macro_user_position": r(self.macro_user_position),
            "fbs_positions": [r(p) for p in self.fbs_positions],
            "femto_user_positions": [r(p) for p in self.femto_user_positions],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        doc = json.loads(text)
        return cls(
            mbs_position=doc["mbs_position"],
            macro_user_position=doc["macro_user_position"],
            fbs_positions=np.asarray(doc["fbs_positions"], dtype=float).reshape(-1, 2),
            femto_user_positions=np.asarray(doc["femto_user_positions"], dtype=float).reshape(-1, 2),
        )


def _uniform_disc(rng: np.random.Generator, center, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random())
    theta = 2.0 * np.pi * rng.random()
    return np.asarray(center, dtype=float) + r * np.array([np.cos(theta), np.sin(theta)])


def generate_topology(
    n_femto: int,
    rng_seed: int,
    limits: PlacementLimits = PlacementLimits(),
    max_attempts: int = 20_000,
    max_restarts: int = 50,
) -> Topology:
    """Randomly place the MBS, its user and ``n_femto`` femtocells.

    The MBS sits at the origin and the macro user is uniform in its disc.
    Femtocells are added one at a time: each FBS is drawn uniformly from a
    bounding disc and its user uniformly from the FBS coverage disc, and the
    pair is kept only if every constraint against the nodes already placed
    holds. If one femtocell exhausts ``max_attempts`` the whole layout is
    redrawn, up to ``max_restarts`` times.
    """
    if n_femto < 0:
        raise ValueError("n_femto must be non-negative")
    rng = np.random.default_rng(rng_seed)
    lim = limits
    mbs = np.zeros(2)

    for _ in range(max_restarts):
        while True:
            mu = _uniform_disc(rng, mbs, lim.mbs_to_macro_user)
            if np.linalg.norm(mu - mbs) >= lim.min_separation:
                break
        fbs: list[np.ndarray] = []
        fus: list[np.ndarray] = []
        ok = True
        for _i in range(n_femto):
            if fbs:
                # every later FBS must lie within reach of the first femto user
                center, radius = fus[0], lim.fbs_to_other_user
            else:
                center, radius = mbs, lim.mbs_to_femto_user + lim.fbs_to_own_user
            for _a in range(max_attempts):
                b = _uniform_disc(rng, center, radius)
                u = _uniform_disc(rng, b, lim.fbs_to_own_user)
                if _admissible(b, u, mbs, mu, fbs, fus, lim):
                    fbs.append(b)
                    fus.append(u)
                    break
            else:
                ok = False
                break
        if ok:
            return Topology(mbs, mu, np.array(fbs).reshape(-1, 2), np.array(fus).reshape(-1, 2))
    raise TopologyError(
        f"could not place {n_femto} femtocells after {max_restarts} restarts "
        f"of {max_attempts} attempts each; constraints may be infeasible"
    )


def _admissible(b, u, mbs, mu, fbs, fus, lim: PlacementLimits) -> bool:
    d_own = np.linalg.norm(u - b)
    if not lim.min_separation <= d_own <= lim.fbs_to_own_user:
        return False
    d = np.linalg.norm(u - mbs)
    if not lim.min_separation <= d <= lim.mbs_to_femto_user:
        return False
    d = np.linalg.norm(b - mu)
    if not lim.min_separation <= d <= lim.fbs_to_macro_user:
        return False
    if fbs:
        P = np.asarray(fbs)
        U = np.asarray(fus)
        to_new_user = np.linalg.norm(P - u, axis=1)
        from_new_fbs = np.linalg.norm(U - b, axis=1)
        both = np.concatenate([to_new_user, from_new_fbs])
        if np.any(both > lim.fbs_to_other_user) or np.any(both < lim.min_separation):
            return False
    return True


@dataclass(frozen=True)
class ChannelMatrix:
    """Path-loss gains ``d ** -k`` for every link, repeated per subcarrier.

    ``femto_to_femto[j, i, n]`` is the gain from FBS ``j`` to the user of FBS
    ``i`` (diagonal = serving links).
    """

    macro_to_macro: np.ndarray  # (n_sub,)
    macro_to_femto: np.ndarray  # (n_femto, n_sub)
    femto_to_macro: np.ndarray  # (n_femto, n_sub)
    femto_to_femto: np.ndarray  # (n_femto, n_femto, n_sub)
    exponent: float = 2.0

    @property
    def n_sub(self) -> int:
        return self.macro_to_macro.shape[0]

    @property
    def n_femto(self) -> int:
        return self.macro_to_femto.shape[0]


def _gain(d, k: float):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("zero link distance gives an infinite path-loss gain")
    return d ** (-k)


def channel_gains(topo: Topology, k: float = 2.0, n_sub: int = 6) -> ChannelMatrix:
    d = topo.link_distances()
    rep = lambda g: np.repeat(np.asarray(g, dtype=float)[..., None], n_sub, axis=-1)  # noqa: E731
    return ChannelMatrix(
        macro_to_macro=rep(_gain(d["mbs_to_macro_user"], k)),
        macro_to_femto=rep(_gain(d["mbs_to_femto_user"], k)),
        femto_to_macro=rep(_gain(d["fbs_to_macro_user"], k)),
        femto_to_femto=rep(_gain(d["fbs_to_femto_user"], k)),
        exponent=k,
    )


def equal_split_macro_dbm(n_sub: int, p_max_dbm: float = P_MAX_MACRO_DBM) -> np.ndarray:
    return np.full(n_sub, float(mw_to_dbm(dbm_to_mw(p_max_dbm) / n_sub)))


@dataclass
class PowerAllocation:
    """Transmit powers in dBm with a linear (mW) mirror kept in sync.

    ``-inf`` dBm is accepted and maps to exactly zero milliwatts.
    """

    femto_dbm: np.ndarray
    macro_dbm: np.ndarray
    p_max_femto_dbm: float = P_MAX_FEMTO_DBM
    p_max_macro_dbm: float = P_MAX_MACRO_DBM
    femto_mw: np.ndarray = field(init=False, repr=False)
    macro_mw: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.femto_dbm = np.array(self.femto_dbm, dtype=float, ndmin=2)
        self.macro_dbm = np.array(self.macro_dbm, dtype=float, ndmin=1)
        self.femto_mw = dbm_to_mw(self.femto_dbm)
        self.macro_mw = dbm_to_mw(self.macro_dbm)

    @classmethod
    def uniform(cls, n_femto: int, n_sub: int, femto_dbm: float,
                p_max_macro_dbm: float = P_MAX_MACRO_DBM) -> "PowerAllocation":
        return cls(
            femto_dbm=np.full((n_femto, n_sub), float(femto_dbm)),
            macro_dbm=equal_split_macro_dbm(n_sub, p_max_macro_dbm),
        )

    def set_femto(self, i, n, dbm) -> None:
        self.femto_dbm[i, n] = dbm
        self.femto_mw[i, n] = dbm_to_mw(dbm)

    def femto_total_mw(self) -> np.ndarray:
        return self.femto_mw.sum(axis=1)

    def copy(self) -> "PowerAllocation":
        return PowerAllocation(
            self.femto_dbm.copy(), self.macro_dbm.copy(), self.p_max_femto_dbm, self.p_max_macro_dbm
        )


@dataclass(frozen=True)
class CapacityReport:
    macro_capacity: np.ndarray  # (n_sub,)
    femto_capacity: np.ndarray  # (n_femto, n_sub)
    noise_power: float = NOISE_POWER


def macro_capacity(ch: ChannelMatrix, pa: PowerAllocation, n: int, noise: float = NOISE_POWER) -> float:
    signal = ch.macro_to_macro[n] * pa.macro_mw[n]
    interference = float(np.dot(ch.femto_to_macro[:, n], pa.femto_mw[:, n]))
    return float(np.log2(1.0 + signal / (interference + noise)))


def femto_capacity(ch: ChannelMatrix, pa: PowerAllocation, i: int, n: int, noise: float = NOISE_POWER) -> float:
    g = ch.femto_to_femto[:, i, n]
    p = pa.femto_mw[:, n]
    signal = g[i] * p[i]
    cross = float(np.dot(g, p) - signal)
    interference = cross + ch.macro_to_femto[i, n] * pa.macro_mw[n]
    return float(np.log2(1.0 + signal / (interference + noise)))


def capacities_mw(ch: ChannelMatrix, femto_mw: np.ndarray, macro_mw: np.ndarray, noise: float = NOISE_POWER):
    """Vectorized capacities straight from linear powers.

    Returns ``(macro (n_sub,), femto (n_femto, n_sub))``.
    """
    macro_int = np.einsum("in,in->n", ch.femto_to_macro, femto_mw)
    c_o = np.log2(1.0 + ch.macro_to_macro * macro_mw / (macro_int + noise))
    received = np.einsum("jin,jn->in", ch.femto_to_femto, femto_mw)
    own = np.einsum("iin->in", ch.femto_to_femto) * femto_mw
    interference = received - own + ch.macro_to_femto * macro_mw[None, :]
    c_f = np.log2(1.0 + own / (interference + noise))
    return c_o, c_f


def capacities(ch: ChannelMatrix, pa: PowerAllocation, noise: float = NOISE_POWER) -> CapacityReport:
    c_o, c_f = capacities_mw(ch, pa.femto_mw, pa.macro_mw, noise)
    return CapacityReport(c_o, c_f, noise)
