"""Channel gains, SINR / Shannon capacity, and probe-based power estimation.

Node roles: one MBS serving one MU (the macro link, received at the MU),
and N FBSs. Each FBS serves a single FU that is collapsed into the FBS node,
so the FBS's serving link is stored apart from the cross-link matrix.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, EstimationError, ScenarioError


class Kind(enum.Enum):
    MBS = "mbs"
    MU = "mu"
    FBS = "fbs"


_KIND_ORDER = {Kind.MBS: 0, Kind.MU: 1, Kind.FBS: 2}


@dataclass(frozen=True)
class NodeId:
    kind: Kind
    index: int = 0

    def __post_init__(self):
        if self.kind is Kind.FBS:
            if self.index < 1:
                raise ConfigurationError(f"FBS index must be >= 1, got {self.index}")
        elif self.index != 0:
            raise ConfigurationError(f"{self.kind.value} index must be 0, got {self.index}")

    def __str__(self) -> str:
        return f"fbs{self.index}" if self.kind is Kind.FBS else self.kind.value

    def __lt__(self, other: "NodeId") -> bool:
        return (_KIND_ORDER[self.kind], self.index) < (_KIND_ORDER[other.kind], other.index)

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        t = text.strip().lower()
        if t in ("mbs", "mu"):
            return cls(Kind(t))
        if t.startswith("fbs") and t[3:].isdigit():
            return cls(Kind.FBS, int(t[3:]))
        raise ConfigurationError(f"unknown node name {text!r} (expected mbs, mu or fbs<n>)")


MBS = NodeId(Kind.MBS)
MU = NodeId(Kind.MU)


def fbs(n: int) -> NodeId:
    return NodeId(Kind.FBS, n)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    if x <= 0:
        raise ValueError(f"linear power must be positive, got {x}")
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class PowerAction:
    """Transmit level per subchannel, in dB relative to a unit reference."""

    levels_db: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels_db", tuple(float(v) for v in self.levels_db))
        if not self.levels_db:
            raise ConfigurationError("a PowerAction needs at least one subchannel")
        if not all(math.isfinite(v) for v in self.levels_db):
            raise ConfigurationError(f"non-finite power level in {self.levels_db}")

    @property
    def linear(self) -> tuple[float, ...]:
        return tuple(db_to_linear(v) for v in self.levels_db)

    @property
    def subchannels(self) -> int:
        return len(self.levels_db)

    def check_levels(self, allowed: Iterable[float]) -> "PowerAction":
        allowed = set(float(a) for a in allowed)
        bad = [v for v in self.levels_db if v not in allowed]
        if bad:
            raise ConfigurationError(f"power levels {bad} not in configured set {sorted(allowed)}")
        return self

    @classmethod
    def flat(cls, level_db: float, subchannels: int) -> "PowerAction":
        return cls((level_db,) * subchannels)


# NodeId -> PowerAction of every node currently transmitting.
TransmitProfile = Mapping[NodeId, PowerAction]


@dataclass(frozen=True)
class GainMatrix:
    """Directed linear power gains.

    ``links`` maps (tx, rx, subchannel) for tx != rx. ``serving`` maps
    (fbs_index, subchannel) to the FBS -> own-FU gain. The macro serving link
    is the ordinary MBS -> MU entry of ``links``.
    """

    subchannels: int
    noise_power: float
    links: Mapping[tuple[NodeId, NodeId, int], float] = field(default_factory=dict)
    serving: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.subchannels < 1:
            raise ConfigurationError("need at least one subchannel")
        if not (math.isfinite(self.noise_power) and self.noise_power > 0):
            raise ConfigurationError(f"noise_power must be finite and > 0, got {self.noise_power}")
        for key, g in list(self.links.items()) + list(self.serving.items()):
            if not (math.isfinite(g) and g >= 0):
                raise ConfigurationError(f"gain {key} must be finite and >= 0, got {g}")
            if not 0 <= key[-1] < self.subchannels:
                raise ConfigurationError(f"gain {key} names subchannel outside 0..{self.subchannels - 1}")
        for tx, rx, _ in self.links:
            if tx == rx:
                raise ConfigurationError(f"self-gain entry for {tx} is not allowed")

    def gain(self, tx: NodeId, rx: NodeId, subchannel: int) -> float:
        if tx == rx:
            raise ConfigurationError(f"self-gain {tx}->{rx} is never defined")
        try:
            return self.links[(tx, rx, subchannel)]
        except KeyError:
            raise ConfigurationError(
                f"missing gain for (tx={tx}, rx={rx}, subchannel={subchannel})") from None

    def serving_gain(self, rx: NodeId, subchannel: int) -> float:
        """Gain of the link that ``rx`` receives its own traffic on."""
        if rx == MU:
            return self.gain(MBS, MU, subchannel)
        if rx.kind is Kind.FBS:
            try:
                return self.serving[(rx.index, subchannel)]
            except KeyError:
                raise ConfigurationError(
                    f"missing gain for (tx={rx}, rx=fu{rx.index}, subchannel={subchannel})") from None
        raise ScenarioError(f"{rx} is not a receiver in this network model")

    def with_links(self, links, serving) -> "GainMatrix":
        return GainMatrix(self.subchannels, self.noise_power, dict(links), dict(serving))


def serving_transmitter(rx: NodeId) -> NodeId:
    if rx == MU:
        return MBS
    if rx.kind is Kind.FBS:
        return rx
    raise ScenarioError(f"{rx} is not a receiver in this network model")


def pathloss_gain(distance: float, g0: float = 1.0, d0: float = 1.0, eta: float = 3.0) -> float:
    """Log-distance gain g0 * (d0/d)^eta; distances below d0 are clamped to d0."""
    if distance < 0 or d0 <= 0:
        raise ConfigurationError("distances must be non-negative and d0 > 0")
    return g0 * (d0 / max(distance, d0)) ** eta


def pathloss_matrix(positions: Mapping[NodeId, Sequence[float]],
                    fu_distance: Mapping[int, float],
                    subchannels: int, noise_power: float,
                    g0: float = 1.0, d0: float = 1.0, eta: float = 3.0) -> GainMatrix:
    """Frequency-flat gain matrix from node coordinates."""
    links = {}
    nodes = sorted(positions)
    for tx in nodes:
        for rx in nodes:
            if tx == rx:
                continue
            d = math.dist(positions[tx], positions[rx])
            g = pathloss_gain(d, g0, d0, eta)
            for k in range(subchannels):
                links[(tx, rx, k)] = g
    serving = {}
    for n, d in fu_distance.items():
        g = pathloss_gain(d, g0, d0, eta)
        for k in range(subchannels):
            serving[(n, k)] = g
    return GainMatrix(subchannels, noise_power, links, serving)


def compute_sinr(receiver: NodeId, subchannel: int, profile: TransmitProfile,
                 channel: GainMatrix) -> float:
    """Linear SINR of ``receiver``'s own link on one subchannel.

    Every active transmitter other than the serving one and the receiver
    itself counts as interference.
    """
    tx = serving_transmitter(receiver)
    if tx not in profile:
        raise ScenarioError(f"serving transmitter {tx} of {receiver} is not active")
    signal = profile[tx].linear[subchannel] * channel.serving_gain(receiver, subchannel)
    interference = 0.0
    for other in sorted(profile):
        if other == tx or other == receiver:
            continue
        interference += profile[other].linear[subchannel] * channel.gain(other, receiver, subchannel)
    return signal / (channel.noise_power + interference)


def capacity(sinrs: Iterable[float]) -> float:
    """Shannon capacity summed over subchannels, bps/Hz."""
    return sum(math.log2(1.0 + g) for g in sinrs)


@dataclass(frozen=True)
class CapacityReport:
    per_node_sinr: dict[tuple[NodeId, int], float]
    c_m: float
    c_n: dict[int, float]
    c_0: float


def compute_capacities(profile: TransmitProfile, channel: GainMatrix) -> CapacityReport:
    receivers = [MU] + sorted(n for n in profile if n.kind is Kind.FBS)
    sinr = {}
    caps = {}
    for rx in receivers:
        per_sub = [compute_sinr(rx, k, profile, channel) for k in range(channel.subchannels)]
        for k, g in enumerate(per_sub):
            sinr[(rx, k)] = g
        caps[rx] = capacity(per_sub)
    c_n = {rx.index: c for rx, c in caps.items() if rx.kind is Kind.FBS}
    return CapacityReport(sinr, caps[MU], c_n, math.fsum(c_n.values()))


def probe_estimate(samples: Sequence[float]) -> tuple[float, float]:
    """(signal, noise) from probe outcomes: their mean and N-1 sample variance.

    Computed around the first sample so constant inputs come back exactly.
    """
    n = len(samples)
    if n < 2:
        raise EstimationError(f"probe estimation needs at least 2 samples, got {n}")
    shift = float(samples[0])
    dev = [float(s) - shift for s in samples]
    mean_dev = math.fsum(dev) / n
    mean = shift + mean_dev
    var = math.fsum((d - mean_dev) ** 2 for d in dev) / (n - 1)
    return mean, var


def synthesize_probe_samples(true_power: float, noise_power: float, count: int,
                             rng: np.random.Generator | int) -> list[float]:
    """Emulated probe outcomes: true_power + N(0, sqrt(noise_power)), clamped at 0."""
    if count < 2:
        raise EstimationError(f"need at least 2 probe samples, got {count}")
    if true_power < 0 or noise_power < 0:
        raise EstimationError("true_power and noise_power must be >= 0")
    if noise_power == 0:
        return [float(true_power)] * count
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    draws = true_power + rng.normal(0.0, math.sqrt(noise_power), size=count)
    return np.maximum(draws, 0.0).tolist()
