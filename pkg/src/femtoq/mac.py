"""PAQ MAC frame simulation.

A frame is Sync (beacon), then one TDMA acquisition sub-state per subchannel,
then the QPA state. Slot positions 1 and 2 of every sub-state (and of QPA)
belong to the MBS and MU; FBSs own the later positions, mirrored across
sub-states. New FBSs claim a free position with slotted aloha.
"""

from __future__ import annotations

import enum
import heapq
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .channel import (MBS, MU, GainMatrix, Kind, NodeId, PowerAction, compute_capacities,
                      fbs, probe_estimate, synthesize_probe_samples)
from .errors import AdmissionError, ConfigurationError, EstimationError, ProtocolError
from .learning import (FbsAgent, LearnerConfig, QTable, compute_reward, greedy, observe_state,
                       select_action_cooperative)

log = logging.getLogger(__name__)

MBS_POSITION = 1
MU_POSITION = 2
FIRST_FBS_POSITION = 3

# SeedSequence spawn-key roles; keep stable, they fix every random stream.
_ROLE_EXPLORE = 1
_ROLE_ALOHA = 2
_ROLE_PROBE = 3


class Algorithm(str, enum.Enum):
    PDPA_Q = "pdpa"
    CDPA_Q = "cdpa"
    EQUAL_POWER = "ep"


@dataclass(frozen=True)
class FrameSchedule:
    sync_slots: int = 1
    acquisition_substates: int = 2
    slots_per_substate: int = 4
    qpa_slots: int = 4
    slot_duration: float = 0.5
    sensing_duration: float = 0.010

    def __post_init__(self):
        if self.sync_slots < 1 or self.acquisition_substates < 1:
            raise ConfigurationError("need at least one sync slot and one acquisition sub-state")
        if self.slots_per_substate < 2 or self.qpa_slots < 2:
            raise ConfigurationError("acquisition sub-states and QPA need the two reserved MBS/MU slots")
        if not (self.slot_duration > 0 and 0 < self.sensing_duration <= self.slot_duration):
            raise ConfigurationError("need 0 < sensing_duration <= slot_duration")

    @property
    def total_slots(self) -> int:
        return self.sync_slots + self.acquisition_substates * self.slots_per_substate + self.qpa_slots

    @property
    def frame_duration(self) -> float:
        return self.total_slots * self.slot_duration

    @property
    def fbs_capacity(self) -> int:
        """How many FBSs fit; each needs a position in acquisition and in QPA."""
        return min(self.slots_per_substate, self.qpa_slots) - 2

    @property
    def fbs_positions(self) -> list[int]:
        return list(range(FIRST_FBS_POSITION, FIRST_FBS_POSITION + self.fbs_capacity))

    def acquisition_slot(self, substate: int, position: int) -> int:
        """Global 0-based slot index of a 1-based position inside a sub-state."""
        return self.sync_slots + substate * self.slots_per_substate + position - 1

    def qpa_slot(self, position: int) -> int:
        return self.sync_slots + self.acquisition_substates * self.slots_per_substate + position - 1

    def describe(self, slot: int) -> tuple[str, int, int]:
        """(state, substate, 1-based position) of a global slot index."""
        if slot < self.sync_slots:
            return "sync", 0, slot + 1
        rel = slot - self.sync_slots
        if rel < self.acquisition_substates * self.slots_per_substate:
            return "acquisition", rel // self.slots_per_substate, rel % self.slots_per_substate + 1
        rel -= self.acquisition_substates * self.slots_per_substate
        if rel < self.qpa_slots:
            return "qpa", 0, rel + 1
        raise ValueError(f"slot {slot} outside a {self.total_slots}-slot frame")


@dataclass(frozen=True)
class BeaconPayload:
    frame_schedule: FrameSchedule
    slot_occupancy: dict[int, NodeId | None]


class MsgKind(str, enum.Enum):
    BEACON = "Beacon"
    ACQUISITION = "AcquisitionBroadcast"
    CAPACITY = "QpaCapacityBroadcast"
    QROW = "QpaQRowShare"
    JOIN = "JoinAttempt"


@dataclass(frozen=True)
class MacMessage:
    kind: MsgKind
    sender: NodeId
    time: float
    frame: int
    slot: int
    subchannel: int | None = None
    payload: object = None

    def summary(self) -> dict:
        p = self.payload
        if self.kind is MsgKind.BEACON:
            p = {str(s): (str(n) if n else None) for s, n in p.slot_occupancy.items()}
        elif self.kind is MsgKind.QROW:
            state, row = p
            p = {"state": state, "argmax": greedy(row), "max": float(np.max(row))}
        return {"time": self.time, "frame": self.frame, "slot": self.slot, "kind": self.kind.value,
                "sender": str(self.sender), "subchannel": self.subchannel, "payload": p}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


@dataclass(frozen=True)
class EstimationMode:
    """``perfect`` reads the true gain; ``probe`` averages ``count`` noisy probe outcomes."""

    kind: str = "perfect"
    count: int = 10
    noise_power: float = 1.0

    def __post_init__(self):
        if self.kind not in ("perfect", "probe"):
            raise ConfigurationError(f"estimation mode must be 'perfect' or 'probe', got {self.kind!r}")
        if self.kind == "probe" and (self.count < 2 or self.noise_power < 0):
            raise ConfigurationError("probe estimation needs count >= 2 and noise_power >= 0")


PERFECT = EstimationMode("perfect")


def estimate_link_gain(broadcaster: NodeId, listener: NodeId, subchannel: int,
                       true_channel: GainMatrix, estimation_mode: EstimationMode = PERFECT,
                       announced_power: float | None = None,
                       rng: np.random.Generator | int | None = None) -> float:
    """Gain of broadcaster -> listener as seen by the listener.

    ``broadcaster == listener`` for an FBS means its own FU listening, i.e. the
    serving link.
    """
    if broadcaster == listener:
        if broadcaster.kind is not Kind.FBS:
            raise ConfigurationError(f"self-gain {broadcaster}->{listener} is never defined")
        true_gain = true_channel.serving_gain(broadcaster, subchannel)
    else:
        true_gain = true_channel.gain(broadcaster, listener, subchannel)
    if estimation_mode.kind == "perfect":
        return true_gain
    if not announced_power or announced_power <= 0:
        raise EstimationError(f"{broadcaster} announced no usable transmit power")
    samples = synthesize_probe_samples(announced_power * true_gain, estimation_mode.noise_power,
                                       estimation_mode.count, rng if rng is not None else 0)
    received, _ = probe_estimate(samples)
    return received / announced_power


@dataclass(frozen=True)
class Joined:
    slot: int


@dataclass(frozen=True)
class Backoff:
    pass


def attempt_join(new_fbs: NodeId, frame: int, free_slots, transmit_probability: float,
                 rng: np.random.Generator) -> int | None:
    """One joiner's aloha draw for a frame: the free position it transmits in, or None."""
    if not free_slots:
        raise AdmissionError(f"{new_fbs} cannot join in frame {frame}: no free acquisition slot")
    if not 0 < transmit_probability <= 1:
        raise ConfigurationError(f"aloha transmit probability must be in (0, 1], got {transmit_probability}")
    if rng.random() >= transmit_probability:
        return None
    free = sorted(free_slots)
    return free[int(rng.integers(len(free)))]


def resolve_contention(attempts: Mapping[NodeId, int | None]) -> dict[NodeId, Joined | Backoff]:
    """A slot chosen by exactly one joiner is won; collisions back off."""
    counts: dict[int, int] = {}
    for slot in attempts.values():
        if slot is not None:
            counts[slot] = counts.get(slot, 0) + 1
    return {n: Joined(s) if s is not None and counts[s] == 1 else Backoff()
            for n, s in attempts.items()}


def aloha_round(joiners, frame: int, free_slots, transmit_probability: float,
                rngs: Mapping[NodeId, np.random.Generator]) -> dict[NodeId, Joined | Backoff]:
    attempts = {n: attempt_join(n, frame, free_slots, transmit_probability, rngs[n])
                for n in sorted(joiners)}
    return resolve_contention(attempts)


@dataclass
class MetricsRecord:
    frame: int
    time_s: float
    c_m: float
    c_n: dict[int, float]
    c_0: float
    actions: dict[int, int]
    state: int
    epsilon: float
    rewards: dict[int, float]
    greedy: dict[int, int] = field(default_factory=dict)


def _stream(seed: int, role: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(role, index)))


class PaqNetwork:
    """Mutable state of one simulated network, advanced one frame at a time.

    Slots are processed through a single (time, sequence)-ordered event queue.
    """

    def __init__(self, channel: GainMatrix, learner: LearnerConfig,
                 algorithm: Algorithm = Algorithm.PDPA_Q,
                 schedule: FrameSchedule = FrameSchedule(),
                 fbs_joins: Mapping[int, int] | None = None,
                 mbs_power: PowerAction | None = None, mu_power: PowerAction | None = None,
                 equal_power_db: float = 15.0,
                 estimation: EstimationMode = PERFECT, aloha_probability: float = 0.5,
                 seed: int = 0, trace: Callable[[MacMessage], None] | None = None,
                 initial_q: Mapping[int, QTable] | None = None):
        k = channel.subchannels
        if schedule.acquisition_substates != k:
            raise ConfigurationError(
                f"schedule has {schedule.acquisition_substates} acquisition sub-states but the channel has {k} subchannels")
        if learner.action_space.subchannels != k:
            raise ConfigurationError("action space and channel disagree on the subchannel count")
        if estimation.kind == "probe" and estimation.count * schedule.sensing_duration > schedule.slot_duration:
            raise ConfigurationError("probe count x sensing duration exceeds one slot")
        self.channel = channel
        self.learner = learner
        self.algorithm = Algorithm(algorithm)
        self.schedule = schedule
        self.estimation = estimation
        self.aloha_probability = aloha_probability
        self.seed = seed
        self.trace = trace
        self.space = learner.action_space
        self.mbs_power = mbs_power or PowerAction.flat(20.0, k)
        self.mu_power = mu_power or PowerAction.flat(20.0, k)
        self.ep_index = self.space.index_of((float(equal_power_db),) * k)
        self.initial_q = dict(initial_q or {})

        joins = dict(fbs_joins if fbs_joins is not None else {1: 0})
        if sorted(joins) != list(range(1, len(joins) + 1)):
            raise ConfigurationError(f"FBS indices must be contiguous from 1, got {sorted(joins)}")
        if len(joins) > schedule.fbs_capacity:
            raise AdmissionError(
                f"{len(joins)} FBSs configured but the schedule has room for {schedule.fbs_capacity}")

        self.clock = 0.0
        self.frame = 0
        self.occupancy: dict[int, NodeId] = {MBS_POSITION: MBS, MU_POSITION: MU}
        self.agents: dict[int, FbsAgent] = {}
        self.pending = {n: f for n, f in joins.items() if f > 0}
        # joined (or pre-placed) FBSs waiting for the next beacon: index -> position
        self.awaiting: dict[int, int] = {}
        positions = iter(schedule.fbs_positions)
        for n in sorted(joins):
            if joins[n] <= 0:
                self.awaiting[n] = next(positions)
        self.admitted_frame: dict[int, int] = {}
        self.current: dict[int, int] = {}
        self.committed: dict[int, int] = {}
        self.net_state = 0
        self.slot_events = 0
        self._aloha_rng = {n: _stream(seed, _ROLE_ALOHA, n) for n in joins}
        self._probe_rng = _stream(seed, _ROLE_PROBE)
        self._queue: list = []
        self._seq = 0

    # -- helpers ---------------------------------------------------------------

    def position_of(self, node: NodeId) -> int | None:
        for p, n in self.occupancy.items():
            if n == node:
                return p
        return None

    def free_positions(self) -> list[int]:
        taken = set(self.occupancy) | set(self.awaiting.values())
        return [p for p in self.schedule.fbs_positions if p not in taken]

    def profile(self) -> dict[NodeId, PowerAction]:
        prof = {MBS: self.mbs_power, MU: self.mu_power}
        for n, a in self.current.items():
            prof[fbs(n)] = self.space.power_action(a)
        return prof

    def beacon(self) -> BeaconPayload:
        s = self.schedule
        occ: dict[int, NodeId | None] = {}
        for sub in range(s.acquisition_substates):
            for p in range(1, s.slots_per_substate + 1):
                occ[s.acquisition_slot(sub, p)] = self.occupancy.get(p)
        for p in range(1, s.qpa_slots + 1):
            occ[s.qpa_slot(p)] = self.occupancy.get(p)
        return BeaconPayload(s, occ)

    def _emit(self, kind, sender, slot, subchannel=None, payload=None) -> MacMessage:
        msg = MacMessage(kind, sender, self.clock, self.frame, slot, subchannel, payload)
        self._messages.append(msg)
        if self.trace is not None:
            self.trace(msg)
        return msg

    def _push(self, time: float, handler, *args):
        heapq.heappush(self._queue, (time, self._seq, handler, args))
        self._seq += 1

    # -- frame -----------------------------------------------------------------

    def run_frame(self) -> MetricsRecord:
        s = self.schedule
        t0 = self.frame * s.frame_duration
        self._messages: list[MacMessage] = []
        self._csi_links: dict = {}
        self._csi_serving: dict = {}
        self._join_attempts: dict[NodeId, int | None] = {}
        self._shared_rows: dict[int, np.ndarray] = {}
        self._rewards: dict[int, float] = {}
        self._report = None
        self.slot_events = 0
        for slot in range(s.total_slots):
            self._push(t0 + slot * s.slot_duration, self._on_slot, slot)
        self._push(t0 + s.total_slots * s.slot_duration, self._end_of_qpa)
        record = None
        while self._queue:
            time, _, handler, args = heapq.heappop(self._queue)
            self.clock = time
            record = handler(*args)
        self.frame += 1
        return record

    def _on_slot(self, slot: int):
        self.slot_events += 1
        state, sub, pos = self.schedule.describe(slot)
        if state == "sync":
            if pos == 1:
                self._sync(slot)
        elif state == "acquisition":
            self._acquisition(slot, sub, pos)
        else:
            self._qpa(slot, pos)

    def _sync(self, slot: int):
        # slots won last frame (and pre-placed FBSs) take effect with this beacon
        newcomers = sorted(self.awaiting)
        for n in newcomers:
            self.occupancy[self.awaiting.pop(n)] = fbs(n)
            agent = FbsAgent(n, self.learner, _stream(self.seed, _ROLE_EXPLORE, n))
            if n in self.initial_q:
                agent.table = self.initial_q[n]
            agent.state = self.net_state
            self.agents[n] = agent
            self.admitted_frame[n] = self.frame
            self.pending.pop(n, None)
        if newcomers:
            self._initial_actions(newcomers)
        # causality: the choice made in the previous QPA applies from now on
        self.current = dict(self.committed)
        for n, agent in self.agents.items():
            agent.action = self.current[n]
        self._emit(MsgKind.BEACON, MBS, slot, payload=self.beacon())

        joiners = sorted(fbs(n) for n, f in self.pending.items()
                         if f <= self.frame and n not in self.awaiting)
        if joiners:
            free = self.free_positions()
            self._join_attempts = {
                j: attempt_join(j, self.frame, free, self.aloha_probability, self._aloha_rng[j.index])
                for j in joiners}

    def _initial_actions(self, newcomers):
        if self.algorithm is Algorithm.EQUAL_POWER:
            for n in newcomers:
                self.committed[n] = self.ep_index
        elif self.algorithm is Algorithm.CDPA_Q and self.committed:
            shared = next(iter(self.committed.values()))
            for n in newcomers:
                self.committed[n] = shared
        elif self.algorithm is Algorithm.CDPA_Q:
            first = self.agents[newcomers[0]].choose(self.net_state)
            for n in newcomers:
                self.committed[n] = first
        else:
            for n in newcomers:
                self.committed[n] = self.agents[n].choose(self.net_state)

    def _acquisition(self, slot: int, sub: int, pos: int):
        occupant = self.occupancy.get(pos)
        contenders = [j for j, p in self._join_attempts.items() if p == pos] if sub == 0 else []
        if occupant is not None:
            if contenders:
                raise ProtocolError(f"unadmitted {contenders[0]} transmitted in slot {slot} owned by {occupant}")
            self._broadcast_power(slot, sub, occupant)
        elif contenders:
            for j in contenders:
                self._emit(MsgKind.JOIN, j, slot, sub, {"position": pos})
            outcome = resolve_contention({j: pos for j in contenders})
            for j, res in outcome.items():
                if isinstance(res, Joined):
                    self.awaiting[j.index] = res.slot
                    log.debug("frame %d: %s won position %d", self.frame, j, res.slot)

    def _broadcast_power(self, slot: int, sub: int, sender: NodeId):
        action = self.profile()[sender]
        level_db = action.levels_db[sub]
        power = action.linear[sub]
        self._emit(MsgKind.ACQUISITION, sender, slot, sub, {"power_db": level_db})
        listeners = [MU] + [fbs(n) for n in sorted(self.agents)]
        for rx in listeners:
            if rx == sender:
                continue
            self._csi_links[(sender, rx, sub)] = estimate_link_gain(
                sender, rx, sub, self.channel, self.estimation, power, self._probe_rng)
        if sender.kind is Kind.FBS:
            self._csi_serving[(sender.index, sub)] = estimate_link_gain(
                sender, sender, sub, self.channel, self.estimation, power, self._probe_rng)

    def _qpa(self, slot: int, pos: int):
        node = self.occupancy.get(pos)
        if node is None:
            return
        if self._report is None:
            # CSI freshness: only this frame's acquisition estimates are used
            est = self.channel.with_links(self._csi_links, self._csi_serving)
            self._report = compute_capacities(self.profile(), est)
        rep = self._report
        if node == MBS:
            self._emit(MsgKind.CAPACITY, MBS, slot, payload={"capacity": rep.c_m})
            return
        if node == MU:
            return
        n = node.index
        c_n = rep.c_n[n]
        agent = self.agents[n]
        if self.algorithm is Algorithm.EQUAL_POWER:
            self._rewards[n] = compute_reward(rep.c_m, self.learner.target_capacity_b0, c_n)
        else:
            self._rewards[n], agent.state = agent.learn(rep.c_m, c_n)
        self._emit(MsgKind.CAPACITY, node, slot, payload={"capacity": c_n})
        if self.algorithm is Algorithm.CDPA_Q:
            row = agent.table.row(agent.state).copy()
            self._shared_rows[n] = row
            self._emit(MsgKind.QROW, node, slot, payload=(agent.state, row))

    def _end_of_qpa(self) -> MetricsRecord:
        rep = self._report
        if rep is None:
            raise ProtocolError("QPA ended without capacity reports")
        self.net_state = observe_state(rep.c_m, self.learner.target_capacity_b0)
        greedy_actions: dict[int, int] = {}
        agents = [self.agents[n] for n in sorted(self.agents)]
        epsilon = max((a.epsilon for a in agents), default=0.0)
        if self.algorithm is Algorithm.EQUAL_POWER:
            epsilon = 0.0
            for a in agents:
                self.committed[a.index] = greedy_actions[a.index] = self.ep_index
        elif self.algorithm is Algorithm.PDPA_Q:
            for a in agents:
                self.committed[a.index] = a.choose(self.net_state)
                greedy_actions[a.index] = greedy(a.table.row(self.net_state))
        elif agents:
            missing = [a.index for a in agents if a.index not in self._shared_rows]
            if missing:
                raise ProtocolError(f"CDPA-Q barrier: no Q-row from FBS {missing}")
            rows = [self._shared_rows[a.index] for a in agents]
            best = select_action_cooperative(rows)
            coordinator = agents[0]
            if coordinator.rng.random() < epsilon:
                chosen = int(coordinator.rng.integers(len(self.space)))
            else:
                chosen = best
            for a in agents:
                self.committed[a.index] = chosen
                greedy_actions[a.index] = best
        if self.algorithm is not Algorithm.EQUAL_POWER:
            for a in agents:
                a.decay()
        return MetricsRecord(
            frame=self.frame, time_s=self.clock, c_m=rep.c_m, c_n=dict(rep.c_n), c_0=rep.c_0,
            actions=dict(self.current), state=self.net_state, epsilon=epsilon,
            rewards=dict(self._rewards), greedy=greedy_actions)

    @property
    def messages(self) -> list[MacMessage]:
        """Messages of the most recent frame."""
        return list(getattr(self, "_messages", []))
