"""Tabular Q-learning for FBS power allocation.

State is the binary interference flag at the MBS, actions are k-tuples of
power levels, and the reward trades MBS closeness to its target against the
FBS's own capacity. Independent (PDPA-Q) and cooperative (CDPA-Q) action
selection share the same table and update rule.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import PowerAction
from .errors import ConfigurationError, NumericError, ProtocolError

N_STATES = 2


def observe_state(c_m: float, target: float) -> int:
    """1 when the MBS is below its target capacity, else 0."""
    if not math.isfinite(c_m):
        raise NumericError(f"MBS capacity must be finite, got {c_m}")
    return 1 if c_m < target else 0


def compute_reward(c_m: float, target: float, c_n: float) -> float:
    return math.exp(-((c_m - target) ** 2)) - math.exp(-c_n)


class ActionSpace:
    """All k-tuples over the level set, in lexicographic order."""

    def __init__(self, levels_db: Sequence[float], subchannels: int = 2):
        levels = tuple(float(v) for v in levels_db)
        if not levels:
            raise ConfigurationError("power level set is empty")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigurationError(f"power levels must be strictly increasing, got {levels}")
        if subchannels < 1:
            raise ConfigurationError("need at least one subchannel")
        self.levels_db = levels
        self.subchannels = subchannels
        self.actions = list(itertools.product(levels, repeat=subchannels))
        self._index = {a: i for i, a in enumerate(self.actions)}

    def __len__(self) -> int:
        return len(self.actions)

    def __repr__(self):
        return f"ActionSpace(levels_db={self.levels_db}, subchannels={self.subchannels})"

    def tuple_of(self, index: int) -> tuple[float, ...]:
        if not 0 <= index < len(self.actions):
            raise ProtocolError(f"action index {index} outside 0..{len(self.actions) - 1}")
        return self.actions[index]

    def index_of(self, levels: Sequence[float]) -> int:
        try:
            return self._index[tuple(float(v) for v in levels)]
        except KeyError:
            raise ConfigurationError(f"{tuple(levels)} is not an action of {self!r}") from None

    def power_action(self, index: int) -> PowerAction:
        return PowerAction(self.tuple_of(index))


class QTable:
    def __init__(self, n_actions: int, alpha: float = 0.5, gamma: float = 0.9):
        if not 0 < alpha <= 1:
            raise ConfigurationError(f"alpha must be in (0, 1], got {alpha}")
        if not 0 <= gamma < 1:
            raise ConfigurationError(f"gamma must be in [0, 1), got {gamma}")
        self.values = np.zeros((N_STATES, n_actions))
        self.alpha = alpha
        self.gamma = gamma

    @property
    def n_actions(self) -> int:
        return self.values.shape[1]

    def row(self, state: int) -> np.ndarray:
        return self.values[state]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state"] + [f"a{i}" for i in range(self.n_actions)])
        for s in range(N_STATES):
            w.writerow([s] + [repr(float(v)) for v in self.values[s]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, alpha: float = 0.5, gamma: float = 0.9) -> "QTable":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if len(body) != N_STATES:
            raise ConfigurationError(f"Q-table CSV needs {N_STATES} state rows, got {len(body)}")
        table = cls(len(header) - 1, alpha, gamma)
        for r in body:
            s = int(r[0])
            if s not in range(N_STATES) or len(r) != len(header):
                raise ConfigurationError(f"malformed Q-table row for state {r[0]}")
            table.values[s] = [float(v) for v in r[1:]]
        if not np.all(np.isfinite(table.values)):
            raise ConfigurationError("Q-table CSV contains non-finite values")
        return table


def q_update(table: QTable, state: int, action: int, reward: float, next_state: int) -> QTable:
    """One-step Q-learning update in place; bootstraps from ``next_state``'s row."""
    if not 0 <= action < table.n_actions:
        raise ProtocolError(f"action index {action} outside 0..{table.n_actions - 1}")
    q = table.values
    target = reward + table.gamma * float(np.max(q[next_state]))
    q[state, action] = (1.0 - table.alpha) * q[state, action] + table.alpha * target
    return table


def greedy(row: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return int(np.argmax(row))


def select_action_independent(table: QTable, state: int, epsilon: float,
                              rng: np.random.Generator) -> int:
    if not 0 <= epsilon <= 1:
        raise ConfigurationError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(table.n_actions))
    return greedy(table.row(state))


def select_action_cooperative(q_rows: Sequence[np.ndarray]) -> int:
    """Argmax of the element-wise sum of every FBS's current-state row."""
    if not q_rows:
        raise ProtocolError("cooperative selection needs at least one Q-row")
    lengths = {len(r) for r in q_rows}
    if len(lengths) != 1 or 0 in lengths:
        raise ProtocolError(f"Q-rows must share one non-zero length, got {sorted(lengths)}")
    total = np.array(q_rows[0], dtype=float)
    for r in q_rows[1:]:
        total = total + np.asarray(r, dtype=float)
    return greedy(total)


@dataclass(frozen=True)
class Exploration:
    epsilon_initial: float = 1.0
    epsilon_decay: float = 0.99
    epsilon_min: float = 0.01

    def __post_init__(self):
        for name in ("epsilon_initial", "epsilon_min"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")
        if not 0 < self.epsilon_decay <= 1:
            raise ConfigurationError(f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}")

    def next(self, epsilon: float) -> float:
        return max(self.epsilon_min, epsilon * self.epsilon_decay)


@dataclass(frozen=True)
class LearnerConfig:
    target_capacity_b0: float = 11.0
    alpha: float = 0.5
    gamma: float = 0.9
    action_space: ActionSpace = field(default_factory=lambda: ActionSpace((0, 5, 10, 15, 20, 25, 30), 2))
    exploration: Exploration = field(default_factory=Exploration)
    rng_seed: int = 0

    def __post_init__(self):
        if not self.target_capacity_b0 > 0:
            raise ConfigurationError("target capacity must be > 0")


class FbsAgent:
    """Learning state owned by one FBS: its Q-table, epsilon and RNG stream."""

    def __init__(self, index: int, config: LearnerConfig, rng: np.random.Generator):
        self.index = index
        self.config = config
        self.table = QTable(len(config.action_space), config.alpha, config.gamma)
        self.epsilon = config.exploration.epsilon_initial
        self.rng = rng
        self.state: int | None = None
        self.action: int | None = None

    def learn(self, c_m: float, c_n: float) -> tuple[float, int]:
        """Reward and Q-update for the action applied this frame; returns (reward, next_state)."""
        b0 = self.config.target_capacity_b0
        reward = compute_reward(c_m, b0, c_n)
        next_state = observe_state(c_m, b0)
        q_update(self.table, self.state, self.action, reward, next_state)
        return reward, next_state

    def choose(self, state: int) -> int:
        return select_action_independent(self.table, state, self.epsilon, self.rng)

    def decay(self):
        self.epsilon = self.config.exploration.next(self.epsilon)
