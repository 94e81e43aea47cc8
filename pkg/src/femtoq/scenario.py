"""Scenario configuration, run orchestration, metrics and sweeps."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Iterable, Literal, Sequence, TextIO

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .baselines import OracleResult, exhaustive_search
from .channel import MBS, MU, GainMatrix, NodeId, PowerAction, fbs, pathloss_matrix
from .errors import ConfigurationError, FemtoError
from .learning import ActionSpace, Exploration, LearnerConfig
from .mac import Algorithm, EstimationMode, FrameSchedule, MetricsRecord, PaqNetwork

SHIPPED = ("one_fbs", "two_fbs", "incremental")
FINAL_WINDOW = 0.2


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScenarioSection(_Section):
    name: str = "scenario"
    algorithm: Algorithm = Algorithm.PDPA_Q
    frames: int = Field(300, ge=0)
    seed: int = Field(1, ge=0, lt=2**64)


class PowerSection(_Section):
    levels_db: tuple[float, ...] = (0, 5, 10, 15, 20, 25, 30)
    mbs_db: float = 20.0
    mu_db: float = 20.0
    equal_power_db: float = 15.0

    @model_validator(mode="after")
    def _levels(self):
        if any(b <= a for a, b in zip(self.levels_db, self.levels_db[1:])) or not self.levels_db:
            raise ValueError("levels_db must be non-empty and strictly increasing")
        for name in ("mbs_db", "mu_db", "equal_power_db"):
            if getattr(self, name) not in self.levels_db:
                raise ValueError(f"{name}={getattr(self, name)} is not in levels_db")
        return self


class LearningSection(_Section):
    target_capacity: float = Field(11.0, gt=0)
    alpha: float = Field(0.5, gt=0, le=1)
    gamma: float = Field(0.9, ge=0, lt=1)
    epsilon_initial: float = Field(1.0, ge=0, le=1)
    epsilon_decay: float = Field(0.99, gt=0, le=1)
    epsilon_min: float = Field(0.01, ge=0, le=1)


class MacSection(_Section):
    sync_slots: int = Field(1, ge=1)
    slots_per_substate: int = Field(4, ge=2)
    qpa_slots: int = Field(4, ge=2)
    slot_duration: float = Field(0.5, gt=0)
    sensing_duration: float = Field(0.010, gt=0)
    aloha_probability: float = Field(0.5, gt=0, le=1)


class EstimationSection(_Section):
    mode: Literal["perfect", "probe"] = "perfect"
    count: int = Field(10, ge=2)
    noise_power: float = Field(1.0, ge=0)


class LinkSpec(_Section):
    tx: str
    rx: str
    gains: tuple[float, ...]


class ServingSpec(_Section):
    fbs: int = Field(ge=1)
    gains: tuple[float, ...]


class PathlossSpec(_Section):
    g0: float = Field(1.0, gt=0)
    d0: float = Field(1.0, gt=0)
    eta: float = Field(3.0, gt=0)
    positions: dict[str, tuple[float, float]]
    fu_distance: dict[str, float]


class ChannelSection(_Section):
    subchannels: int = Field(2, ge=1)
    noise_power: float = Field(1.0, gt=0)
    model: Literal["explicit", "pathloss"] = "explicit"
    links: tuple[LinkSpec, ...] = ()
    serving: tuple[ServingSpec, ...] = ()
    pathloss: PathlossSpec | None = None


class FbsSpec(_Section):
    index: int = Field(ge=1)
    join_frame: int = Field(0, ge=0)


class ScenarioConfig(_Section):
    scenario: ScenarioSection = ScenarioSection()
    power: PowerSection = PowerSection()
    learning: LearningSection = LearningSection()
    mac: MacSection = MacSection()
    estimation: EstimationSection = EstimationSection()
    channel: ChannelSection
    fbs: tuple[FbsSpec, ...] = (FbsSpec(index=1),)

    @model_validator(mode="after")
    def _cross_checks(self):
        problems = []
        idx = sorted(f.index for f in self.fbs)
        if idx != list(range(1, len(idx) + 1)):
            problems.append(f"fbs: indices must be unique and contiguous from 1, got {idx}")
        room = min(self.mac.slots_per_substate, self.mac.qpa_slots) - 2
        if len(idx) > room:
            problems.append(f"fbs: {len(idx)} FBSs but the MAC schedule has room for {room}")
        if self.estimation.mode == "probe" and \
                self.estimation.count * self.mac.sensing_duration > self.mac.slot_duration:
            problems.append("estimation.count: probe outcomes do not fit in one slot")
        if self.mac.sensing_duration > self.mac.slot_duration:
            problems.append("mac.sensing_duration: longer than a slot")
        problems += _channel_problems(self.channel, idx)
        if problems:
            raise ValueError("; ".join(problems))
        return self

    # -- derived objects -------------------------------------------------------

    @property
    def fbs_indices(self) -> list[int]:
        return sorted(f.index for f in self.fbs)

    @property
    def joins(self) -> dict[int, int]:
        return {f.index: f.join_frame for f in self.fbs}

    def action_space(self) -> ActionSpace:
        return ActionSpace(self.power.levels_db, self.channel.subchannels)

    def learner(self) -> LearnerConfig:
        ln = self.learning
        return LearnerConfig(ln.target_capacity, ln.alpha, ln.gamma, self.action_space(),
                             Exploration(ln.epsilon_initial, ln.epsilon_decay, ln.epsilon_min),
                             self.scenario.seed)

    def schedule(self) -> FrameSchedule:
        m = self.mac
        return FrameSchedule(m.sync_slots, self.channel.subchannels, m.slots_per_substate,
                             m.qpa_slots, m.slot_duration, m.sensing_duration)

    def gain_matrix(self) -> GainMatrix:
        return build_channel(self.channel)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        """Copy with scenario-section fields replaced (seed, algorithm, frames, name)."""
        data = self.model_dump(mode="json")
        data["scenario"].update({k: (v.value if isinstance(v, Algorithm) else v)
                                 for k, v in kw.items() if v is not None})
        return parse_config(data)

    def with_joins(self, joins: dict[int, int]) -> "ScenarioConfig":
        data = self.model_dump(mode="json")
        data["fbs"] = [{"index": n, "join_frame": f} for n, f in sorted(joins.items())]
        return parse_config(data)

    def config_hash(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _required_links(fbs_indices: Sequence[int]) -> list[tuple[NodeId, NodeId]]:
    req = [(MBS, MU)]
    for n in fbs_indices:
        req += [(fbs(n), MU), (MBS, fbs(n)), (MU, fbs(n))]
        req += [(fbs(j), fbs(n)) for j in fbs_indices if j != n]
    return req


def _channel_problems(ch: ChannelSection, fbs_indices) -> list[str]:
    problems = []
    if ch.model == "pathloss":
        if ch.pathloss is None:
            return ["channel.pathloss: required when model = 'pathloss'"]
        names = {"mbs", "mu"} | {f"fbs{n}" for n in fbs_indices}
        missing = sorted(names - set(ch.pathloss.positions))
        if missing:
            problems.append(f"channel.pathloss.positions: missing {missing}")
        extra = sorted(set(ch.pathloss.positions) - names)
        if extra:
            problems.append(f"channel.pathloss.positions: unknown nodes {extra}")
        missing = sorted({f"fbs{n}" for n in fbs_indices} - set(ch.pathloss.fu_distance))
        if missing:
            problems.append(f"channel.pathloss.fu_distance: missing {missing}")
        return problems
    try:
        links = {(NodeId.parse(l.tx), NodeId.parse(l.rx)): l.gains for l in ch.links}
    except ConfigurationError as e:
        return [f"channel.links: {e}"]
    serving = {s.fbs: s.gains for s in ch.serving}
    for (tx, rx), g in links.items():
        if tx == rx:
            problems.append(f"channel.links: self-gain {tx}->{rx}")
        if len(g) != ch.subchannels:
            problems.append(f"channel.links: {tx}->{rx} has {len(g)} gains, expected {ch.subchannels}")
    for tx, rx in _required_links(fbs_indices):
        if (tx, rx) not in links:
            problems.append(f"channel.links: missing gain for (tx={tx}, rx={rx})")
    for n in fbs_indices:
        if n not in serving:
            problems.append(f"channel.serving: missing serving gain for fbs{n}")
        elif len(serving[n]) != ch.subchannels:
            problems.append(f"channel.serving: fbs{n} has {len(serving[n])} gains, expected {ch.subchannels}")
    for key, g in list(links.items()) + list(serving.items()):
        if any(not math.isfinite(v) or v < 0 for v in g):
            problems.append(f"channel: gains for {key} must be finite and >= 0")
    return problems


def build_channel(ch: ChannelSection) -> GainMatrix:
    if ch.model == "pathloss":
        pl = ch.pathloss
        positions = {NodeId.parse(k): v for k, v in pl.positions.items()}
        fu = {NodeId.parse(k).index: d for k, d in pl.fu_distance.items()}
        return pathloss_matrix(positions, fu, ch.subchannels, ch.noise_power, pl.g0, pl.d0, pl.eta)
    links = {}
    for l in ch.links:
        tx, rx = NodeId.parse(l.tx), NodeId.parse(l.rx)
        for k, g in enumerate(l.gains):
            links[(tx, rx, k)] = float(g)
    serving = {(s.fbs, k): float(g) for s in ch.serving for k, g in enumerate(s.gains)}
    return GainMatrix(ch.subchannels, ch.noise_power, links, serving)


def _format_validation(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        msg = e["msg"].removeprefix("Value error, ")
        parts.append(f"{loc}: {msg}")
    return "; ".join(parts)


def parse_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid scenario config: {_format_validation(e)}") from None


def load_config(source: str | Path) -> ScenarioConfig:
    """Load a TOML scenario file, or a shipped scenario by name (one_fbs, two_fbs, incremental)."""
    if str(source) in SHIPPED:
        text = resources.files("femtoq.configs").joinpath(f"{source}.toml").read_text()
    else:
        try:
            text = Path(source).read_text()
        except OSError as e:
            raise ConfigurationError(f"cannot read config {source}: {e.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"{source}: {e}") from None
    return parse_config(data)


def build_network(cfg: ScenarioConfig, trace=None, initial_q=None) -> PaqNetwork:
    k = cfg.channel.subchannels
    est = cfg.estimation
    return PaqNetwork(
        channel=cfg.gain_matrix(), learner=cfg.learner(), algorithm=cfg.scenario.algorithm,
        schedule=cfg.schedule(), fbs_joins=cfg.joins,
        mbs_power=PowerAction.flat(cfg.power.mbs_db, k), mu_power=PowerAction.flat(cfg.power.mu_db, k),
        equal_power_db=cfg.power.equal_power_db,
        estimation=EstimationMode(est.mode, est.count, est.noise_power),
        aloha_probability=cfg.mac.aloha_probability, seed=cfg.scenario.seed, trace=trace,
        initial_q=initial_q)


def run_scenario(cfg: ScenarioConfig, trace=None) -> list[MetricsRecord]:
    net = build_network(cfg, trace=trace)
    return [net.run_frame() for _ in range(cfg.scenario.frames)]


def run_oracle(cfg: ScenarioConfig, slack: float = 0.0, keep_grid: bool = False) -> OracleResult:
    k = cfg.channel.subchannels
    return exhaustive_search(cfg.gain_matrix(), cfg.action_space(), len(cfg.fbs),
                             cfg.learning.target_capacity,
                             PowerAction.flat(cfg.power.mbs_db, k), PowerAction.flat(cfg.power.mu_db, k),
                             slack=slack, keep_grid=keep_grid)


# -- metrics -------------------------------------------------------------------

def metrics_header(n_fbs: int) -> list[str]:
    r = range(1, n_fbs + 1)
    return (["frame", "time_s", "c_m", "c_0"] + [f"c_n_{i}" for i in r] + [f"action_{i}" for i in r]
            + ["state", "epsilon"] + [f"reward_{i}" for i in r])


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(records: Iterable[MetricsRecord], n_fbs: int, out: TextIO):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(metrics_header(n_fbs))
    r = range(1, n_fbs + 1)
    for rec in records:
        row = [rec.frame, rec.time_s, rec.c_m, rec.c_0]
        row += [rec.c_n.get(i) for i in r] + [rec.actions.get(i) for i in r]
        row += [rec.state, rec.epsilon] + [rec.rewards.get(i) for i in r]
        w.writerow([_cell(v) for v in row])


def read_metrics_csv(path: str | Path) -> dict[str, list[float | None]]:
    """Columns of a metrics CSV as float lists; blank cells become None."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ConfigurationError(f"{path}: empty metrics file")
    header, body = rows[0], rows[1:]
    cols = {h: [] for h in header}
    for row in body:
        for h, v in zip(header, row):
            cols[h].append(float(v) if v != "" else None)
    return cols


def final_window(records: Sequence[MetricsRecord], fraction: float = FINAL_WINDOW) -> Sequence[MetricsRecord]:
    if not records:
        return records
    n = max(1, int(round(fraction * len(records))))
    return records[-n:]


def mean(values: Iterable[float]) -> float:
    vals = list(values)
    return math.fsum(vals) / len(vals) if vals else math.nan


def convergence_frame(records: Sequence[MetricsRecord], fbs_index: int) -> int | None:
    """First frame from which the FBS's greedy action never changes again."""
    seq = [(r.frame, r.greedy[fbs_index]) for r in records if fbs_index in r.greedy]
    if not seq:
        return None
    frame, last = seq[-1]
    for f, g in reversed(seq):
        if g != last:
            break
        frame = f
    return frame


def summarize(records: Sequence[MetricsRecord], fbs_indices: Sequence[int]) -> dict:
    win = final_window(records)
    conv = {n: convergence_frame(records, n) for n in fbs_indices}
    overall = None if any(v is None for v in conv.values()) or not conv else max(conv.values())
    return {"frames": len(records), "final_c_m": mean(r.c_m for r in win),
            "final_c_0": mean(r.c_0 for r in win), "convergence_frame": overall,
            "convergence": conv}


# -- sweeps --------------------------------------------------------------------

def _sweep_cell(args) -> dict:
    template, seed, algorithm = args
    row = {"seed": seed, "algorithm": Algorithm(algorithm).value}
    try:
        cfg = template.with_overrides(seed=seed, algorithm=algorithm)
        row.update(summarize(run_scenario(cfg), cfg.fbs_indices))
        row["error"] = ""
    except FemtoError as e:
        row.update({"frames": 0, "final_c_m": math.nan, "final_c_0": math.nan,
                    "convergence_frame": None, "convergence": {}, "error": str(e)})
    return row


def run_sweep(template: ScenarioConfig, seeds: Sequence[int], algorithms: Sequence[Algorithm | str],
              workers: int = 1) -> list[dict]:
    """One summary row per (seed, algorithm); rows come back in input order."""
    if not seeds:
        raise ConfigurationError("sweep needs at least one seed")
    cells = [(template, s, Algorithm(a)) for s in seeds for a in algorithms]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, cells))
    return [_sweep_cell(c) for c in cells]


def write_summary_csv(rows: Sequence[dict], n_fbs: int, out: TextIO):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["seed", "algorithm", "frames", "final_c_m", "final_c_0", "convergence_frame"]
               + [f"convergence_{i}" for i in range(1, n_fbs + 1)] + ["error"])
    for r in rows:
        conv = r.get("convergence", {})
        w.writerow([_cell(v) for v in
                    [r["seed"], r["algorithm"], r["frames"], r["final_c_m"], r["final_c_0"],
                     r["convergence_frame"]] + [conv.get(i) for i in range(1, n_fbs + 1)]
                    + [r["error"]]])
