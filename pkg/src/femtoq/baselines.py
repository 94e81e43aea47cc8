"""Non-learning comparators: equal power and the exhaustive joint-action oracle."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Sequence, TextIO

from .channel import MBS, MU, GainMatrix, PowerAction, compute_capacities, fbs
from .errors import ConfigurationError
from .learning import ActionSpace


def equal_power_action(level_db: float, space: ActionSpace, fbs_indices: Sequence[int]) -> dict[int, PowerAction]:
    """The same flat level on every subchannel for every FBS."""
    if float(level_db) not in space.levels_db:
        raise ConfigurationError(f"equal-power level {level_db} dB not in {space.levels_db}")
    action = PowerAction.flat(level_db, space.subchannels)
    return {n: action for n in fbs_indices}


@dataclass
class OracleResult:
    best_joint_action: tuple[int, ...]
    best_c0: float
    best_cm: float
    evaluations: int
    feasible: bool
    grid: list[tuple[tuple[int, ...], float, float, bool]] | None = field(default=None, repr=False)


def exhaustive_search(channel: GainMatrix, space: ActionSpace, n_fbs: int, target: float,
                      mbs_power: PowerAction | None = None, mu_power: PowerAction | None = None,
                      slack: float = 0.0, keep_grid: bool = False) -> OracleResult:
    """Maximize c_0 subject to c_m >= target - slack over every joint action.

    When nothing is feasible the result maximizes (c_m, c_0) lexicographically
    and is flagged infeasible. Strict comparisons keep the lowest joint index
    on ties.
    """
    if n_fbs < 1:
        raise ConfigurationError("exhaustive search needs at least one FBS")
    k = channel.subchannels
    base = {MBS: mbs_power or PowerAction.flat(20.0, k), MU: mu_power or PowerAction.flat(20.0, k)}
    actions = [space.power_action(i) for i in range(len(space))]
    best_feasible = None
    best_fallback = None
    grid = [] if keep_grid else None
    evaluations = 0
    for joint in itertools.product(range(len(space)), repeat=n_fbs):
        profile = dict(base)
        for n, a in enumerate(joint, start=1):
            profile[fbs(n)] = actions[a]
        rep = compute_capacities(profile, channel)
        evaluations += 1
        ok = rep.c_m >= target - slack
        if grid is not None:
            grid.append((joint, rep.c_0, rep.c_m, ok))
        if ok:
            if best_feasible is None or rep.c_0 > best_feasible[1]:
                best_feasible = (joint, rep.c_0, rep.c_m)
        elif best_fallback is None or (rep.c_m, rep.c_0) > (best_fallback[2], best_fallback[1]):
            best_fallback = (joint, rep.c_0, rep.c_m)
    if best_feasible is not None:
        return OracleResult(*best_feasible, evaluations, True, grid)
    return OracleResult(*best_fallback, evaluations, False, grid)


def write_grid_csv(result: OracleResult, out: TextIO, space: ActionSpace | None = None):
    if result.grid is None:
        raise ValueError("oracle was run without keep_grid=True")
    n = len(result.best_joint_action)
    w = csv.writer(out, lineterminator="\n")
    header = [f"action_{i}" for i in range(1, n + 1)]
    if space is not None:
        header += [f"levels_db_{i}" for i in range(1, n + 1)]
    w.writerow(header + ["c_0", "c_m", "feasible"])
    for joint, c0, cm, ok in result.grid:
        row = list(joint)
        if space is not None:
            row += [" ".join(f"{v:g}" for v in space.tuple_of(a)) for a in joint]
        w.writerow(row + [repr(c0), repr(cm), int(ok)])
