"""Disruption taxonomy, reaction repairs, and update-frequency strategies.

Disruptions D1-D5 come from the environment (arrival, breakdown,
under-run, over-run, cancellation); D6/D7 are derived conditions
(expected under-/over-time of a room) detected after reactions.
Reactions range from R0 (bookkeeping only) through targeted repairs
(R1 append, R1a shift, R1b room+surgeon rebuild) to R2 (full rebuild of
all not-yet-started work).  Placements whose anaesthesia has begun are
never modified.

All repairs mutate the given schedule in place and return it; the
reactive engine owns its schedule exclusively during an update.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .domain import (
    EPS,
    Instance,
    Patient,
    PatientClass,
    Placement,
    Schedule,
    UnplaceablePatientsError,
    append_lower_bound,
    class_lower_bound,
    placement_for,
)
from .heuristics import SchedulingState, best_combo, open_schedule, select_add_elective

DISRUPTION_KINDS = ("D1", "D2", "D3", "D4", "D5", "D6", "D7")
ENVIRONMENT_KINDS = ("D1", "D2", "D3", "D4", "D5")
REACTION_ORDER = ("R0", "R1", "R1a", "R1b", "R2")

# Do-nothing is impossible for breakdowns and over-runs: the schedule is
# no longer executable as written.
LEGAL_REACTIONS: dict[str, tuple[str, ...]] = {
    "D1": ("R0", "R1", "R2"),
    "D2": ("R1", "R2"),
    "D3": ("R0", "R1a", "R1b", "R2"),
    "D4": ("R1a", "R1b", "R2"),
    "D5": ("R0", "R1", "R2"),
    "D6": ("R0", "R1", "R2"),
    "D7": ("R0", "R1a", "R1b", "R2"),
}

STRATEGY_NAMES = ("UP1", "UP2", "UP3", "UP4", "UC", "UA")


class PolicyError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Disruption:
    kind: str
    at: float
    patient: Optional[Patient] = None
    room: Optional[int] = None
    actual: Optional[float] = None    # realized duration (D3/D4)
    expected: Optional[float] = None  # expected duration (D3/D4)

    @property
    def deviation(self) -> float:
        """Signed duration deviation: negative under-run, positive over-run."""
        if self.actual is None or self.expected is None:
            return 0.0
        return self.actual - self.expected


@dataclass(frozen=True, slots=True)
class UpdateStrategy:
    """Update frequency: periodic (UP1-UP4), continuous (UC), adaptive (UA)."""

    name: str
    period: Optional[float] = None
    in_hours_only: bool = False

    @classmethod
    def named(cls, name: str) -> "UpdateStrategy":
        table = {
            "UP1": cls("UP1", 0.25, False),
            "UP2": cls("UP2", 0.5, False),
            "UP3": cls("UP3", 0.25, True),
            "UP4": cls("UP4", 0.5, True),
            "UC": cls("UC"),
            "UA": cls("UA"),
        }
        if name not in table:
            raise ValueError(f"unknown update strategy {name!r}")
        return table[name]

    def is_tick(self, now: float, open_hours: float) -> bool:
        if self.period is None:
            return False
        k = round(now / self.period)
        if abs(now - k * self.period) > 1e-9:
            return False
        if self.in_hours_only and not (-EPS <= now <= open_hours + EPS):
            return False
        return True


def should_update(strategy: UpdateStrategy, pending: list[Disruption], now: float,
                  open_hours: float = 10.0) -> bool:
    """Decide whether the pending environment disruptions trigger an update.

    UC fires on anything pending.  Periodic strategies fire on their grid
    (UP3/UP4 only inside opening hours) and immediately on any breakdown
    or over-run regardless of time of day.  UA fires on three or more
    waiting non-electives, any breakdown, an under-run beyond half an
    hour, any over-run, or any cancellation.
    """
    if strategy.name == "UC":
        return bool(pending)
    has_d2 = any(d.kind == "D2" for d in pending)
    has_d4 = any(d.kind == "D4" for d in pending)
    if strategy.name == "UA":
        n_waiting = sum(1 for d in pending if d.kind == "D1")
        big_under = any(d.kind == "D3" and -d.deviation > 0.5 for d in pending)
        has_d5 = any(d.kind == "D5" for d in pending)
        return n_waiting >= 3 or has_d2 or big_under or has_d4 or has_d5
    # Periodic.
    if has_d2 or has_d4:
        return True
    return strategy.is_tick(now, open_hours)


# ---- reaction policy --------------------------------------------------------

class ReactionPolicy:
    """Per (strategy, disruption) probability vectors over legal reactions.

    Table-shaped: rows are disruption kinds, columns are strategies,
    cells map reaction ids to probabilities summing to one.
    """

    def __init__(self, table: dict[str, dict[str, dict[str, float]]]):
        self.table = {}
        for kind, row in table.items():
            if kind not in LEGAL_REACTIONS:
                raise PolicyError(f"unknown disruption kind {kind!r}")
            self.table[kind] = {}
            for strat, cell in row.items():
                if strat not in STRATEGY_NAMES:
                    raise PolicyError(f"unknown strategy {strat!r}")
                self.table[kind][strat] = self._normalise(kind, cell)

    @staticmethod
    def _normalise(kind: str, cell: dict[str, float]) -> dict[str, float]:
        legal = LEGAL_REACTIONS[kind]
        for reaction, p in cell.items():
            if reaction not in legal:
                raise PolicyError(f"reaction {reaction} illegal for {kind}")
            if p < 0:
                raise PolicyError(f"negative probability for {kind}/{reaction}")
        total = sum(cell.values())
        if total <= 0:
            raise PolicyError(f"empty probability vector for {kind}")
        return {r: cell.get(r, 0.0) / total for r in legal}

    def vector(self, strategy_name: str, kind: str) -> dict[str, float]:
        try:
            return self.table[kind][strategy_name]
        except KeyError:
            raise PolicyError(f"no reaction vector for ({strategy_name}, {kind})") from None

    def covers(self, strategy_name: str) -> list[str]:
        """Disruption kinds missing a vector for this strategy."""
        return [k for k in DISRUPTION_KINDS
                if k not in self.table or strategy_name not in self.table[k]]

    def with_vector(self, strategy_name: str, kind: str,
                    cell: dict[str, float]) -> "ReactionPolicy":
        table = {k: {s: dict(c) for s, c in row.items()} for k, row in self.table.items()}
        table.setdefault(kind, {})[strategy_name] = cell
        return ReactionPolicy(table)

    def to_dict(self) -> dict:
        return {
            "schema": "reaction-policy-1",
            "table": {
                kind: {strat: {r: p for r, p in sorted(cell.items()) if p > 0}
                       for strat, cell in sorted(row.items())}
                for kind, row in sorted(self.table.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict, fill_missing: bool = True) -> "ReactionPolicy":
        if data.get("schema") != "reaction-policy-1":
            raise PolicyError(f"unsupported policy schema: {data.get('schema')!r}")
        table = {k: {s: dict(c) for s, c in row.items()}
                 for k, row in data["table"].items()}
        if fill_missing:
            prior = _prior_table()
            for kind in DISRUPTION_KINDS:
                row = table.setdefault(kind, {})
                for strat in STRATEGY_NAMES:
                    row.setdefault(strat, dict(prior[kind]))
        return cls(table)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ReactionPolicy":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _prior_table() -> dict[str, dict[str, float]]:
    """Do-nothing-heavy prior: R0 where legal, else uniform over repairs."""
    out = {}
    for kind, legal in LEGAL_REACTIONS.items():
        if "R0" in legal:
            out[kind] = {"R0": 1.0}
        else:
            out[kind] = {r: 1.0 / len(legal) for r in legal}
    return out


def prior_policy() -> ReactionPolicy:
    prior = _prior_table()
    return ReactionPolicy(
        {kind: {strat: dict(prior[kind]) for strat in STRATEGY_NAMES}
         for kind in DISRUPTION_KINDS})


# Tuned reaction probabilities shipped as the default policy, one vector
# per (disruption, strategy) cell.  Rows that sum to 0.99 in the source
# table are renormalised on construction.
_TUNED_TABLE: dict[str, dict[str, dict[str, float]]] = {
    "D1": {
        "UA": {"R0": 1.0}, "UC": {"R1": 1.0}, "UP1": {"R0": 1.0},
        "UP2": {"R0": 1.0}, "UP3": {"R0": 1.0}, "UP4": {"R0": 1.0},
    },
    "D2": {
        "UA": {"R2": 1.0}, "UC": {"R2": 1.0}, "UP1": {"R1": 1.0},
        "UP2": {"R1": 1.0}, "UP3": {"R2": 1.0}, "UP4": {"R1": 0.5, "R2": 0.5},
    },
    "D3": {
        "UA": {"R2": 1.0}, "UC": {"R0": 0.5, "R2": 0.5}, "UP1": {"R1a": 1.0},
        "UP2": {"R2": 1.0}, "UP3": {"R0": 0.5, "R1a": 0.5}, "UP4": {"R1a": 1.0},
    },
    "D4": {
        "UA": {"R1a": 0.33, "R1b": 0.33, "R2": 0.33},
        "UC": {"R1a": 0.5, "R1b": 0.25, "R2": 0.25},
        "UP1": {"R1a": 1.0},
        "UP2": {"R1a": 0.33, "R1b": 0.33, "R2": 0.33},
        "UP3": {"R1a": 1.0}, "UP4": {"R1a": 1.0},
    },
    "D5": {
        "UA": {"R0": 0.5, "R1": 0.5}, "UC": {"R0": 1.0}, "UP1": {"R1": 1.0},
        "UP2": {"R1": 1.0}, "UP3": {"R1": 1.0}, "UP4": {"R1": 1.0},
    },
    "D6": {
        "UA": {"R1": 1.0}, "UC": {"R0": 0.5, "R1": 0.5},
        "UP1": {"R0": 0.25, "R1": 0.5, "R2": 0.25},
        "UP2": {"R1": 0.5, "R2": 0.5}, "UP3": {"R1": 0.5, "R2": 0.5},
        "UP4": {"R0": 0.5, "R1": 0.5},
    },
    "D7": {
        "UA": {"R1b": 1.0}, "UC": {"R1b": 1.0}, "UP1": {"R0": 1.0},
        "UP2": {"R1a": 1.0}, "UP3": {"R2": 1.0}, "UP4": {"R0": 1.0},
    },
}


def default_policy() -> ReactionPolicy:
    return ReactionPolicy(_TUNED_TABLE)


def sample_reaction(policy: ReactionPolicy, strategy: UpdateStrategy, kind: str,
                    rng) -> str:
    """Draw a reaction id from the policy's (strategy, kind) vector."""
    vector = policy.vector(strategy.name, kind)
    u = rng.random()
    acc = 0.0
    last = None
    for r in REACTION_ORDER:
        p = vector.get(r, 0.0)
        if p <= 0:
            continue
        acc += p
        last = r
        if u < acc:
            return r
    return last  # guard against rounding at u ~ 1


# ---- repairs ----------------------------------------------------------------

def _movable(schedule: Schedule, pid: int, now: float) -> bool:
    return not schedule.started(pid, now)


def _unstarted_in_room(schedule: Schedule, room_id: int, now: float) -> list[int]:
    return [pl.patient for pl in schedule.room_placements(room_id)
            if _movable(schedule, pl.patient, now)]


def _unstarted_for_surgeon(schedule: Schedule, surgeon_id: int, now: float) -> list[int]:
    return [pl.patient for pl in schedule.surgeon_placements(surgeon_id)
            if _movable(schedule, pl.patient, now)]


def _all_unstarted(schedule: Schedule, now: float) -> list[int]:
    return [pid for pid in schedule.placements if _movable(schedule, pid, now)]


def _surgeon_windows(schedule: Schedule, surgeon_id: int, exclude_room: int,
                     patient: Patient) -> list[tuple[float, float]]:
    """Forbidden start intervals for `patient` induced by the surgeon's
    placements outside `exclude_room` (kept fixed during a shift)."""
    windows = []
    dur = patient.duration
    for pl in schedule.placements.values():
        if pl.surgeon != surgeon_id or pl.room == exclude_room:
            continue
        if pl.patient == patient.id:
            continue
        lo = pl.start - pl.setup - patient.cleanup - dur
        hi = pl.end + pl.cleanup + patient.setup
        windows.append((lo, hi))
    windows.sort()
    return windows


def _resolve_forward(z: float, windows: list[tuple[float, float]]) -> float:
    moved = True
    while moved:
        moved = False
        for lo, hi in windows:
            if lo + EPS < z < hi - EPS:
                z = hi
                moved = True
    return z


def _locked_room_cursor(schedule: Schedule, instance: Instance, room_id: int,
                        now: float) -> float:
    cursor = instance.room(room_id).release
    for pl in schedule.room_placements(room_id):
        if not _movable(schedule, pl.patient, now):
            cursor = max(cursor, pl.occupied_until)
    return cursor


def _shift_room_earlier(schedule: Schedule, room_id: int, instance: Instance,
                        now: float) -> None:
    """Re-pack the room's not-yet-started placements as early as surgeon
    availability across other rooms permits, preserving order."""
    chain = [schedule.placements[pid] for pid in _unstarted_in_room(schedule, room_id, now)]
    cursor = _locked_room_cursor(schedule, instance, room_id, now)
    hz = instance.horizon
    for pl in chain:
        p = instance.patient(pl.patient)
        lb = max(cursor + p.setup,
                 instance.surgeon(pl.surgeon).release,
                 class_lower_bound(p, hz),
                 now)
        z = _resolve_forward(lb, _surgeon_windows(schedule, pl.surgeon, room_id, p))
        if z > pl.start + EPS:          # cannot improve: keep the old slot
            z = pl.start
        if z < pl.start - EPS:
            new_pl = replace(pl, start=z, end=z + (pl.end - pl.start))
            schedule.place(new_pl)
            pl = new_pl
        cursor = pl.occupied_until


def _shift_room_later(schedule: Schedule, room_id: int, delta: float,
                      instance: Instance, now: float) -> list[int]:
    """Push the room's not-yet-started placements later by `delta`,
    resolving surgeon conflicts forward.  Add-on electives pushed past
    the opening window are dropped; their ids are returned."""
    chain = [schedule.placements[pid] for pid in _unstarted_in_room(schedule, room_id, now)]
    cursor = _locked_room_cursor(schedule, instance, room_id, now)
    lam = instance.horizon.open_hours
    dropped = []
    for pl in chain:
        p = instance.patient(pl.patient)
        base = max(pl.start + delta, cursor + p.setup, now)
        z = _resolve_forward(base, _surgeon_windows(schedule, pl.surgeon, room_id, p))
        if p.kind is PatientClass.UNSCHEDULED_ELECTIVE and z + p.duration > lam + EPS:
            schedule.remove(pl.patient)
            dropped.append(pl.patient)
            continue
        if abs(z - pl.start) > EPS:
            pl = replace(pl, start=z, end=z + (pl.end - pl.start))
            schedule.place(pl)
        cursor = pl.occupied_until
    return dropped


def enforce_consistency(schedule: Schedule, instance: Instance, now: float) -> list[int]:
    """Minimal forward repair after realizations: every not-yet-started
    placement must sit after the realized occupancy of its room and
    surgeon.  Needed when an over-run blocks a surgeon's next surgery in
    a different room, which no single-room reaction touches."""
    dropped: list[int] = []
    for _ in range(10):
        changed = False
        for room in sorted(instance.rooms, key=lambda r: r.id):
            chain = [schedule.placements[pid]
                     for pid in _unstarted_in_room(schedule, room.id, now)]
            cursor = _locked_room_cursor(schedule, instance, room.id, now)
            lam = instance.horizon.open_hours
            for pl in chain:
                p = instance.patient(pl.patient)
                base = max(pl.start, cursor + p.setup, now)
                z = _resolve_forward(base, _surgeon_windows(schedule, pl.surgeon, room.id, p))
                if p.kind is PatientClass.UNSCHEDULED_ELECTIVE and z + p.duration > lam + EPS:
                    schedule.remove(pl.patient)
                    dropped.append(pl.patient)
                    changed = True
                    continue
                if z > pl.start + EPS:
                    pl = replace(pl, start=z, end=z + (pl.end - pl.start))
                    schedule.place(pl)
                    changed = True
                cursor = pl.occupied_until
        if not changed:
            return dropped
    raise RuntimeError("consistency repair did not converge")


def _append_patient(schedule: Schedule, patient: Patient, instance: Instance,
                    now: float) -> None:
    state = SchedulingState.from_schedule(schedule, now)
    combo = best_combo(patient, state, instance)
    if combo is None:
        raise UnplaceablePatientsError([patient.id])
    state.place(patient, combo.room, combo.surgeon, combo.start)


def _rebuild(schedule: Schedule, instance: Instance, removed_pids: Iterable[int],
             now: float) -> list[int]:
    """Lift the given placements and re-place them open-style.

    Order mirrors the block constructor's priority structure: scheduled
    electives by due date, then non-electives by arrival, then add-on
    electives by due date.  Mandatory patients present in the instance
    but missing from the schedule are rebuilt too.  Add-ons that no
    longer fit inside opening hours are dropped; their ids are returned.
    """
    removed = set(removed_pids)
    for pid in removed:
        schedule.remove(pid)
    todo = [instance.patient(pid) for pid in removed]
    for p in instance.patients:
        if p.kind in (PatientClass.SCHEDULED_ELECTIVE, PatientClass.NON_ELECTIVE):
            if not schedule.included(p.id) and p.id not in removed:
                todo.append(p)

    non_electives = sorted((p for p in todo if p.kind is PatientClass.NON_ELECTIVE),
                           key=lambda p: (p.arrival, p.id))
    scheduled = sorted((p for p in todo if p.kind is PatientClass.SCHEDULED_ELECTIVE),
                       key=lambda p: (p.due_date, p.id))
    addons = sorted((p for p in todo if p.kind is PatientClass.UNSCHEDULED_ELECTIVE),
                    key=lambda p: (p.due_date, p.id))

    state = SchedulingState.from_schedule(schedule, now)
    open_schedule(scheduled + non_electives, state, instance)

    lam = instance.horizon.open_hours
    dropped = []
    for p in addons:
        combo = best_combo(p, state, instance)
        # Already-notified add-ons keep their original notice anchor; only
        # the static lead-time bound applies on re-placement.
        if combo is None or combo.start + p.duration > lam + EPS:
            dropped.append(p.id)
            continue
        state.place(p, combo.room, combo.surgeon, combo.start)
    return dropped


def _room_of_disruption(schedule: Schedule, disruption: Disruption) -> Optional[int]:
    if disruption.room is not None:
        return disruption.room
    if disruption.patient is not None:
        pl = schedule.placements.get(disruption.patient.id)
        if pl is not None:
            return pl.room
    return None


def react(schedule: Schedule, disruption: Disruption, reaction: str,
          instance: Instance, now: float,
          candidates: Iterable[Patient] = ()) -> Schedule:
    """Apply one reaction to one disruption, in place.

    Raises PolicyError for illegal (disruption, reaction) pairs and
    UnplaceablePatientsError when even a full rebuild cannot place a
    mandatory patient.  `candidates` is the add-on waiting list, used
    only by D6R1.
    """
    kind = disruption.kind
    if reaction not in LEGAL_REACTIONS[kind]:
        raise PolicyError(f"reaction {reaction} illegal for {kind}")
    if reaction == "R0":
        return schedule

    def full_rebuild():
        _rebuild(schedule, instance, _all_unstarted(schedule, now), now)

    try:
        if reaction == "R2":
            full_rebuild()
            return schedule

        if kind == "D1":
            # R1: append the arrival to the earliest suitable combination.
            _append_patient(schedule, disruption.patient, instance, now)

        elif kind == "D2":
            # R1: re-place everything stranded in the broken room.
            _rebuild(schedule, instance,
                     _unstarted_in_room(schedule, disruption.room, now), now)

        elif kind == "D3" and reaction == "R1a":
            rid = _room_of_disruption(schedule, disruption)
            if rid is not None:
                _shift_room_earlier(schedule, rid, instance, now)

        elif kind == "D5":
            # R1: lift the cancelled placement, then close the gap.
            rid = _room_of_disruption(schedule, disruption)
            if disruption.patient is not None:
                pl = schedule.placements.get(disruption.patient.id)
                if pl is not None and _movable(schedule, pl.patient, now):
                    rid = pl.room
                    schedule.remove(pl.patient)
            if rid is not None:
                _shift_room_earlier(schedule, rid, instance, now)

        elif kind in ("D3", "D4") and reaction == "R1b":
            rid = _room_of_disruption(schedule, disruption)
            pids = set(_unstarted_in_room(schedule, rid, now)) if rid is not None else set()
            pl = schedule.placements.get(disruption.patient.id) if disruption.patient else None
            if pl is not None:
                pids.update(_unstarted_for_surgeon(schedule, pl.surgeon, now))
            _rebuild(schedule, instance, pids, now)

        elif kind == "D4" and reaction == "R1a":
            rid = _room_of_disruption(schedule, disruption)
            if rid is not None:
                _shift_room_later(schedule, rid, max(disruption.deviation, 0.0),
                                  instance, now)

        elif kind == "D6":
            choice = select_add_elective(
                candidates, SchedulingState.from_schedule(schedule, now),
                instance, now, rooms=[disruption.room])
            if choice is not None:
                if not instance.has_patient(choice.patient.id):
                    instance.add_patient(choice.patient)
                schedule.place(placement_for(choice.patient, choice.room,
                                             choice.surgeon, choice.start))

        elif kind == "D7":
            # R1a is treated as the room+surgeon rebuild: appending or
            # shifting cannot relieve expected overtime.
            rid = disruption.room
            pids = set(_unstarted_in_room(schedule, rid, now))
            for pl in schedule.room_placements(rid):
                if _movable(schedule, pl.patient, now):
                    pids.update(_unstarted_for_surgeon(schedule, pl.surgeon, now))
            _rebuild(schedule, instance, pids, now)

        else:
            raise PolicyError(f"unsupported pair ({kind}, {reaction})")

    except UnplaceablePatientsError:
        if reaction == "R2":
            raise
        full_rebuild()
    return schedule


def detect_derived(schedule: Schedule, instance: Instance, now: float,
                   candidates: Iterable[Patient] = ()) -> list[Disruption]:
    """Derived conditions after a reaction pass.

    D7: a room's last cleanup end exceeds the opening window.
    D6: a working room's idle tail before closing admits the smallest
    eligible add-on footprint.

    Both are projections about the day still ahead; once the opening
    window has passed nothing is "expected" any more, so neither fires.
    """
    lam = instance.horizon.open_hours
    if now > lam + EPS:
        return []
    min_footprint = None
    for p in candidates:
        if p.kind is not PatientClass.UNSCHEDULED_ELECTIVE:
            continue
        if now + p.notice + p.duration > lam + EPS:
            continue
        fp = p.footprint
        if min_footprint is None or fp < min_footprint:
            min_footprint = fp

    out = []
    for room in sorted(instance.working_rooms(), key=lambda r: r.id):
        occupied_until = room.release
        has_any = False
        for pl in schedule.placements.values():
            if pl.room == room.id:
                has_any = True
                if pl.occupied_until > occupied_until:
                    occupied_until = pl.occupied_until
        if has_any and occupied_until > lam + EPS:
            out.append(Disruption("D7", at=now, room=room.id))
        elif min_footprint is not None:
            idle_from = max(occupied_until, now)
            if lam - idle_from >= min_footprint - EPS:
                out.append(Disruption("D6", at=now, room=room.id))
    return out
