"""Exhaustive benchmark for desk-scale instances.

Enumerates every inclusion subset (mandatory patients always in), every
room/surgeon assignment, and every append order, packing start times via
the append lower bound.  The search is exact over that discrete space; a
memo on (remaining patients, resource cursors) collapses interleavings
that reach identical states.  Guard rails keep it to toy sizes.
"""

from __future__ import annotations

from itertools import combinations

from .domain import (
    Instance,
    PatientClass,
    Schedule,
    UnplaceablePatientsError,
    append_lower_bound,
    check_feasibility,
    placement_for,
)
from .objective import contribution

MAX_PATIENTS = 6
MAX_ROOMS = 2
MAX_SURGEONS = 3


class OracleSizeError(ValueError):
    pass


def _guard(instance: Instance) -> None:
    if (len(instance.patients) > MAX_PATIENTS
            or len(instance.rooms) > MAX_ROOMS
            or len(instance.surgeons) > MAX_SURGEONS):
        raise OracleSizeError(
            f"instance exceeds oracle guard rail "
            f"({MAX_PATIENTS} patients / {MAX_ROOMS} rooms / {MAX_SURGEONS} surgeons)")


def _combos(instance: Instance) -> dict[int, list[tuple[int, int]]]:
    out = {}
    for p in instance.patients:
        pairs = []
        for r in instance.suitable_rooms(p):
            for h in sorted(p.eligible_surgeons):
                pairs.append((r.id, h))
        pairs.sort()
        out[p.id] = pairs
    return out


def exhaustive_oracle(instance: Instance) -> tuple[Schedule, float]:
    """Best utilisation over all packed append schedules.

    Returns the maximising schedule (feasibility-checked) and its
    utilisation.  Raises UnplaceablePatientsError when a mandatory
    patient has no suitable room/surgeon pair.
    """
    _guard(instance)
    hz = instance.horizon
    now = hz.start
    combos = _combos(instance)
    mandatory = [p for p in instance.patients
                 if p.kind in (PatientClass.SCHEDULED_ELECTIVE, PatientClass.NON_ELECTIVE)]
    optional = [p for p in instance.patients
                if p.kind is PatientClass.UNSCHEDULED_ELECTIVE]
    stuck = [p.id for p in mandatory if not combos[p.id]]
    if stuck:
        raise UnplaceablePatientsError(stuck)

    by_id = {p.id: p for p in instance.patients}
    room_release = {r.id: r.release for r in instance.rooms}
    surgeon_release = {s.id: s.release for s in instance.surgeons}
    lam = hz.open_hours

    best_util = float("-inf")
    best_placements: list | None = None

    for k in range(len(optional) + 1):
        for extra in combinations(optional, k):
            if any(not combos[p.id] for p in extra):
                continue
            included = sorted([p.id for p in mandatory] + [p.id for p in extra])
            memo: dict = {}

            def dfs(remaining: frozenset, room_free: tuple, surg_free: tuple):
                """Best achievable future utilisation and its placements."""
                if not remaining:
                    return 0.0, []
                key = (remaining, room_free, surg_free)
                hit = memo.get(key)
                if hit is not None:
                    return hit
                best = float("-inf")
                best_tail = None
                rf = dict(room_free)
                sf = dict(surg_free)
                for pid in sorted(remaining):
                    p = by_id[pid]
                    for rid, hid in combos[pid]:
                        z = append_lower_bound(
                            p, rf.get(rid), sf.get(hid),
                            room_release[rid], surgeon_release[hid], hz, now)
                        if p.kind is PatientClass.UNSCHEDULED_ELECTIVE and z + p.duration > lam + 1e-9:
                            continue
                        pl = placement_for(p, rid, hid, z)
                        free = round(pl.occupied_until, 9)
                        sub_rf = tuple(sorted({**rf, rid: free}.items()))
                        sub_sf = tuple(sorted({**sf, hid: free}.items()))
                        future, tail = dfs(remaining - {pid}, sub_rf, sub_sf)
                        value = contribution(pl, hz) + future
                        if value > best:
                            best = value
                            best_tail = [pl] + tail
                memo[key] = (best, best_tail)
                return best, best_tail

            util, placements = dfs(frozenset(included), (), ())
            if placements is not None and util > best_util:
                best_util = util
                best_placements = placements

    if best_placements is None:
        raise UnplaceablePatientsError(sorted(p.id for p in mandatory))
    schedule = Schedule()
    for pl in best_placements:
        schedule.place(pl)
    report = check_feasibility(schedule, instance)
    if not report.ok:
        raise AssertionError(f"oracle produced an infeasible schedule: {report}")
    return schedule, best_util


def enumerate_schedules(instance: Instance):
    """Yield every packed (subset, order, assignment) leaf as
    (schedule, utilisation).  Exponential; intended for <= 4 patients."""
    _guard(instance)
    hz = instance.horizon
    now = hz.start
    combos = _combos(instance)
    mandatory = [p.id for p in instance.patients
                 if p.kind in (PatientClass.SCHEDULED_ELECTIVE, PatientClass.NON_ELECTIVE)]
    optional = [p.id for p in instance.patients
                if p.kind is PatientClass.UNSCHEDULED_ELECTIVE]
    by_id = {p.id: p for p in instance.patients}
    room_release = {r.id: r.release for r in instance.rooms}
    surgeon_release = {s.id: s.release for s in instance.surgeons}
    lam = hz.open_hours

    def walk(remaining: list[int], schedule: Schedule, util: float):
        if not remaining:
            yield schedule.copy(), util
            return
        for pid in remaining:
            p = by_id[pid]
            for rid, hid in combos[pid]:
                z = append_lower_bound(
                    p, schedule.room_free_from(rid), schedule.surgeon_free_from(hid),
                    room_release[rid], surgeon_release[hid], hz, now)
                if p.kind is PatientClass.UNSCHEDULED_ELECTIVE and z + p.duration > lam + 1e-9:
                    continue
                pl = placement_for(p, rid, hid, z)
                schedule.place(pl)
                yield from walk([x for x in remaining if x != pid],
                                schedule, util + contribution(pl, hz))
                schedule.remove(pid)

    for k in range(len(optional) + 1):
        for extra in combinations(optional, k):
            yield from walk(mandatory + list(extra), Schedule(), 0.0)
