"""Discrete-event realization of a simulated week.

Each day: reveal breakdowns and cancellations, build the initial
schedule with the block policy, then advance through arrivals, surgery
starts/ends, and periodic ticks.  Every surgery end realizes an actual
duration and emits an under-/over-run disruption; pending disruptions
are held until the update strategy fires, at which point a reaction is
sampled per disruption, derived conditions are handled once, and a
consistency repair closes any cross-room knock-on effects.  One update
pass is counted per trigger, including do-nothing periodic ticks.

Days run in day-local hours.  Surgeries may spill past midnight; the
next day inherits the spill-over as room/surgeon release times, and
unplaced non-electives carry over with their arrival shifted back a day
so overnight waits keep accruing.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .domain import Instance, Patient, PatientClass, Schedule, check_feasibility
from .heuristics import block_schedule
from .instancegen import WEEK_DAYS, WeekInstance
from .objective import MetricsSnapshot, contribution, overtime as _overtime_of
from .reactive import (
    Disruption,
    ReactionPolicy,
    UpdateStrategy,
    detect_derived,
    enforce_consistency,
    react,
    sample_reaction,
    should_update,
)

# Event kind priorities for same-instant ties.
_PRIO = {"day_start": 0, "ne_arrival": 1, "surgery_end": 2, "surgery_start": 3,
         "tick": 4}

_DEV_TOL = 1e-12


class SimulationInfeasibleError(RuntimeError):
    def __init__(self, day: int, at: float, report):
        self.day = day
        self.at = at
        self.report = report
        super().__init__(f"infeasible schedule on day {day} at {at:.3f}: {report}")


@dataclass
class SimulationResult:
    weekly: MetricsSnapshot
    days: list[MetricsSnapshot]
    updates: int
    update_latencies: list[float]
    trace: list[dict]
    runtime_s: float
    arrived_nonelectives: int
    treated_nonelectives: int
    carried_nonelectives: int        # still waiting at week end
    cancelled_patients: int
    dropped_addons: int
    day_schedules: list[Schedule] = field(default_factory=list)  # when kept

    @property
    def mean_update_latency(self) -> float:
        if not self.update_latencies:
            return 0.0
        return sum(self.update_latencies) / len(self.update_latencies)

    def metrics_row(self) -> dict:
        row = self.weekly.as_row()
        row.update({
            "updates": self.updates,
            "runtime_s": self.runtime_s,
            "update_time_s": self.mean_update_latency,
        })
        return row


class _Pool:
    """Waiting-list patients available for short-notice add-ons."""

    def __init__(self, week: WeekInstance):
        eligible = set(week.addon_candidates)
        self.available: dict[int, Patient] = {
            p.id: p for p in week.waiting_list if p.id in eligible}
        self.incoming = sorted(
            ((d, at, p) for d, at, p in week.elective_requests if p.id in eligible),
            key=lambda e: (e[0], e[1], e[2].id))
        self._idx = 0

    def advance(self, day: int, now: float) -> None:
        while self._idx < len(self.incoming):
            d, at, p = self.incoming[self._idx]
            if (d, at) > (day, now):
                break
            self.available[p.id] = p
            self._idx += 1

    def remove(self, pid: int) -> None:
        self.available.pop(pid, None)

    def add_back(self, patient: Patient) -> None:
        self.available[patient.id] = patient

    def candidates(self) -> list[Patient]:
        return list(self.available.values())


@dataclass
class _DayState:
    day: int
    instance: Instance
    schedule: Schedule
    pending: list[Disruption] = field(default_factory=list)
    ne_waiting: dict[int, Patient] = field(default_factory=dict)
    running_room: dict[int, int] = field(default_factory=dict)
    running_surgeon: dict[int, int] = field(default_factory=dict)
    # Realized occupancy ends (incl. cleanup) of finished surgeries, per
    # resource; a start may only commit after these plus its setup.
    room_done: dict[int, float] = field(default_factory=dict)
    surgeon_done: dict[int, float] = field(default_factory=dict)


def _weekday(day: int) -> bool:
    return day < 5


def simulate_week(week: WeekInstance, policy: ReactionPolicy,
                  strategy: UpdateStrategy, rng,
                  check_every_update: bool = False,
                  collect_trace: bool = True,
                  keep_schedules: bool = False) -> SimulationResult:
    """Run one realization of the week under the given strategy/policy."""
    missing = policy.covers(strategy.name)
    if missing:
        raise ValueError(f"policy missing vectors for {strategy.name}: {missing}")

    t_wall = time.perf_counter()
    hz = week.horizon
    lam = hz.open_hours
    pool = _Pool(week)
    carry_ne: list[Patient] = []
    room_release: dict[int, float] = {}
    surgeon_release: dict[int, float] = {}

    day_metrics: list[MetricsSnapshot] = []
    day_schedules: list[Schedule] = []
    trace: list[dict] = []
    latencies: list[float] = []
    updates = 0
    ne_waits: list[float] = []
    arrived_ne = 0
    treated_ne = 0
    cancelled_total = 0
    dropped_addons = 0

    def log(day, at, type_, **kw):
        if collect_trace:
            entry = {"day": day, "at": round(at, 6), "type": type_}
            entry.update(kw)
            trace.append(entry)

    for day in range(WEEK_DAYS):
        broken = set(week.breakdowns.get(day, ()))
        cancelled = set(week.cancellations.get(day, ()))
        cancelled_total += len(cancelled)
        inst = week.day_instance(day, broken, cancelled, room_release, surgeon_release)
        st = _DayState(day=day, instance=inst, schedule=Schedule())

        queue = list(carry_ne)  # carried-in patients counted on their arrival day
        carry_ne = []
        for p in queue:
            inst.add_patient(p)
        st.schedule = block_schedule(inst, queue, now=hz.start)
        log(day, hz.start, "day_start", broken=sorted(broken),
            cancelled=sorted(cancelled), initial_placements=len(st.schedule))

        for rid in sorted(broken):
            st.pending.append(Disruption("D2", at=hz.start, room=rid))
        cancelled_patients = {p.id: p for p in week.scheduled_for_day(day)
                              if p.id in cancelled}
        for pid in sorted(cancelled_patients):
            st.pending.append(Disruption("D5", at=hz.start,
                                         patient=cancelled_patients[pid]))

        # ---- event heap ----
        heap: list[tuple[float, int, int, str, object]] = []
        seq = 0

        def push(at, kind, payload=None):
            nonlocal seq
            heapq.heappush(heap, (at, _PRIO[kind], seq, kind, payload))
            seq += 1

        push(hz.start, "day_start")
        for d, at, p in week.nonelective_requests:
            if d == day:
                push(at, "ne_arrival", p)
        if strategy.period is not None:
            limit = lam if strategy.in_hours_only else hz.day_hours
            k = 1
            while True:
                t = k * strategy.period
                if t > limit + 1e-9 or (not strategy.in_hours_only and t >= hz.day_hours - 1e-9):
                    break
                push(t, "tick")
                k += 1

        def arm_start_event(now):
            best = None
            for pid, pl in st.schedule.placements.items():
                if pid in st.schedule.anaesthetised_before:
                    continue
                if best is None or pl.start < best:
                    best = pl.start
            if best is not None and best > now + 1e-9:
                push(best, "surgery_start")

        def commit_due_starts(now):
            due = sorted(
                (pl for pid, pl in st.schedule.placements.items()
                 if pid not in st.schedule.anaesthetised_before
                 and pl.start <= now + 1e-9),
                key=lambda pl: (pl.start, pl.patient))
            for pl in due:
                if pl.room in st.running_room or pl.surgeon in st.running_surgeon:
                    continue  # physically blocked; repaired at the next over-run
                if pl.start + 1e-9 < st.room_done.get(pl.room, float("-inf")) + pl.setup:
                    continue
                if pl.start + 1e-9 < st.surgeon_done.get(pl.surgeon, float("-inf")) + pl.setup:
                    continue
                patient = inst.patient(pl.patient)
                st.schedule.mark_started(pl.patient, pl.start)
                sigma = week.realization_sigma(patient.specialty, patient.kind)
                if sigma > 0:
                    actual = float(patient.duration * np.exp(sigma * rng.standard_normal()))
                else:
                    actual = patient.duration
                st.running_room[pl.room] = pl.patient
                st.running_surgeon[pl.surgeon] = pl.patient
                push(pl.start + actual, "surgery_end", (pl.patient, actual))
                log(day, pl.start, "surgery_start", patient=pl.patient,
                    room=pl.room, surgeon=pl.surgeon)

        def update_pass(now):
            nonlocal updates, dropped_addons, treated_ne
            t0 = time.perf_counter()
            updates += 1
            pass_log = []
            placed_pu_before = {
                pid for pid in st.schedule.placements
                if inst.has_patient(pid)
                and inst.patient(pid).kind is PatientClass.UNSCHEDULED_ELECTIVE}

            # Queued non-electives (anyone waiting from before this
            # instant) are placed before any other processing; the sampled
            # reaction below only governs arrivals at this very moment.
            for pid in sorted(st.ne_waiting):
                patient = st.ne_waiting[pid]
                if patient.arrival < now - 1e-9 and not st.schedule.included(pid):
                    if not inst.has_patient(pid):
                        inst.add_patient(patient)
                    react(st.schedule, Disruption("D1", at=now, patient=patient),
                          "R1", inst, now)
                    pass_log.append(("D1-queued", "R1"))

            candidates = pool.candidates() if _weekday(day) else []
            for d in st.pending:
                if d.kind == "D1" and st.schedule.included(d.patient.id):
                    pass_log.append(("D1", "queued"))
                    continue
                reaction = sample_reaction(policy, strategy, d.kind, rng)
                if d.kind == "D1":
                    if reaction == "R0":
                        pass  # stays queued; placed at the next update
                    else:
                        if not inst.has_patient(d.patient.id):
                            inst.add_patient(d.patient)
                        react(st.schedule, d, reaction, inst, now)
                else:
                    react(st.schedule, d, reaction, inst, now, candidates)
                pass_log.append((d.kind, reaction))
            st.pending.clear()

            for dd in detect_derived(st.schedule, inst, now, candidates):
                reaction = sample_reaction(policy, strategy, dd.kind, rng)
                react(st.schedule, dd, reaction, inst, now, candidates)
                pass_log.append((dd.kind, reaction))

            enforce_consistency(st.schedule, inst, now)

            # Pool and queue bookkeeping by diff.
            placed_pu_after = set()
            for pid in st.schedule.placements:
                if inst.has_patient(pid) and inst.patient(pid).kind is PatientClass.UNSCHEDULED_ELECTIVE:
                    placed_pu_after.add(pid)
                    pool.remove(pid)
            for pid in placed_pu_before - placed_pu_after:
                pool.add_back(inst.patient(pid))
                dropped_addons += 1
            for pid in list(st.ne_waiting):
                if st.schedule.included(pid):
                    del st.ne_waiting[pid]

            latencies.append(time.perf_counter() - t0)
            log(day, now, "update", n=updates,
                reactions=[f"{k}:{r}" for k, r in pass_log])
            if check_every_update:
                report = check_feasibility(st.schedule, inst)
                if not report.ok:
                    raise SimulationInfeasibleError(day, now, report)

        # Initial consistency: carried releases may already exceed some
        # scheduled starts only via construction, which respects them.
        commit_due_starts(hz.start)
        arm_start_event(hz.start)

        while heap:
            now = heap[0][0]
            batch = []
            while heap and heap[0][0] <= now + 1e-12:
                batch.append(heapq.heappop(heap))
            for _, _, _, kind, payload in batch:
                if kind == "ne_arrival":
                    patient: Patient = payload
                    arrived_ne += 1
                    st.ne_waiting[patient.id] = patient
                    st.pending.append(Disruption("D1", at=now, patient=patient))
                    log(day, now, "ne_arrival", patient=patient.id)
                elif kind == "surgery_end":
                    pid, actual = payload
                    pl = st.schedule.placements[pid]
                    patient = inst.patient(pid)
                    st.schedule.realized_duration[pid] = actual
                    done = replace(pl, end=pl.start + actual)
                    st.schedule.place(done)
                    st.running_room.pop(pl.room, None)
                    st.running_surgeon.pop(pl.surgeon, None)
                    if st.room_done.get(pl.room, float("-inf")) < done.occupied_until:
                        st.room_done[pl.room] = done.occupied_until
                    if st.surgeon_done.get(pl.surgeon, float("-inf")) < done.occupied_until:
                        st.surgeon_done[pl.surgeon] = done.occupied_until
                    deviation = actual - patient.duration
                    if deviation > _DEV_TOL:
                        st.pending.append(Disruption(
                            "D4", at=now, patient=patient, room=pl.room,
                            actual=actual, expected=patient.duration))
                    elif deviation < -_DEV_TOL:
                        st.pending.append(Disruption(
                            "D3", at=now, patient=patient, room=pl.room,
                            actual=actual, expected=patient.duration))
                    log(day, now, "surgery_end", patient=pid,
                        deviation=round(deviation, 6))
                # day_start, tick, surgery_start: markers; work happens below.
            pool.advance(day, now)
            commit_due_starts(now)
            if should_update(strategy, st.pending, now, lam):
                update_pass(now)
            commit_due_starts(now)
            arm_start_event(now)

        # ---- day wrap-up ----
        snap = MetricsSnapshot(
            utilisation=sum(contribution(pl, hz) for pl in st.schedule.placements.values()),
            overtime=_overtime_of(st.schedule, inst),
            mean_nonelective_wait=0.0,  # aggregated weekly below
            patients_treated=len(st.schedule.placements),
        )
        day_metrics.append(snap)
        if keep_schedules:
            day_schedules.append(st.schedule.copy())
        for pid, pl in st.schedule.placements.items():
            p = inst.patient(pid)
            if p.kind is PatientClass.NON_ELECTIVE:
                treated_ne += 1
                ne_waits.append(pl.start - p.arrival)
        for pid, p in st.ne_waiting.items():
            carry_ne.append(replace(p, arrival=p.arrival - hz.day_hours))
        room_release = {}
        surgeon_release = {}
        for pl in st.schedule.placements.values():
            spill = pl.occupied_until - hz.day_hours
            if spill > 0:
                if room_release.get(pl.room, 0.0) < spill:
                    room_release[pl.room] = spill
                if surgeon_release.get(pl.surgeon, 0.0) < spill:
                    surgeon_release[pl.surgeon] = spill
        log(day, hz.day_hours, "day_end",
            treated=len(st.schedule.placements), carried=len(st.ne_waiting))

    weekly = MetricsSnapshot(
        utilisation=sum(m.utilisation for m in day_metrics),
        overtime=sum(m.overtime for m in day_metrics),
        mean_nonelective_wait=(sum(ne_waits) / len(ne_waits)) if ne_waits else 0.0,
        patients_treated=sum(m.patients_treated for m in day_metrics),
    )
    return SimulationResult(
        weekly=weekly,
        days=day_metrics,
        updates=updates,
        update_latencies=latencies,
        trace=trace,
        runtime_s=time.perf_counter() - t_wall,
        arrived_nonelectives=arrived_ne,
        treated_nonelectives=treated_ne,
        carried_nonelectives=len(carry_ne),
        cancelled_patients=cancelled_total,
        dropped_addons=dropped_addons,
        day_schedules=day_schedules,
    )


# ---- replications ------------------------------------------------------------

def seed_stream(base_seed: int, n: int) -> list[np.random.SeedSequence]:
    """Documented replication seeding: SeedSequence(base_seed).spawn(n)."""
    return np.random.SeedSequence(base_seed).spawn(n)


@dataclass
class ReplicationAggregate:
    strategy: str
    n: int
    mean: dict[str, float]
    sem: dict[str, float]
    rows: list[dict]


_METRIC_KEYS = ("utilisation", "overtime", "ne_time_to_surgery",
                "patients_treated", "updates", "runtime_s", "update_time_s")


def run_replications(week_or_params, policy: ReactionPolicy,
                     strategy: UpdateStrategy, n: int, base_seed: int,
                     check_every_update: bool = False) -> ReplicationAggregate:
    """Mean and standard error of the weekly metrics over n seeded runs.

    Accepts either a fixed WeekInstance (same demand, fresh realizations
    per run) or GenParams (a fresh week is generated per run).
    """
    from .instancegen import GenParams, generate_week

    if n < 1:
        raise ValueError("need at least one replication")
    rows = []
    for i, ss in enumerate(seed_stream(base_seed, n)):
        rng = np.random.default_rng(ss)
        if isinstance(week_or_params, GenParams):
            week = generate_week(week_or_params, rng)
        else:
            week = week_or_params
        result = simulate_week(week, policy, strategy, rng,
                               check_every_update=check_every_update,
                               collect_trace=False)
        row = {"replication": i}
        row.update(result.metrics_row())
        rows.append(row)

    mean = {}
    sem = {}
    for key in _METRIC_KEYS:
        xs = np.array([r[key] for r in rows], dtype=float)
        mean[key] = float(xs.mean())
        sem[key] = float(xs.std(ddof=1) / np.sqrt(len(xs))) if len(xs) > 1 else 0.0
    return ReplicationAggregate(strategy=strategy.name, n=n, mean=mean,
                                sem=sem, rows=rows)
