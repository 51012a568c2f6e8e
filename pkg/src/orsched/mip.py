"""Symbolic linear model of the daily sequencing problem and its LP export.

The model linearises the clipped-utilisation objective with four
plus/minus dummy pairs per patient and big-M indicator constraints, then
adds the full feasibility catalogue (constraints 17-35, binaries 13/36).
Strict ordering comparisons are relaxed to >= with a small epsilon, since
LP formats have no strict inequalities; the relaxation is noted in the
export header.  Output is deterministic: same instance, same bytes.

No solver is invoked here.  ``evaluate_model`` checks a complete variable
assignment against every constraint, and ``assignment_from_schedule``
derives the canonical assignment for a concrete schedule, which is how
exported models are validated against the enumeration oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .domain import Instance, PatientClass, Schedule
from .objective import contribution

STRICT_EPS = 1e-6  # relaxation of strict orderings in the exported model


class MipExportError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class MipVar:
    name: str
    binary: bool = False
    free: bool = False  # continuous, unbounded below (times may be negative)


@dataclass(frozen=True, slots=True)
class MipConstraint:
    name: str
    terms: tuple[tuple[str, float], ...]  # (variable, coefficient)
    sense: str                            # "<=", ">=", "="
    rhs: float

    def evaluate(self, assignment: dict[str, float]) -> float:
        return sum(coef * assignment[var] for var, coef in self.terms)


@dataclass
class MipModel:
    variables: list[MipVar] = field(default_factory=list)
    constraints: list[MipConstraint] = field(default_factory=list)
    objective: tuple[tuple[str, float], ...] = ()
    big_m: float = 24.0

    def variable_names(self) -> set[str]:
        return {v.name for v in self.variables}


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return f"{x:.12g}"


def build_model(instance: Instance) -> MipModel:
    """Assemble the symbolic linearised model for one day."""
    if not instance.working_rooms():
        raise MipExportError("no working rooms: model is trivially infeasible")

    hz = instance.horizon
    lam = hz.open_hours
    lam_star = hz.day_hours
    big_m = hz.big_m
    patients = sorted(instance.patients, key=lambda p: p.id)
    rooms = sorted(instance.rooms, key=lambda r: r.id)
    surgeons = sorted(instance.surgeons, key=lambda s: s.id)
    n_patients = len(patients)

    model = MipModel(big_m=big_m)
    add_var = model.variables.append
    cons: list[MipConstraint] = model.constraints

    def con(name, terms, sense, rhs):
        cons.append(MipConstraint(name, tuple(terms), sense, rhs))

    for p in patients:
        add_var(MipVar(f"eps_{p.id}", binary=True))
        add_var(MipVar(f"Omega_{p.id}"))
        add_var(MipVar(f"Z_{p.id}", free=True))
        add_var(MipVar(f"Zs_{p.id}", free=True))
        for j in range(1, 5):
            add_var(MipVar(f"dp_{j}_{p.id}"))
            add_var(MipVar(f"dm_{j}_{p.id}"))
            add_var(MipVar(f"e_{j}_{p.id}", binary=True))
        for r in rooms:
            add_var(MipVar(f"X_{p.id}_{r.id}", binary=True))
        for h in surgeons:
            add_var(MipVar(f"Y_{p.id}_{h.id}", binary=True))
    for p in patients:
        for q in patients:
            if p.id != q.id:
                add_var(MipVar(f"U_{p.id}_{q.id}", binary=True))

    model.objective = tuple((f"Omega_{p.id}", 1.0) for p in patients)

    # Objective linearisation: contribution bounds (3-5) and the four
    # plus/minus splits (6-9) with their indicator gates (10-11).
    for p in patients:
        pid = p.id
        con(f"c3_{pid}", [(f"Omega_{pid}", 1.0), (f"eps_{pid}", -lam)], "<=", 0.0)
        con(f"c4_{pid}", [(f"Omega_{pid}", 1.0), (f"dm_3_{pid}", 1.0), (f"dp_4_{pid}", 1.0)], "<=", lam)
        con(f"c5_{pid}", [(f"Omega_{pid}", 1.0), (f"eps_{pid}", -lam),
                          (f"dm_3_{pid}", 1.0), (f"dp_4_{pid}", 1.0)], ">=", 0.0)
        con(f"c6_{pid}", [(f"Zs_{pid}", 1.0), (f"dp_1_{pid}", -1.0), (f"dm_1_{pid}", 1.0)],
            "=", -p.cleanup)
        con(f"c7_{pid}", [(f"Z_{pid}", 1.0), (f"dp_2_{pid}", -1.0), (f"dm_2_{pid}", 1.0)],
            "=", p.setup + lam)
        con(f"c8_{pid}", [(f"dp_1_{pid}", 1.0), (f"dp_3_{pid}", -1.0), (f"dm_3_{pid}", 1.0)],
            "=", lam)
        con(f"c9_{pid}", [(f"dp_4_{pid}", 1.0), (f"dm_4_{pid}", -1.0), (f"dm_2_{pid}", 1.0)],
            "=", lam)
        for j in range(1, 5):
            con(f"c10_{j}_{pid}", [(f"dp_{j}_{pid}", 1.0), (f"e_{j}_{pid}", -big_m)], "<=", 0.0)
            con(f"c11_{j}_{pid}", [(f"dm_{j}_{pid}", 1.0), (f"e_{j}_{pid}", big_m)], "<=", big_m)

    for p in patients:
        pid = p.id
        con(f"c17_{pid}", [(f"X_{pid}_{r.id}", 1.0) for r in rooms] + [(f"eps_{pid}", -1.0)],
            "=", 0.0)
    for r in rooms:
        con(f"c18_{r.id}", [(f"X_{p.id}_{r.id}", 1.0) for p in patients],
            "<=", float(n_patients) if r.working else 0.0)
    for p in patients:
        for r in rooms:
            con(f"c19_{p.id}_{r.id}", [(f"Z_{p.id}", 1.0), (f"X_{p.id}_{r.id}", -r.release)],
                ">=", 0.0)
    for p in patients:
        con(f"c20_{p.id}", [(f"Z_{p.id}", 1.0)] +
            [(f"Y_{p.id}_{h.id}", -h.release) for h in surgeons], ">=", 0.0)

    # Ordering indicators: U_pq = 1 when p starts before q ends.
    for p in patients:
        for q in patients:
            if p.id == q.id:
                continue
            con(f"c21_{p.id}_{q.id}",
                [(f"Z_{p.id}", 1.0), (f"Zs_{q.id}", -1.0),
                 (f"eps_{p.id}", -lam_star), (f"eps_{q.id}", -lam_star),
                 (f"U_{p.id}_{q.id}", lam_star)],
                ">=", STRICT_EPS - 2.0 * lam_star)
            con(f"c22_{p.id}_{q.id}",
                [(f"Zs_{q.id}", 1.0), (f"Z_{p.id}", -1.0), (f"U_{p.id}_{q.id}", -lam_star)],
                ">=", -lam_star)

    # Resource exclusivity over overlapping pairs (unordered: symmetric).
    for i, p in enumerate(patients):
        for q in patients[i + 1:]:
            upq = (f"U_{p.id}_{q.id}", 1.0)
            uqp = (f"U_{q.id}_{p.id}", 1.0)
            for h in surgeons:
                con(f"c23_{p.id}_{q.id}_{h.id}",
                    [(f"Y_{p.id}_{h.id}", 1.0), (f"Y_{q.id}_{h.id}", 1.0), upq, uqp],
                    "<=", 3.0)
            for r in rooms:
                con(f"c24_{p.id}_{q.id}_{r.id}",
                    [(f"X_{p.id}_{r.id}", 1.0), (f"X_{q.id}_{r.id}", 1.0), upq, uqp],
                    "<=", 3.0)

    for p in patients:
        con(f"c25_{p.id}", [(f"Zs_{p.id}", 1.0), (f"Z_{p.id}", -1.0),
                            (f"eps_{p.id}", -p.duration)], "=", 0.0)

    # Changeover gaps whenever the same surgeon (26) or room (27) hosts an
    # ordered pair: Z_q >= Zs_p + setup_q + cleanup_p, big-M gated.
    for p in patients:
        for q in patients:
            if p.id == q.id:
                continue
            gap = q.setup + p.cleanup
            for h in surgeons:
                con(f"c26_{p.id}_{q.id}_{h.id}",
                    [(f"Z_{q.id}", 1.0), (f"Zs_{p.id}", -1.0),
                     (f"U_{p.id}_{q.id}", -big_m),
                     (f"Y_{p.id}_{h.id}", -big_m), (f"Y_{q.id}_{h.id}", -big_m)],
                    ">=", gap - 3.0 * big_m)
            for r in rooms:
                con(f"c27_{p.id}_{q.id}_{r.id}",
                    [(f"Z_{q.id}", 1.0), (f"Zs_{p.id}", -1.0),
                     (f"U_{p.id}_{q.id}", -big_m),
                     (f"X_{p.id}_{r.id}", -big_m), (f"X_{q.id}_{r.id}", -big_m)],
                    ">=", gap - 3.0 * big_m)

    # Suitability: only unequipped/ineligible pairs need explicit zeros.
    for p in patients:
        for r in rooms:
            if p.specialty not in r.specialties:
                con(f"c28_{p.id}_{r.id}", [(f"X_{p.id}_{r.id}", 1.0)], "<=", 0.0)
    for p in patients:
        for h in surgeons:
            if h.id not in p.eligible_surgeons:
                con(f"c29_{p.id}_{h.id}", [(f"Y_{p.id}_{h.id}", 1.0)], "<=", 0.0)

    for p in patients:
        con(f"c30_{p.id}", [(f"Y_{p.id}_{h.id}", 1.0) for h in surgeons] +
            [(f"eps_{p.id}", -1.0)], "=", 0.0)

    for p in patients:
        pid = p.id
        if p.kind in (PatientClass.SCHEDULED_ELECTIVE, PatientClass.UNSCHEDULED_ELECTIVE):
            con(f"c31_{pid}", [(f"Z_{pid}", 1.0), (f"eps_{pid}", -hz.start)], ">=", 0.0)
        if p.kind in (PatientClass.SCHEDULED_ELECTIVE, PatientClass.NON_ELECTIVE):
            con(f"c32_{pid}", [(f"eps_{pid}", 1.0)], "=", 1.0)
        if p.kind is PatientClass.UNSCHEDULED_ELECTIVE:
            con(f"c33_{pid}", [(f"Z_{pid}", 1.0), (f"eps_{pid}", -(hz.start + p.notice))],
                ">=", 0.0)
            con(f"c35_{pid}", [(f"Zs_{pid}", 1.0)], "<=", lam)
        if p.kind is PatientClass.NON_ELECTIVE:
            con(f"c34_{pid}", [(f"Z_{pid}", 1.0), (f"eps_{pid}", -p.arrival)], ">=", 0.0)

    return model


def expected_constraint_count(instance: Instance) -> int:
    """Closed-form constraint count implied by instance dimensions."""
    P = len(instance.patients)
    R = len(instance.rooms)
    H = len(instance.surgeons)
    pairs = P * (P - 1)
    unordered = pairs // 2
    n_unequipped = sum(
        1 for p in instance.patients for r in instance.rooms
        if p.specialty not in r.specialties)
    n_ineligible = sum(
        1 for p in instance.patients for h in instance.surgeons
        if h.id not in p.eligible_surgeons)
    n_sched = sum(1 for p in instance.patients if p.kind is PatientClass.SCHEDULED_ELECTIVE)
    n_addon = sum(1 for p in instance.patients if p.kind is PatientClass.UNSCHEDULED_ELECTIVE)
    n_ne = sum(1 for p in instance.patients if p.kind is PatientClass.NON_ELECTIVE)
    return (
        3 * P                      # 3-5
        + 4 * P                    # 6-9
        + 8 * P                    # 10-11
        + P                        # 17
        + R                        # 18
        + P * R                    # 19
        + P                        # 20
        + 2 * pairs                # 21-22
        + unordered * H            # 23
        + unordered * R            # 24
        + P                        # 25
        + pairs * H                # 26
        + pairs * R                # 27
        + n_unequipped             # 28
        + n_ineligible             # 29
        + P                        # 30
        + (n_sched + n_addon)      # 31
        + (n_sched + n_ne)         # 32
        + n_addon                  # 33
        + n_ne                     # 34
        + n_addon                  # 35
    )


def render_lp(model: MipModel) -> str:
    """Render the model as CPLEX-LP text; byte-stable for a given model."""
    lines = [
        "\\ surgical case sequencing day model",
        "\\ format: CPLEX LP",
        f"\\ strict orderings relaxed to >= with epsilon = {STRICT_EPS:g} h",
        "\\ room/surgeon release terms kept in literal product form",
        f"\\ big M = {_fmt(model.big_m)}",
        "Maximize",
    ]
    obj_terms = " + ".join(
        name if coef == 1.0 else f"{_fmt(coef)} {name}" for name, coef in model.objective)
    lines.append(f" obj: {obj_terms}")
    lines.append("Subject To")
    for c in model.constraints:
        parts = []
        for var, coef in c.terms:
            if coef >= 0:
                parts.append(f"+ {_fmt(coef)} {var}" if parts else f"{_fmt(coef)} {var}")
            else:
                parts.append(f"- {_fmt(-coef)} {var}")
        sense = {"<=": "<=", ">=": ">=", "=": "="}[c.sense]
        lines.append(f" {c.name}: {' '.join(parts)} {sense} {_fmt(c.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if v.free:
            lines.append(f" {v.name} free")
    lines.append("Binaries")
    for v in model.variables:
        if v.binary:
            lines.append(f" {v.name}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_mip(instance: Instance) -> str:
    return render_lp(build_model(instance))


# ---- assignment evaluation --------------------------------------------------

def _split(value: float) -> tuple[float, float]:
    return (max(value, 0.0), max(-value, 0.0))


def assignment_from_schedule(instance: Instance, schedule: Schedule) -> dict[str, float]:
    """Canonical variable assignment realising a concrete schedule.

    Excluded patients sit at time zero with all indicators off; ordering
    indicators follow 'starts before ends' with the strictness epsilon.
    """
    hz = instance.horizon
    lam = hz.open_hours
    assignment: dict[str, float] = {}
    patients = sorted(instance.patients, key=lambda p: p.id)

    for p in patients:
        pl = schedule.placements.get(p.id)
        included = pl is not None
        z = pl.start if included else 0.0
        zs = pl.end if included else 0.0
        assignment[f"eps_{p.id}"] = 1.0 if included else 0.0
        assignment[f"Z_{p.id}"] = z
        assignment[f"Zs_{p.id}"] = zs
        assignment[f"Omega_{p.id}"] = contribution(pl, hz) if included else 0.0
        splits = [
            _split(zs + p.cleanup),
            _split(z - p.setup - lam),
        ]
        splits.append(_split(splits[0][0] - lam))
        splits.append(_split(lam - splits[1][1]))
        for j, (dp, dm) in enumerate(splits, start=1):
            assignment[f"dp_{j}_{p.id}"] = dp
            assignment[f"dm_{j}_{p.id}"] = dm
            assignment[f"e_{j}_{p.id}"] = 1.0 if dp > 0 else 0.0
        for r in instance.rooms:
            assignment[f"X_{p.id}_{r.id}"] = 1.0 if included and pl.room == r.id else 0.0
        for h in instance.surgeons:
            assignment[f"Y_{p.id}_{h.id}"] = 1.0 if included and pl.surgeon == h.id else 0.0

    for p in patients:
        for q in patients:
            if p.id == q.id:
                continue
            if schedule.included(p.id) and schedule.included(q.id):
                zp = schedule.placements[p.id].start
                zsq = schedule.placements[q.id].end
                u = 1.0 if zp < zsq + STRICT_EPS else 0.0
            else:
                u = 0.0
            assignment[f"U_{p.id}_{q.id}"] = u
    return assignment


def evaluate_model(model: MipModel, assignment: dict[str, float],
                   tol: float = 1e-7) -> tuple[float, list[str]]:
    """Objective value and constraint violations of a full assignment."""
    violations = []
    for v in model.variables:
        x = assignment[v.name]
        if v.binary and abs(x) > tol and abs(x - 1.0) > tol:
            violations.append(f"{v.name}: not binary ({x})")
        if not v.binary and not v.free and x < -tol:
            violations.append(f"{v.name}: negative ({x})")
    for c in model.constraints:
        lhs = c.evaluate(assignment)
        if c.sense == "<=" and lhs > c.rhs + tol:
            violations.append(f"{c.name}: {lhs} <= {c.rhs} fails")
        elif c.sense == ">=" and lhs < c.rhs - tol:
            violations.append(f"{c.name}: {lhs} >= {c.rhs} fails")
        elif c.sense == "=" and abs(lhs - c.rhs) > tol:
            violations.append(f"{c.name}: {lhs} = {c.rhs} fails")
    objective = sum(coef * assignment[name] for name, coef in model.objective)
    return objective, violations
