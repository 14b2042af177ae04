"""Service-record data model, line-delimited record files, and fold assignment."""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, asdict, replace

DEPARTMENTS = (
    "Controls", "Vague", "Harness", "Hydraulics", "PTO", "Boom",
    "Maintenance", "Test", "Rotation", "Auger", "Outrigger", "Digger",
    "Body", "Chassis", "Electronics", "Resale",
)
RELATIONS = ("Valid", "False", "Vague")
OWNERSHIP_TYPES = ("rented", "leased", "purchased")

# used for relation/department fields on unlabeled records
UNKNOWN = "unknown"

RECORD_KEYS = (
    "id", "call_log", "detail", "relation", "department", "age_months",
    "zip", "company", "failure_date", "runtime_hours", "ownership",
    "months_since_service", "operator_id",
)

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_ZIP_RE = re.compile(r"^\d{5}$")


class DataError(Exception):
    """Unrecoverable problem with input data or data files."""


class NumericError(Exception):
    """Training or evaluation produced non-finite numbers."""


@dataclass(frozen=True)
class ServiceRecord:
    """One customer service call: two free-text sections plus metadata."""

    id: str
    call_log: str
    detail: str
    relation: str
    department: str
    age_months: int
    zip: str
    company: str
    failure_date: str
    runtime_hours: float
    ownership: str
    months_since_service: float
    operator_id: str

    def is_labeled(self) -> bool:
        return self.relation in RELATIONS


@dataclass(frozen=True)
class ParseIssue:
    line: int
    message: str


def validate_record(rec: ServiceRecord) -> list[str]:
    """Return a list of invariant violations (empty when the record is valid)."""
    problems = []
    if not rec.id:
        problems.append("id is empty")
    if rec.relation not in RELATIONS and rec.relation != UNKNOWN:
        problems.append(
            f"relation {rec.relation!r} is not one of {'/'.join(RELATIONS)}"
        )
    if rec.department not in DEPARTMENTS and rec.department != UNKNOWN:
        problems.append(
            f"department {rec.department!r} is not one of the 16 known names: "
            + ", ".join(DEPARTMENTS)
        )
    if rec.is_labeled() and not rec.detail:
        problems.append("detail is empty for a labeled record")
    if not rec.call_log and rec.relation in ("Valid", "False"):
        problems.append("call_log may be empty only for Vague-relation records")
    if rec.relation == "Valid" and rec.department not in DEPARTMENTS:
        problems.append("Valid record must carry one of the 16 departments")
    if rec.age_months < 0:
        problems.append("age_months is negative")
    if rec.zip and not _ZIP_RE.match(rec.zip):
        problems.append(f"zip {rec.zip!r} is not 5 digits")
    if rec.failure_date and not _DATE_RE.match(rec.failure_date):
        problems.append(f"failure_date {rec.failure_date!r} is not ISO-8601")
    if rec.runtime_hours < 0:
        problems.append("runtime_hours is negative")
    if rec.ownership not in OWNERSHIP_TYPES:
        problems.append(f"ownership {rec.ownership!r} not in {OWNERSHIP_TYPES}")
    if rec.months_since_service < 0:
        problems.append("months_since_service is negative")
    return problems


def record_to_line(rec: ServiceRecord) -> str:
    """Serialize one record as a single self-describing JSON object line."""
    d = asdict(rec)
    return json.dumps({k: d[k] for k in RECORD_KEYS}, ensure_ascii=False)


def record_from_mapping(obj: dict) -> ServiceRecord:
    missing = [k for k in RECORD_KEYS if k not in obj]
    if missing:
        raise ValueError("missing keys: " + ", ".join(missing))
    extra = [k for k in obj if k not in RECORD_KEYS]
    if extra:
        raise ValueError("unknown keys: " + ", ".join(sorted(extra)))
    return ServiceRecord(
        id=str(obj["id"]),
        call_log=str(obj["call_log"]),
        detail=str(obj["detail"]),
        relation=str(obj["relation"]),
        department=str(obj["department"]),
        age_months=int(obj["age_months"]),
        zip=str(obj["zip"]),
        company=str(obj["company"]),
        failure_date=str(obj["failure_date"]),
        runtime_hours=float(obj["runtime_hours"]),
        ownership=str(obj["ownership"]),
        months_since_service=float(obj["months_since_service"]),
        operator_id=str(obj["operator_id"]),
    )


def parse_records(stream) -> tuple[list[ServiceRecord], list[ParseIssue]]:
    """Parse line-delimited record text.

    Accepts an iterable of lines or a whole string.  Well-formed records come
    back in input order; every malformed or invalid line is reported with its
    1-based line number instead of aborting the parse.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()
    records: list[ServiceRecord] = []
    issues: list[ParseIssue] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            issues.append(ParseIssue(lineno, f"not valid JSON: {e.msg}"))
            continue
        if not isinstance(obj, dict):
            issues.append(ParseIssue(lineno, "line is not a JSON object"))
            continue
        try:
            rec = record_from_mapping(obj)
        except (ValueError, TypeError) as e:
            issues.append(ParseIssue(lineno, str(e)))
            continue
        problems = validate_record(rec)
        if problems:
            issues.append(ParseIssue(lineno, "; ".join(problems)))
            continue
        records.append(rec)
    return records, issues


def write_records(path, records, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for rec in records:
            fh.write(record_to_line(rec) + "\n")


def read_records(path) -> tuple[list[ServiceRecord], list[ParseIssue]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_records(fh)


def write_ground_truth(path, truth: dict[str, tuple[str, str]], header: str | None = None) -> None:
    """Write the id -> (relation, department) sidecar, one tab-separated line each."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for rid in truth:
            relation, department = truth[rid]
            fh.write(f"{rid}\t{relation}\t{department}\n")


def read_ground_truth(path) -> dict[str, tuple[str, str]]:
    truth: dict[str, tuple[str, str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected id<TAB>relation<TAB>department")
            rid, relation, department = parts
            if relation not in RELATIONS:
                raise DataError(f"{path}:{lineno}: unknown relation {relation!r}")
            if department not in DEPARTMENTS and department != UNKNOWN:
                raise DataError(f"{path}:{lineno}: unknown department {department!r}")
            truth[rid] = (relation, department)
    return truth


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    mapping: dict[str, int]

    def fold_ids(self, fold: int) -> list[str]:
        return [rid for rid, f in self.mapping.items() if f == fold]

    def sizes(self) -> list[int]:
        out = [0] * self.k
        for f in self.mapping.values():
            out[f] += 1
        return out


def split_folds(records, k: int, seed: int, stratify: str = "department") -> FoldAssignment:
    """Assign records to k folds, stratified so each fold mirrors the class mix.

    Deterministic for a fixed seed.  Global fold sizes differ by at most one;
    within every stratum the per-fold counts differ by at most one, so each
    fold's class proportions sit within one record of the stratified ideal.
    """
    records = list(records)
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    if k > len(records):
        raise ValueError(f"cannot split {len(records)} records into {k} folds")

    def stratum_of(rec: ServiceRecord) -> str:
        if stratify == "department" and rec.department != UNKNOWN:
            return "dept:" + rec.department
        if rec.relation != UNKNOWN:
            return "rel:" + rec.relation
        return "none"

    strata: dict[str, list[str]] = {}
    for rec in records:
        strata.setdefault(stratum_of(rec), []).append(rec.id)

    rng = random.Random(seed)
    totals = [0] * k
    mapping: dict[str, int] = {}
    for key in sorted(strata):
        ids = sorted(strata[key])
        rng.shuffle(ids)
        base, extra = divmod(len(ids), k)
        # extras go to the currently smallest folds so global sizes stay balanced
        order = list(range(k))
        rng.shuffle(order)
        order.sort(key=lambda f: totals[f])
        counts = [base] * k
        for f in order[:extra]:
            counts[f] += 1
        pos = 0
        for fold in range(k):
            for rid in ids[pos:pos + counts[fold]]:
                mapping[rid] = fold
            totals[fold] += counts[fold]
            pos += counts[fold]
    return FoldAssignment(k=k, mapping=mapping)


def with_relabeled(rec: ServiceRecord, relation=None, department=None) -> ServiceRecord:
    kwargs = {}
    if relation is not None:
        kwargs["relation"] = relation
    if department is not None:
        kwargs["department"] = department
    return replace(rec, **kwargs)
