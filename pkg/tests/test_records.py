import json
import random

import pytest

from svctriage.records import (
    DEPARTMENTS,
    OWNERSHIP_TYPES,
    RELATIONS,
    FoldAssignment,
    ServiceRecord,
    parse_records,
    read_ground_truth,
    record_to_line,
    split_folds,
    validate_record,
    write_ground_truth,
)


def make_record(i=0, **overrides):
    fields = dict(
        id=f"r{i:04d}",
        call_log="boom stuck",
        detail="replaced boom cylinder--perform test",
        relation="Valid",
        department="Boom",
        age_months=12,
        zip="95616",
        company="acme utility",
        failure_date="2020-01-15",
        runtime_hours=123.5,
        ownership="leased",
        months_since_service=3.5,
        operator_id="op001",
    )
    fields.update(overrides)
    return ServiceRecord(**fields)


def test_parse_empty_stream():
    records, issues = parse_records("")
    assert records == []
    assert issues == []


def test_parse_one_valid_boom_line():
    line = record_to_line(make_record(relation="Valid", department="Boom"))
    records, issues = parse_records(line)
    assert issues == []
    assert len(records) == 1
    assert records[0].relation == "Valid"
    assert records[0].department == "Boom"


def test_unknown_department_rejected_with_membership_message():
    line = record_to_line(make_record())
    obj = json.loads(line)
    obj["department"] = "Engine"
    records, issues = parse_records(json.dumps(obj))
    assert records == []
    assert len(issues) == 1
    assert issues[0].line == 1
    assert "Engine" in issues[0].message
    # the message cites the actual membership list
    for name in DEPARTMENTS:
        assert name in issues[0].message


def test_unknown_relation_rejected():
    obj = json.loads(record_to_line(make_record()))
    obj["relation"] = "Maybe"
    records, issues = parse_records(json.dumps(obj))
    assert records == []
    assert "Maybe" in issues[0].message


def test_malformed_line_reported_with_line_number_and_parse_continues():
    good = record_to_line(make_record(1))
    stream = "{not json\n" + good + "\n"
    records, issues = parse_records(stream)
    assert len(records) == 1
    assert issues[0].line == 1


def test_missing_key_rejected():
    obj = json.loads(record_to_line(make_record()))
    del obj["zip"]
    _, issues = parse_records(json.dumps(obj))
    assert "zip" in issues[0].message


def test_empty_call_log_only_for_vague_rule():
    ok = make_record(relation="Vague", call_log="")
    assert validate_record(ok) == []
    bad = make_record(relation="Valid", call_log="")
    assert any("call_log" in p for p in validate_record(bad))


def test_empty_detail_rejected_for_labeled():
    bad = make_record(detail="")
    assert any("detail" in p for p in validate_record(bad))


def _random_record(rng, i):
    relation = rng.choice(RELATIONS)
    return make_record(
        i,
        call_log="" if relation == "Vague" and rng.random() < 0.5 else "unit dwn -- check",
        detail="line one\nline two -- special chars \t \" ' \\ é %s" % rng.random(),
        relation=relation,
        department=rng.choice(DEPARTMENTS),
        age_months=rng.randrange(0, 300),
        runtime_hours=round(rng.uniform(0, 9999.9), 1),
        months_since_service=round(rng.uniform(0, 60), 2),
        ownership=rng.choice(OWNERSHIP_TYPES),
    )


def test_serialize_parse_round_trip_is_exact():
    rng = random.Random(7)
    records = [_random_record(rng, i) for i in range(80)]
    text = "\n".join(record_to_line(r) for r in records)
    parsed, issues = parse_records(text)
    assert issues == []
    assert parsed == records


def test_ground_truth_sidecar_round_trip(tmp_path):
    truth = {"r1": ("Valid", "Boom"), "r2": ("Vague", "Chassis")}
    path = tmp_path / "truth.tsv"
    write_ground_truth(path, truth)
    assert read_ground_truth(path) == truth


# --- fold assignment ----------------------------------------------------------

def test_ten_records_ten_folds_forced_singletons():
    records = [make_record(i, department=DEPARTMENTS[i % 4]) for i in range(10)]
    folds = split_folds(records, 10, seed=1)
    assert sorted(folds.sizes()) == [1] * 10


def test_103_records_ten_folds_sizes():
    records = [make_record(i, department=DEPARTMENTS[i % 16]) for i in range(103)]
    folds = split_folds(records, 10, seed=1)
    assert sorted(folds.sizes()) == [10] * 7 + [11] * 3


def test_same_seed_same_mapping():
    records = [make_record(i, department=DEPARTMENTS[i % 7]) for i in range(57)]
    a = split_folds(records, 10, seed=42)
    b = split_folds(records, 10, seed=42)
    assert a == b
    c = split_folds(records, 10, seed=43)
    assert c != a


def test_folds_are_a_partition():
    rng = random.Random(3)
    records = [make_record(i, department=rng.choice(DEPARTMENTS)) for i in range(211)]
    folds = split_folds(records, 10, seed=5)
    assert set(folds.mapping) == {r.id for r in records}
    assert sum(folds.sizes()) == len(records)
    assert max(folds.sizes()) - min(folds.sizes()) <= 1


def test_folds_stratified_within_one_record_of_ideal():
    rng = random.Random(9)
    records = [make_record(i, department=rng.choice(DEPARTMENTS[:5])) for i in range(400)]
    k = 8
    folds = split_folds(records, k, seed=2)
    dept_of = {r.id: r.department for r in records}
    for dept in DEPARTMENTS[:5]:
        total = sum(1 for r in records if r.department == dept)
        per_fold = [0] * k
        for rid, f in folds.mapping.items():
            if dept_of[rid] == dept:
                per_fold[f] += 1
        for count in per_fold:
            assert abs(count - total / k) < 1.0 + 1e-9


def test_k_larger_than_records_errors():
    records = [make_record(i) for i in range(4)]
    with pytest.raises(ValueError):
        split_folds(records, 5, seed=0)
    with pytest.raises(ValueError):
        split_folds(records, 1, seed=0)


def test_fold_assignment_helpers():
    fa = FoldAssignment(k=2, mapping={"a": 0, "b": 1, "c": 0})
    assert sorted(fa.fold_ids(0)) == ["a", "c"]
    assert fa.sizes() == [2, 1]
