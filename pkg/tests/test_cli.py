import json

import pytest

from svctriage.cli import main
from svctriage.records import read_records

SMALL_CONFIG = {
    "seed": 17,
    "top_k": 40,
    "chi2_keep": 120,
    "corr_threshold": 0.95,
    "token_vocab_size": 800,
    "folds": 3,
    "router_kind": "gtb",
    "router_params": {"n_stages": 6, "learning_rate": 0.4, "max_depth": 3},
    "net": {
        "seq_len": 20, "embed_dim": 10, "filter_sizes": [2, 3],
        "filters_per_size": 6, "lstm_hidden": 6, "dense_dim": 10,
        "dropout_p": 0.1, "batch_size": 32, "epochs": 2, "learning_rate": 0.12,
    },
    "synth": {"n_records": 150, "noise_rate": 0.05, "abbreviation_rate": 0.3},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    config.write_text(json.dumps(SMALL_CONFIG), encoding="utf-8")
    data = root / "data"
    models = root / "models"
    assert main(["synth", "--config", str(config), "--out", str(data)]) == 0
    assert main(["train", "--config", str(config), "--out", str(models),
                 str(data / "corpus.jsonl")]) == 0
    return root, config, data, models


def test_synth_outputs_corpus_and_truth(workspace):
    root, config, data, models = workspace
    records, issues = read_records(data / "corpus.jsonl")
    assert issues == []
    assert len(records) == 150
    truth_lines = [
        l for l in (data / "truth.tsv").read_text().splitlines()
        if l and not l.startswith("#")
    ]
    assert len(truth_lines) == 150
    head = (data / "corpus.jsonl").read_text().splitlines()[0]
    assert head.startswith("# fingerprint =")
    manifest = (data / "synth_manifest.txt").read_text()
    assert "fingerprint" in manifest and "seed = 17" in manifest


def test_synth_deterministic_across_runs(workspace, tmp_path):
    root, config, data, models = workspace
    again = tmp_path / "again"
    assert main(["synth", "--config", str(config), "--out", str(again)]) == 0
    assert (again / "corpus.jsonl").read_bytes() == (data / "corpus.jsonl").read_bytes()
    assert (again / "truth.tsv").read_bytes() == (data / "truth.tsv").read_bytes()


def test_synth_invalid_mix_exit_2_names_field(tmp_path, capsys):
    bad = dict(SMALL_CONFIG)
    bad["synth"] = {
        "n_records": 10,
        "class_mix": {"Boom": 0.5, "Chassis": 0.4},
    }
    config = tmp_path / "bad.json"
    config.write_text(json.dumps(bad), encoding="utf-8")
    code = main(["synth", "--config", str(config), "--out", str(tmp_path / "out")])
    captured = capsys.readouterr()
    assert code == 2
    assert "class_mix" in captured.err


def test_train_artifacts(workspace):
    root, config, data, models = workspace
    for name in ("validator.model", "router.model", "vocabulary.tsv",
                 "training_curves.png", "train_report.txt"):
        assert (models / name).exists(), name
    report = (models / "train_report.txt").read_text()
    assert "training-set" in report
    assert "fingerprint" in report


def test_eval_reports_and_figures(workspace):
    root, config, data, models = workspace
    out = root / "eval"
    code = main(["eval", "--config", str(config), "--models", str(models),
                 "--out", str(out), str(data / "corpus.jsonl")])
    assert code == 0
    validation = (out / "validation_report.txt").read_text()
    routing = (out / "routing_report.txt").read_text()
    for column in ("Accuracy", "Sensitivity", "Specificity", "Precision", "F-score"):
        assert column in validation
        assert column in routing
    fold_lines = [l for l in validation.splitlines() if l.startswith("fold ")]
    assert len(fold_lines) == 3
    assert (out / "validation_roc.png").exists()
    assert (out / "routing_roc.png").exists()
    assert (out / "chi2_top.png").exists()
    assert (out / "correlation_heatmap.png").exists()
    roc_files = list(out.glob("roc_validation_*.tsv"))
    assert roc_files
    lines = roc_files[0].read_text().splitlines()
    assert lines[0].startswith("# fingerprint =")
    assert lines[1] == "fpr\ttpr"


def test_eval_confusion_totals_match_corpus(workspace):
    root, config, data, models = workspace
    out = root / "eval_totals"
    assert main(["eval", "--config", str(config), "--models", str(models),
                 "--out", str(out), str(data / "corpus.jsonl")]) == 0
    text = (out / "validation_report.txt").read_text()
    section = text.split("# confusion matrix")[1].splitlines()[2:5]
    total = sum(int(v) for line in section for v in line.split("\t")[1:])
    assert total == 150


def test_eval_refuses_featurization_mismatch(workspace, capsys):
    root, config, data, models = workspace
    code = main(["eval", "--config", str(config), "--ablate-domain-nlp",
                 "--models", str(models), "--out", str(root / "bad"),
                 str(data / "corpus.jsonl")])
    captured = capsys.readouterr()
    assert code == 2
    assert "featurization" in captured.err


def test_route_stream_contract(workspace, capsys):
    root, config, data, models = workspace
    code = main(["route", "--config", str(config), "--models", str(models),
                 str(data / "corpus.jsonl")])
    captured = capsys.readouterr()
    assert code == 0
    lines = [l for l in captured.out.splitlines() if l.strip()]
    records, _ = read_records(data / "corpus.jsonl")
    decisions = [json.loads(l) for l in lines]
    # ids round-trip exactly in input order
    assert [d["id"] for d in decisions] == [r.id for r in records]
    for d in decisions:
        if d["verdict"] != "Valid":
            assert d["department"] is None


def test_route_handles_malformed_lines(workspace, tmp_path, capsys):
    root, config, data, models = workspace
    stream = tmp_path / "stream.jsonl"
    good = next(
        l for l in (data / "corpus.jsonl").read_text().splitlines()
        if l and not l.startswith("#")
    )
    stream.write_text("{broken\n" + good + "\n", encoding="utf-8")
    code = main(["route", "--config", str(config), "--models", str(models), str(stream)])
    captured = capsys.readouterr()
    assert code == 0
    lines = captured.out.splitlines()
    assert len(lines) == 2
    first = json.loads(lines[0])
    assert first["verdict"] == "Error"
    assert first["error"]
    assert json.loads(lines[1])["verdict"] in ("Valid", "False", "Vague")


def test_route_empty_input(workspace, tmp_path, capsys):
    root, config, data, models = workspace
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    code = main(["route", "--config", str(config), "--models", str(models), str(empty)])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out.strip() == ""


def test_route_text_format(workspace, capsys):
    root, config, data, models = workspace
    code = main(["route", "--config", str(config), "--models", str(models),
                 "--format", "text", str(data / "corpus.jsonl")])
    captured = capsys.readouterr()
    assert code == 0
    first = captured.out.splitlines()[0]
    assert first.count("\t") >= 2


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["eval"])  # missing required arguments
    assert exc.value.code == 1
    assert main([]) == 1


def test_missing_corpus_exit_2(workspace, capsys):
    root, config, data, models = workspace
    code = main(["train", "--config", str(config), "--out", str(root / "x"),
                 str(root / "nope.jsonl")])
    assert code == 2


def test_inspect_lexicon(capsys):
    assert main(["inspect-lexicon"]) == 0
    captured = capsys.readouterr()
    assert "abbreviations" in captured.out
    assert "upper valve" in captured.out


def test_no_validation_flag_runs_eval_on_all_records(workspace):
    root, config, data, models = workspace
    out = root / "eval_noval"
    code = main(["eval", "--config", str(config), "--no-validation",
                 "--models", str(models), "--out", str(out),
                 str(data / "corpus.jsonl")])
    assert code == 0
    text = (out / "routing_report.txt").read_text()
    section = text.split("# confusion matrix")[1].splitlines()[2:17]
    total = sum(int(v) for line in section for v in line.split("\t")[1:])
    # every record with a known non-Vague department is routed, not just Valid
    records, _ = read_records(data / "corpus.jsonl")
    eligible = sum(1 for r in records if r.department not in ("Vague", "unknown"))
    assert total == eligible
