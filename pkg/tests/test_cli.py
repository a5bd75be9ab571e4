import json
import math

import pytest

from printids import errors
from printids.capture import write_pcap
from printids.cli import CONTEXT_FEATURES, main
from printids.dataset import load_csv, save_csv
from printids.features import FEATURE_NAMES


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def small_pcap(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    pcap = d / "fifty.pcap"
    assert main(["synth", "--seed", "8", "--n-benign", "30", "--n-malicious", "20",
                 "--pcap", str(pcap), "--csv", str(d / "fifty.csv")]) == 0
    return pcap


@pytest.fixture(scope="module")
def tree_model(full_corpus, tmp_path_factory):
    d = tmp_path_factory.mktemp("model")
    csv_path = d / "corpus.csv"
    save_csv(full_corpus.dataset, csv_path)
    model = d / "tree.json"
    assert main(["train", str(csv_path), "--kind", "decision_tree_c45", "--model-out", str(model)]) == 0
    return model


def test_error_kinds_have_distinct_exit_codes():
    kinds = [errors.PcapFormatError, errors.UnsupportedFormatError, errors.SchemaError, errors.CsvParseError,
             errors.TrainingError, errors.ContractError, errors.ArgumentError, errors.ModelFormatError]
    codes = [k.exit_code for k in kinds]
    assert len(set(codes)) == len(codes) and 0 not in codes and 2 not in codes


def test_extract_empty_pcap(tmp_path, capsys):
    pcap = tmp_path / "empty.pcap"
    write_pcap([], pcap)
    out_csv = tmp_path / "e.csv"
    code, out, _ = run(capsys, "extract", pcap, "--out", out_csv)
    assert code == 0 and out.startswith("0 sessions")
    assert out_csv.read_text() == ",".join([*FEATURE_NAMES, "label"]) + "\n"


def test_extract_synthesized_pcap(small_pcap, tmp_path, capsys):
    out_csv = tmp_path / "x.csv"
    code, _, _ = run(capsys, "extract", small_pcap, "--out", out_csv, "--label", "malicious")
    assert code == 0
    ds = load_csv(out_csv)
    assert len(ds) == 50 and set(ds.y.tolist()) == {1}
    reference = load_csv(small_pcap.with_suffix(".csv"))
    assert (ds.X == reference.X).all()


def test_missing_file_reports_path(tmp_path, capsys):
    missing = tmp_path / "nope.pcap"
    code, _, err = run(capsys, "extract", missing, "--out", tmp_path / "o.csv")
    assert code == 2 and str(missing) in err


def test_corrupt_pcap_error_line(tmp_path, capsys):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"\x01\x02\x03\x04" + b"\x00" * 20)
    code, _, err = run(capsys, "extract", bad, "--out", tmp_path / "o.csv")
    assert code == errors.PcapFormatError.exit_code
    line = err.strip()
    assert "\n" not in line
    assert line.startswith(f"printids: error[{code}] PcapFormatError: ") and str(bad) in line


def test_synth_needs_an_output(capsys):
    code, _, err = run(capsys, "synth")
    assert code == errors.ArgumentError.exit_code and "ArgumentError" in err


def test_synth_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 2, "n_benign": 4, "n_malicious": 3}))
    manifest = tmp_path / "m.json"
    code, out, _ = run(capsys, "synth", "--config", cfg, "--csv", tmp_path / "c.csv", "--manifest", manifest)
    assert code == 0 and "4 benign + 3 malicious" in out
    assert json.loads(manifest.read_text())["counts"] == {"benign": 4, "malicious": 3}


def test_select_prints_top_ten_descending(small_pcap, tmp_path, capsys):
    csv_path = small_pcap.with_suffix(".csv")
    out_csv = tmp_path / "rank.csv"
    code, out, _ = run(capsys, "select", csv_path, "--method", "info_gain", "-k", "10", "--out", out_csv)
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 10
    names = [ln.split()[1] for ln in lines]
    scores = [float(ln.split()[2]) for ln in lines]
    assert all(n in FEATURE_NAMES for n in names)
    assert scores == sorted(scores, reverse=True)
    assert out_csv.read_text().startswith("rank,feature_name,score,method\n")


def test_evaluate_prints_table_and_json(small_pcap, tmp_path, capsys):
    report = tmp_path / "r.json"
    code, out, _ = run(capsys, "evaluate", small_pcap.with_suffix(".csv"), "--folds", "5", "--seed", "1",
                       "--report-out", report, "--with-timing")
    assert code == 0
    assert "Decision Tree C4.5" in out and "Train time" in out
    doc = json.loads(report.read_text())
    assert doc["n_instances"] == 50 and "mean_training_seconds" in doc["algorithms"][0]


def test_evaluate_reports_schema_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("ack,label\n1,benign\n")
    code, _, err = run(capsys, "evaluate", bad)
    assert code == errors.SchemaError.exit_code and "missing columns" in err


def test_detect_benign_pcap_raises_no_alerts(tree_model, tmp_path, capsys):
    pcap = tmp_path / "benign.pcap"
    assert main(["synth", "--seed", "11", "--n-benign", "200", "--n-malicious", "0", "--pcap", str(pcap)]) == 0
    alerts = tmp_path / "alerts.jsonl"
    code, _, err = run(capsys, "detect", pcap, "--model", tree_model, "--alerts-out", alerts)
    assert code == 0
    assert "0 alerts from 200 sessions" in err
    assert alerts.read_text() == ""


def test_detect_alert_stream(tree_model, small_pcap, capsys):
    code, out, err = run(capsys, "detect", small_pcap, "--model", tree_model)
    assert code == 0
    alerts = [json.loads(line) for line in out.splitlines()]
    assert 15 <= len(alerts) <= 25  # the capture holds 20 attack sessions
    for a in alerts:
        assert a["label"] == "malicious"
        assert a["malicious_score"] >= a["threshold"] == 0.5
        assert set(a["context"]) == set(CONTEXT_FEATURES)
        assert a["model"]["kind"] == "decision_tree_c45"
        assert set(a["session"]) == {"addr_a", "port_a", "addr_b", "port_b"}
    starts = [a["start_time"] for a in alerts]
    assert starts == sorted(starts)


def test_detect_threshold_override(tree_model, small_pcap, capsys):
    code, out, err = run(capsys, "detect", small_pcap, "--model", tree_model, "--threshold", "0")
    assert code == 0 and len(out.splitlines()) == 50
    code, out, _ = run(capsys, "detect", small_pcap, "--model", tree_model, "--threshold", "1.01")
    assert code == 0 and out == ""


def test_top_k_model_detects_on_full_pcap(small_pcap, tmp_path, capsys):
    model = tmp_path / "svm10.json"
    code, _, _ = run(capsys, "train", small_pcap.with_suffix(".csv"), "--kind", "linear_svm",
                     "--top-k", "10", "--model-out", model)
    assert code == 0
    assert len(json.loads(model.read_text())["schema"]) == 10
    code, out, _ = run(capsys, "detect", small_pcap, "--model", model)
    assert code == 0
    for line in out.splitlines():
        a = json.loads(line)
        assert a["malicious_score"] >= 0.0 and math.isfinite(a["malicious_score"])


def test_detect_rejects_bad_model(small_pcap, tmp_path, capsys):
    model = tmp_path / "junk.json"
    model.write_text('{"format": "other"}')
    code, _, err = run(capsys, "detect", small_pcap, "--model", model)
    assert code == errors.ModelFormatError.exit_code and "ModelFormatError" in err
