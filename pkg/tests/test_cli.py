"""CLI harness: records, schemas, CSV, exit codes, determinism."""

import csv
import io
import json
from contextlib import redirect_stderr, redirect_stdout

import jsonschema
import pytest

from twowayfa import lm
from twowayfa.cli import main, load_schema, RUN_CSV_HEADER, SWEEP_CSV_HEADER
from twowayfa.machines import save_machine


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def invoke_json(*argv):
    code, out, err = invoke(*argv)
    assert code == 0, err
    return json.loads(out)


SCHEMA = load_schema()


def test_run_record_validates_and_member_never_rejects():
    rec = invoke_json("run", "--machine", "qcfa-lm:0.25", "--input", "aca",
                      "--trials", "1000", "--seed", "3", "--max-steps", "200000")
    jsonschema.validate(rec, SCHEMA)
    assert rec["stats"]["rejects"] == 0
    assert rec["stats"]["accepts"] + rec["stats"]["timeouts"] == 1000
    assert rec["machine"]["params"]["k"] == 3


def test_run_is_byte_deterministic():
    args = ("run", "--machine", "pfa-lm:1", "--input", "aca",
            "--trials", "400", "--seed", "17")
    _, out1, _ = invoke(*args)
    _, out2, _ = invoke(*args)
    assert out1 == out2


def test_run_even_length_rejects_immediately():
    rec = invoke_json("run", "--machine", "pfa-lm:2", "--input", "ab",
                      "--trials", "200", "--seed", "0")
    stats = rec["stats"]
    assert stats["rejects"] == 200
    assert stats["steps_mean"] == 4.0  # nothing beyond the parity pass


def test_run_csv_append(tmp_path):
    path = tmp_path / "runs.csv"
    for seed in ("1", "2"):
        code, _, _ = invoke("run", "--machine", "pfa-lm:1", "--input", "aca",
                            "--trials", "50", "--seed", seed, "--out", str(path))
        assert code == 0
    rows = list(csv.reader(path.open()))
    assert rows[0] == RUN_CSV_HEADER
    assert len(rows) == 3


def test_analyze_pfa_matches_exact_geometry():
    rec = invoke_json("analyze", "--machine", "pfa-lm:2", "--input", "aca")
    jsonschema.validate(rec, SCHEMA)
    p_r, p_a = lm.pfa_iteration_probs(1, 1, 2)
    assert rec["exact"]["p_accept"] == pytest.approx(float(p_a / (p_a + p_r)), abs=1e-9)
    assert rec["exact"]["expected_steps"] > 0


def test_analyze_qcfa_nonmember_bound():
    rec = invoke_json("analyze", "--machine", "qcfa-lm:0.25", "--input", "acaa",
                      "--tail-tol", "1e-6", "--max-steps", "100000")
    assert rec["exact"]["p_reject"] >= 0.75
    assert rec["exact"]["residual"] < 1e-6


def test_analyze_diverging_machine_file(tmp_path):
    from twowayfa.core import LEFT_ENDMARKER, RIGHT_ENDMARKER
    from twowayfa.machines import CoinDistribution, Pfa2

    tr = {}
    for sym in ("a", LEFT_ENDMARKER):
        tr[("spin", sym)] = CoinDistribution.deterministic("spin", 0)
    tr[("spin", RIGHT_ENDMARKER)] = CoinDistribution.deterministic("spin", 0)
    loop = Pfa2(("spin", "acc", "rej"), ("a",), "spin",
                frozenset({"acc"}), frozenset({"rej"}), tr)
    path = tmp_path / "loop.json"
    save_machine(loop, str(path))
    rec = invoke_json("analyze", "--machine", f"file:{path}", "--input", "a")
    assert rec["exact"]["p_diverge"] == pytest.approx(1.0)
    assert rec["exact"]["expected_steps"] is None


def test_run_machine_file_roundtrip(tmp_path):
    path = tmp_path / "m.json"
    save_machine(lm.build_lm_pfa(1), str(path))
    rec = invoke_json("run", "--machine", f"file:{path}", "--input", "ab",
                      "--trials", "10", "--seed", "0")
    assert rec["stats"]["rejects"] == 10


def test_analyze_qcfa_machine_file(tmp_path):
    path = tmp_path / "q.json"
    save_machine(lm.build_lm_qcfa(0.25), str(path))
    rec = invoke_json("analyze", "--machine", f"file:{path}", "--input", "acaa",
                      "--tail-tol", "1e-6", "--max-steps", "100000")
    direct = invoke_json("analyze", "--machine", "qcfa-lm:0.25", "--input", "acaa",
                         "--tail-tol", "1e-6", "--max-steps", "100000")
    assert rec["exact"] == direct["exact"]


def test_sweep_csv_and_record(tmp_path):
    path = tmp_path / "sweep.csv"
    rec = invoke_json("sweep", "--machine", "pfa-lm:1", "--family", "member",
                      "--sizes", "1:3", "--trials", "60", "--seed", "4",
                      "--out", str(path))
    jsonschema.validate(rec, SCHEMA)
    assert [row["l"] for row in rec["sweep"]["rows"]] == [3, 5, 7]
    assert rec["sweep"]["slope_kind"] == "log2steps-vs-l"
    assert rec["sweep"]["slope"] > 0
    rows = list(csv.reader(path.open()))
    assert rows[0] == SWEEP_CSV_HEADER
    assert rows[-1][0] == "fit"
    assert float(rows[-1][-1]) == pytest.approx(rec["sweep"]["slope"])
    assert [r[0] for r in rows[1:-1]] == ["size", "size", "size"]


def test_sweep_nonmember_family():
    rec = invoke_json("sweep", "--machine", "qcfa-lm:0.25", "--family", "nonmember",
                      "--sizes", "1,2", "--delta", "2", "--trials", "50", "--seed", "9")
    assert [row["input"] for row in rec["sweep"]["rows"]] == ["acaaa", "aacaaaa"]
    assert rec["sweep"]["slope_kind"] == "loglog-steps-vs-l"


def test_sweep_zero_trials_is_usage_error():
    code, _, err = invoke("sweep", "--machine", "pfa-lm:1", "--family", "member",
                          "--sizes", "1:2", "--trials", "0", "--seed", "1")
    assert code == 2
    assert "trials" in err


def test_bad_input_symbol_is_usage_error():
    code, _, _ = invoke("run", "--machine", "qcfa-lm:0.25", "--input", "axa",
                        "--trials", "5", "--seed", "1")
    assert code == 2


def test_bad_machine_spec_is_usage_error():
    code, _, _ = invoke("run", "--machine", "mystery:3", "--input", "a",
                        "--trials", "5", "--seed", "1")
    assert code == 2
    code, _, _ = invoke("run", "--machine", "qcfa-lm", "--input", "a",
                        "--trials", "5", "--seed", "1")
    assert code == 2


def test_unwritable_out_is_io_error(tmp_path):
    code, _, _ = invoke("run", "--machine", "pfa-lm:1", "--input", "aca",
                        "--trials", "5", "--seed", "1",
                        "--out", str(tmp_path / "no-such-dir" / "x.csv"))
    assert code == 3


def test_formulas_record():
    rec = invoke_json("formulas", "--d", "1", "--k", "3")
    jsonschema.validate(rec, SCHEMA)
    by_tag = {r["equation_tag"]: r["value"] for r in rec["formulas"]}
    assert by_tag["scan-mismatch-sin2"] == pytest.approx(0.9291080928344088, abs=1e-12)
    assert by_tag["scan-mismatch-floor"] == pytest.approx(1 / 3)
    assert by_tag["pfa-nonmember-reject-floor"] == pytest.approx(0.8)


def test_formulas_iteration_values():
    rec = invoke_json("formulas", "--n", "1", "--m", "1", "--k", "2")
    by_tag = {r["equation_tag"]: r["value"] for r in rec["formulas"]}
    assert by_tag["walk-iteration-accept"] == pytest.approx(1 / 64)


def test_formulas_without_params_is_usage_error():
    code, _, _ = invoke("formulas")
    assert code == 2


def test_schema_flag_prints_schema():
    code, out, _ = invoke("run", "--machine", "pfa-lm:1", "--input", "a",
                          "--schema")
    assert code == 0
    doc = json.loads(out)
    assert doc["title"] == "twowayfa experiment record"


def test_verify_only_subset():
    code, out, err = invoke("verify", "--only", "lm-member-scan-certainty",
                            "lm-gadget-fairness")
    assert code == 0
    rec = json.loads(out)
    jsonschema.validate(rec, SCHEMA)
    assert {c["name"] for c in rec["checks"]} == {"lm-member-scan-certainty",
                                                  "lm-gadget-fairness"}
    assert all(c["passed"] for c in rec["checks"])
    assert "[PASS]" in err


def test_qcfa_k_override():
    rec = invoke_json("run", "--machine", "qcfa-lm", "--k", "2", "--input", "aca",
                      "--trials", "20", "--seed", "2", "--max-steps", "100000")
    assert rec["machine"]["params"] == {"epsilon": None, "k": 2}
    assert rec["stats"]["rejects"] == 0
