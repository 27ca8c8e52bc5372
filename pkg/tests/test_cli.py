import csv
import io
import json

import pytest

from stochmatch import cli
from stochmatch.instances import EdgeArrivalInstance, gen_correlation, gen_random, gen_tightness


def read_csv(path):
    return list(csv.reader(io.StringIO(path.read_text())))


def report(path):
    return {(r[0], r[1]): r for r in read_csv(path)[1:]}


@pytest.mark.parametrize("inst", [gen_tightness(4), gen_correlation(0.01),
                                  gen_random("edge", 3), gen_random("general", 3),
                                  gen_random("vertex", 3)])
def test_round_trip(tmp_path, inst):
    path = tmp_path / "inst.json"
    cli.save_instance(inst, path)
    assert cli.load_instance(path) == inst


def test_numbers_are_decimal_strings(tmp_path):
    path = tmp_path / "t.json"
    cli.save_instance(gen_tightness(3), path)
    doc = json.loads(path.read_text())
    assert doc["format_version"] == 1 and doc["kind"] == "vertex"
    assert doc["arrivals"][0]["probability"] == repr(1 - 1 / 3)


def test_edge_kind_dispatch(tmp_path):
    path = tmp_path / "e.json"
    cli.save_instance(gen_random("edge", 1), path)
    assert isinstance(cli.load_instance(path), EdgeArrivalInstance)


def test_bad_probability_names_field(tmp_path):
    doc = cli.instance_to_dict(gen_tightness(2))
    doc["arrivals"][1]["probability"] = "1.2"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(cli.InstanceFormatError, match=r"arrivals\[1\]\.probability"):
        cli.load_instance(path)


@pytest.mark.parametrize("mutate, pattern", [
    (lambda d: d.update(kind="hypergraph"), "unknown model kind"),
    (lambda d: d.update(format_version=2), "format_version"),
    (lambda d: d["arrivals"][0].pop("edges"), r"arrivals\[0\]: missing field 'edges'"),
    (lambda d: d["arrivals"][0].update(probability="abc"), "not a decimal number"),
])
def test_format_errors(tmp_path, mutate, pattern):
    doc = cli.instance_to_dict(gen_tightness(2))
    mutate(doc)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(cli.InstanceFormatError, match=pattern):
        cli.load_instance(path)


def test_json_syntax_error_has_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "kind": vertex\n}')
    with pytest.raises(cli.InstanceFormatError, match="line 2"):
        cli.load_instance(path)


def test_gen_then_exact(tmp_path):
    inst = tmp_path / "t.json"
    assert cli.main(["gen", "--kind", "tightness", "--n", "8", "--out", str(inst)]) == 0
    out = tmp_path / "exact.csv"
    assert cli.main(["exact", "--instance", str(inst), "--out", str(out)]) == 0
    rows = report(out)
    assert read_csv(out)[0] == list(cli.REPORT_HEADER)
    lpopt, opt = float(rows["summary", "lpopt"][2]), float(rows["summary", "opt"][2])
    ratio = float(rows["summary", "ratio_alg_opt"][2])
    assert lpopt >= opt - 1e-9 and 0.6321 < ratio < 1


def test_run_reports_positive_covariance(tmp_path):
    out = tmp_path / "run.csv"
    assert cli.main(["run", "--kind", "correlation", "--epsilon", "0.01", "--trials", "5000",
                     "--out", str(out)]) == 0
    rows = report(out)
    assert float(rows["covariance", "cov[t=2:0,1]"][2]) > 0
    assert rows["summary", "mc_mean"][3] != ""
    assert ("edge", "freq[1:0]") in rows and ("edge", "x[1:0]") in rows


def test_run_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        cli.main(["run", "--kind", "vertex", "--seed", "12", "--trials", "3000", "--out", str(p)])
    assert a.read_bytes() == b.read_bytes()
    assert b"\r\n" not in a.read_bytes()


def test_solve_lp_csv(tmp_path):
    out = tmp_path / "lp.csv"
    assert cli.main(["solve-lp", "--kind", "correlation", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == list(cli.LP_HEADER) and rows[-1][0] == "objective"
    values = {r[0]: float(r[2]) for r in rows[1:-1]}
    assert values["x[0:0]"] == pytest.approx(0.5)


def test_zero_trials_is_usage_error(capsys):
    assert cli.main(["run", "--kind", "vertex", "--trials", "0"]) == cli.EXIT_USAGE
    assert "trials" in capsys.readouterr().err


def test_instance_source_must_be_unique(tmp_path):
    assert cli.main(["exact"]) == cli.EXIT_USAGE
    path = tmp_path / "t.json"
    cli.save_instance(gen_tightness(2), path)
    assert cli.main(["exact", "--instance", str(path), "--kind", "vertex"]) == cli.EXIT_USAGE


def test_missing_file_is_usage_error(tmp_path):
    assert cli.main(["exact", "--instance", str(tmp_path / "none.json")]) == cli.EXIT_USAGE


def test_bad_tolerance_is_usage_error():
    assert cli.main(["verify", "--count", "0", "--tol", "nonsense=1"]) == cli.EXIT_USAGE


def test_verify_small_corpus_passes(tmp_path):
    out = tmp_path / "v.csv"
    assert cli.main(["verify", "--count", "3", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == list(cli.VERIFY_HEADER)
    names = {r[0] for r in rows[1:]}
    assert "correlation-0.01" in names and "tightness-10" in names and "edge-3" in names
    assert all(r[5] == "true" for r in rows[1:])


def test_verify_default_corpus_passes(tmp_path):
    assert cli.main(["verify", "--out", str(tmp_path / "v.csv")]) == 0


def test_verify_corrupted_solution_fails(tmp_path, capsys):
    out = tmp_path / "v.csv"
    code = cli.main(["verify", "--count", "1", "--no-named", "--corrupt", "0.2",
                     "--out", str(out)])
    assert code == cli.EXIT_CHECK
    err = capsys.readouterr().err
    assert "free_before_arrival" in err
    dumped = sorted((tmp_path / "verify_failures").glob("*.json"))
    assert dumped
    cli.load_instance(dumped[0])


def test_gen_to_stdout(capsys):
    assert cli.main(["gen", "--kind", "correlation"]) == 0
    assert json.loads(capsys.readouterr().out)["kind"] == "vertex"


def test_solver_failure_is_numeric_error(monkeypatch):
    def boom(instance):
        raise cli.SolverError("iteration limit reached", iterations=5, phase=1)
    monkeypatch.setattr(cli, "solve_instance", boom)
    assert cli.main(["exact", "--kind", "correlation"]) == cli.EXIT_NUMERIC


def test_oversized_instance_skips_exact_rows(tmp_path):
    # 21 offline vertices exceed the exact oracles' cap; exact rows are left blank
    out = tmp_path / "big.csv"
    assert cli.main(["exact", "--kind", "tightness", "--n", "21", "--out", str(out)]) == 0
    assert report(out)["summary", "opt"][2] == ""
