import json

import pytest

from tep_tariffs.cli import EXIT_INVALID, EXIT_OK, run


@pytest.fixture
def two_node(tmp_path):
    path = tmp_path / "two.json"
    assert run(["generate", "--two-node", "--step", "2", "--lumpy", "6,12,18,24,30",
                "--out", str(path)]) == EXIT_OK
    return path


def test_solve_then_verify(two_node, tmp_path, capsys):
    out = tmp_path / "csrl.json"
    assert run(["solve", str(two_node), "--scheme", "csrl", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["scheme"] == "CSR-L"
    assert doc["revenue_imbalance"] >= 0
    assert run(["verify", str(two_node), str(out)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "OK"


def test_tampered_result_fails(two_node, tmp_path, capsys):
    out = tmp_path / "ts.json"
    assert run(["solve", str(two_node), "--scheme", "ts", "--tau-step", "2", "--tau-max", "10",
                "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    doc["outcome"]["pi"][0][0] += 5.0
    out.write_text(json.dumps(doc))
    assert run(["verify", str(two_node), str(out)]) == EXIT_INVALID
    text = capsys.readouterr().out
    assert text.startswith("FAILED")


def test_tampered_figure_fails(two_node, tmp_path, capsys):
    out = tmp_path / "cs.json"
    run(["solve", str(two_node), "--scheme", "cs", "--out", str(out)])
    doc = json.loads(out.read_text())
    doc["welfare"] += 1.0
    out.write_text(json.dumps(doc))
    assert run(["verify", str(two_node), str(out)]) == EXIT_INVALID
    assert "welfare" in capsys.readouterr().out


def test_compare_csv(two_node, capsys):
    assert run(["compare", str(two_node), "--schemes", "cs,csrl", "--format", "csv"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("Scheme,Expansion,Social Welfare")
    assert [ln.split(",")[0] for ln in lines[1:]] == ["CS", "CSR-L"]


def test_report_curves(two_node, capsys):
    assert run(["report", str(two_node), "--format", "csv"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("curve,quantity,price")


def test_garver_csrl_is_revenue_adequate(tmp_path):
    inst = tmp_path / "garver.json"
    assert run(["generate", "--garver", "--seed", "1", "--per-node", "3", "--lumpy", "10:50:10",
                "--out", str(inst)]) == EXIT_OK
    out = tmp_path / "res.json"
    assert run(["solve", str(inst), "--scheme", "csrl", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["revenue_imbalance"] >= -1e-6
    assert run(["verify", str(inst), str(out)]) == EXIT_OK


def test_bad_inputs_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": [0]')
    assert run(["solve", str(bad), "--scheme", "cs"]) == EXIT_INVALID
    assert run(["solve", str(tmp_path / "missing.json"), "--scheme", "cs"]) == EXIT_INVALID
    bad.write_text(json.dumps({"nodes": [0, 1], "lines": [], "periods": [{"id": 0}], "bids": []}))
    assert run(["solve", str(bad), "--scheme", "cs"]) == EXIT_INVALID
    assert "disconnected" in capsys.readouterr().err


def test_unknown_scheme_in_compare(two_node):
    assert run(["compare", str(two_node), "--schemes", "cs,xyz"]) == EXIT_INVALID


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as err:
        run(["solve"])
    assert err.value.code == 2
