import json

import pytest

from raverify.cli import main
from raverify.program_ir import classify, parse_system
from raverify.reductions import circuit_from_literals


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_prints_classification(capsys):
    code, out, _ = run(capsys, "parse", "dekker")
    assert code == 0
    assert "# t1: dis acyc nocas" in out and "# t2: dis acyc nocas" in out


def test_parse_error_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.ra"
    bad.write_text("vars x; domain 2; regs r; dis t { store x }", encoding="utf-8")
    code, _, err = run(capsys, "parse", str(bad))
    assert code == 3 and "error" in err


def test_missing_file_is_usage_error(capsys):
    code, _, err = run(capsys, "parse", "no_such_program.ra")
    assert code == 3 and "no such file" in err


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["verify", "dekker", "--engine", "magic"])
    assert info.value.code == 3


@pytest.mark.parametrize("engine", ["simplified", "datalog"])
def test_dekker_unsafe_with_witness(engine, tmp_path, capsys):
    witness = tmp_path / "w.json"
    code, out, _ = run(capsys, "verify", "dekker.ra", "--engine", engine,
                       "--witness", str(witness))
    assert code == 1 and out.startswith("UNSAFE")
    code, out, _ = run(capsys, "validate", "dekker", str(witness))
    assert code == 0 and out.strip() == "Valid"


def test_dekker_concrete_counterexample(tmp_path, capsys):
    witness = tmp_path / "w.json"
    code, out, _ = run(capsys, "verify", "dekker", "--engine", "concrete", "--nenv", "0",
                       "--max-depth", "12", "--witness", str(witness))
    assert code == 1
    data = json.loads(witness.read_text(encoding="utf-8"))
    assert data["semantics"] == "concrete" and len(data["steps"]) == 12
    assert run(capsys, "validate", "dekker", str(witness))[0] == 0


def test_loopy_dis_rejected_by_datalog_engine(tmp_path, capsys):
    loopy = tmp_path / "loopy.ra"
    loopy.write_text("vars x; domain 2; regs r; dis t { loop { store x 1 }; assert(false) }",
                     encoding="utf-8")
    code, _, err = run(capsys, "verify", str(loopy), "--engine", "datalog")
    assert code == 3 and "dis not acyc" in err


def test_prodcons_leader_engine(capsys):
    code, out, _ = run(capsys, "verify", "prodcons.ra", "--engine", "leader", "--l", "2",
                       "--z", "3")
    assert code == 1 and "UNSAFE" in out


def test_engine_class_mismatch(capsys):
    code, _, err = run(capsys, "verify", "dekker", "--engine", "leader")
    assert code == 3 and "class error" in err


def test_safe_and_unknown_exit_codes(tmp_path, capsys):
    src = tmp_path / "safe.ra"
    src.write_text("vars x, y; domain 2; regs r; dis t { store x 1 }", encoding="utf-8")
    assert run(capsys, "verify", str(src), "--goal", "y=1")[0] == 0
    assert run(capsys, "verify", str(src), "--goal", "y=1", "--engine", "concrete",
               "--nenv", "0", "--max-depth", "4")[0] == 0
    code, out, _ = run(capsys, "verify", "dekker", "--engine", "concrete", "--nenv", "0",
                       "--max-depth", "5")
    assert code == 2 and "UNKNOWN" in out
    code, out, _ = run(capsys, "verify", "dekker", "--max-nodes", "2")
    assert code == 2


def test_goal_required_without_assert(capsys):
    code, _, err = run(capsys, "verify", "smoke", "--goal", "zz=1")
    assert code == 3
    code, _, err = run(capsys, "verify", "smoke", "--goal", "y1")
    assert code == 3 and "VAR=VALUE" in err


def test_datalog_cache_and_emission(tmp_path, capsys):
    path = tmp_path / "inst.dl"
    code, out, _ = run(capsys, "verify", "smoke", "--engine", "datalog", "--emit-datalog",
                       str(path), "--cache-k", "8", "--emit-linear", "3")
    assert code == 1
    assert "cache size 8: True" in out
    assert path.exists() and (tmp_path / "inst.dl.linear3").exists()


def test_simulate_is_deterministic_and_replays(tmp_path, capsys):
    code, first, _ = run(capsys, "simulate", "smoke", "--max-depth", "3", "--seed", "4")
    assert code == 0
    assert len(json.loads(first)["steps"]) == 3
    _, second, _ = run(capsys, "simulate", "smoke", "--max-depth", "3", "--seed", "4")
    assert first == second
    trace = tmp_path / "t.json"
    trace.write_text(first, encoding="utf-8")
    assert run(capsys, "validate", "smoke", str(trace)) == (0, "Valid\n", "")


def test_validate_reports_broken_trace(tmp_path, capsys):
    _, text, _ = run(capsys, "simulate", "smoke", "--max-depth", "3")
    data = json.loads(text)
    data["steps"][0]["msgs"][0]["val"] = 0
    trace = tmp_path / "t.json"
    trace.write_text(json.dumps(data), encoding="utf-8")
    code, out, _ = run(capsys, "validate", "smoke", str(trace))
    assert code == 1 and out.startswith("Invalid at step 0")


def test_encode_writes_instances(tmp_path, capsys):
    code, out, _ = run(capsys, "encode", "smoke", "--goal", "y=1", "--emit-datalog",
                       str(tmp_path / "out"), "--max-guesses", "3")
    assert code == 0
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert files and len(files) <= 3 and files[0] == "instance_0001.dl"


def test_generate_qbf(tmp_path, capsys):
    path = tmp_path / "q.ra"
    code, _, err = run(capsys, "generate", "qbf", "--n", "1", "--clauses",
                       "u0 | -e1 | u1 & -u0 | e1 | u1", "--emit-program", str(path))
    assert code == 0 and "goal:" in err
    s = parse_system(path.read_text(encoding="utf-8"))
    assert classify(s.env) == (True, True)
    code, _, err = run(capsys, "generate", "qbf", "--clauses", "u0 | q7")
    assert code == 3


def test_generate_dis2env_of_dekker(tmp_path, capsys):
    path = tmp_path / "e.ra"
    assert run(capsys, "generate", "dis2env", "dekker", "--emit-program", str(path))[0] == 0
    s = parse_system(path.read_text(encoding="utf-8"))
    assert s.threads == () and classify(s.env).acyc


def test_generate_ssat(tmp_path, capsys):
    circuit = tmp_path / "c.json"
    circuit.write_text(circuit_from_literals(1, [[(0, 1)] * 3, [(1, 1)] * 3]).to_json(),
                       encoding="utf-8")
    code, out, _ = run(capsys, "generate", "ssat", "--circuit", str(circuit))
    assert code == 0
    s = parse_system(out.split("\n", 1)[1])
    assert classify(s.env) == (True, True)
    assert [t.role for t in s.threads] == ["ldr"]
    circuit.write_text("{}", encoding="utf-8")
    assert run(capsys, "generate", "ssat", "--circuit", str(circuit))[0] == 3


def test_examples_listing(capsys):
    code, out, _ = run(capsys, "examples")
    assert code == 0 and out.split() == ["dekker", "prodcons", "smoke"]
    code, out, _ = run(capsys, "examples", "smoke")
    assert code == 0 and "store x 1" in out
    assert run(capsys, "examples", "nothing")[0] == 3
