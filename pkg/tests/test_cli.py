import json

import numpy as np
import pytest

from bdnn.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_generate_and_report_round_trip(tmp_path, capsys):
    model = tmp_path / "toy.bdn"
    code, out, _ = run_cli(capsys, "generate", str(model), "--arch",
                           "toy-conv", "--seed", "3")
    assert code == 0
    code, out, _ = run_cli(capsys, "report", str(model), "--rank", "6",
                           "--qbits", "6", "--json")
    assert code == 0
    payload = json.loads(out)
    assert payload["schema"] == "bdnn.report/1"
    for entry in payload["opcount"]["layers"]:
        assert entry["and_ops"] == entry["bitcount_ops"]


def test_report_bundled_manifest(capsys):
    code, out, _ = run_cli(capsys, "report", "alexnet", "--rank", "6", "--json")
    assert code == 0
    totals = json.loads(out)["size"]["totals"]
    assert totals["conv_original_mb"] == pytest.approx(14.29, abs=0.005)
    assert totals["conv_decomposed_mb"] == pytest.approx(2.71, abs=0.005)
    assert totals["fc_decomposed_mb"] == pytest.approx(42.14, abs=0.005)


def test_decompose_deterministic_output(tmp_path, capsys):
    model = tmp_path / "m.bdn"
    run_cli(capsys, "generate", str(model), "--arch", "toy-conv", "--mode",
            "exact", "--rank", "2", "--seed", "1")
    out_a = tmp_path / "a.bdn"
    out_b = tmp_path / "b.bdn"
    for out_path in (out_a, out_b):
        code, _, _ = run_cli(capsys, "decompose", str(model), str(out_path),
                             "--rank", "2", "--restarts", "4", "--seed", "7")
        assert code == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_decompose_exact_model_reaches_zero_residual(tmp_path, capsys):
    # small per-unit D: exact recovery is inside the solver's reliable range
    model = tmp_path / "m.bdn"
    run_cli(capsys, "generate", str(model), "--arch", "toy-tiny", "--mode",
            "exact", "--rank", "2", "--seed", "5")
    out_path = tmp_path / "d.bdn"
    code, out, _ = run_cli(capsys, "decompose", str(model), str(out_path),
                           "--rank", "2", "--restarts", "32", "--seed", "0",
                           "--json")
    assert code == 0
    stats = json.loads(out)["layers"]
    assert all(rec["max_cost"] <= 1e-9 for rec in stats)


def test_compare_command(tmp_path, capsys):
    model = tmp_path / "m.bdn"
    run_cli(capsys, "generate", str(model), "--arch", "toy-conv", "--seed", "2")
    dec = tmp_path / "d.bdn"
    run_cli(capsys, "decompose", str(model), str(dec), "--rank", "4",
            "--restarts", "2", "--seed", "0")
    code, out, _ = run_cli(capsys, "compare", str(model), str(dec),
                           "--qbits", "4,8", "--inputs", "3", "--json")
    assert code == 0
    payload = json.loads(out)
    assert payload["schema"] == "bdnn.compare/1"
    assert len(payload["cells"]) == 2


def test_compare_zero_inputs_exits_zero(tmp_path, capsys):
    model = tmp_path / "m.bdn"
    run_cli(capsys, "generate", str(model), "--arch", "toy-conv", "--seed", "2")
    dec = tmp_path / "d.bdn"
    run_cli(capsys, "decompose", str(model), str(dec), "--rank", "4",
            "--restarts", "2", "--seed", "0")
    code, out, _ = run_cli(capsys, "compare", str(model), str(dec),
                           "--inputs", "0", "--json")
    assert code == 0
    assert json.loads(out)["inputs"] == 0


def test_bench_command(tmp_path, capsys):
    dec = tmp_path / "d.bdn"
    run_cli(capsys, "generate", str(dec), "--arch", "fc6", "--decomposed",
            "--rank", "2", "--seed", "0")
    code, out, _ = run_cli(capsys, "bench", str(dec), "--qbits", "2",
                           "--runs", "5", "--json")
    assert code == 0
    payload = json.loads(out)
    assert payload["schema"] == "bdnn.bench/1"
    assert payload["cells"][0]["speedup"] > 0


def test_usage_errors_exit_two(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["decompose", "in.bdn", "out.bdn", "--rank", "0"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["bench", "x.bdn", "--runs", "1"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_data_errors_exit_three(tmp_path, capsys):
    missing = tmp_path / "missing.bdn"
    code, _, err = run_cli(capsys, "report", str(missing))
    assert code == 3
    bad = tmp_path / "bad.bdn"
    bad.write_bytes(b"garbage!")
    code, _, err = run_cli(capsys, "report", str(bad))
    assert code == 3
    assert "error" in err


def test_bench_rejects_dense_container(tmp_path, capsys):
    model = tmp_path / "m.bdn"
    run_cli(capsys, "generate", str(model), "--arch", "toy-conv")
    code, _, err = run_cli(capsys, "bench", str(model), "--runs", "5")
    assert code == 3
