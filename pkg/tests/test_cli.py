import json
import os
import shutil

import numpy as np
import pytest

from patchbreak import cli, serialize


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full gen -> challenge -> attack -> score round trip."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    game = root / "game"
    runA = root / "runA"
    scored = root / "scored"
    fast = root / "fast.json"
    fast.write_text(json.dumps({"train": {"num_encoders": 24, "epochs": 12}}))

    assert run(["gen", "--style", "lowfreq", "--count", "30", "--seed", "3",
                "--out", str(data)]) == 0
    assert run(["challenge", "--dataset", str(data / "dataset.json"),
                "--n", "16", "--seed", "5", "--out", str(game)]) == 0
    assert run(["attack", "--bundle", str(game / "bundle"),
                "--config", str(fast), "--seed", "1", "--csv",
                "--out", str(runA)]) == 0
    assert run(["score", "--guess", str(runA / "guess.json"),
                "--solution", str(game / "solution"), "--csv",
                "--out", str(scored)]) == 0
    return root


def test_pipeline_outputs_exist(pipeline):
    expected = [
        "data/dataset.json", "data/dataset.bin", "data/run.json",
        "game/bundle/originals.json", "game/bundle/encodings.json",
        "game/solution/solution.json", "game/solution/key.json",
        "runA/guess.json", "runA/report.json", "runA/timings.json",
        "runA/stages.csv", "runA/guess.csv",
        "scored/score.json", "scored/flags.csv",
    ]
    for rel in expected:
        assert (pipeline / rel).exists(), rel


def test_pipeline_score_is_strong(pipeline):
    score = serialize.read_json(pipeline / "scored" / "score.json")
    assert score["n"] == 16
    assert score["score"] >= 12


def test_guess_file_structure(pipeline):
    guess = serialize.read_json(pipeline / "runA" / "guess.json")
    assert guess["kind"] == "guess"
    assert guess["n"] == 16
    assert sorted(guess["guess"]) == list(range(16))


def test_run_manifest_audits_inputs(pipeline):
    manifest = serialize.read_json(pipeline / "runA" / "run.json")
    assert manifest["subcommand"] == "attack"
    assert manifest["config"]["seed"] == 1
    inputs = manifest["inputs"]
    names = {os.path.basename(p) for p in inputs}
    assert {"originals.json", "originals.bin",
            "encodings.json", "encodings.bin", "fast.json"} <= names
    for digest in inputs.values():
        assert len(digest) == 64 and set(digest) <= set("0123456789abcdef")
    import patchbreak
    assert manifest["version"] == patchbreak.__version__


def test_gen_manifest_hashes_pull_binary_sibling(pipeline):
    manifest = serialize.read_json(pipeline / "game" / "run.json")
    names = {os.path.basename(p) for p in manifest["inputs"]}
    assert {"dataset.json", "dataset.bin"} <= names


def test_attack_reports_are_byte_stable(pipeline, tmp_path):
    runB = tmp_path / "runB"
    fast = pipeline / "fast.json"
    assert run(["attack", "--bundle", str(pipeline / "game" / "bundle"),
                "--config", str(fast), "--seed", "1",
                "--out", str(runB)]) == 0
    for name in ("guess.json", "report.json"):
        a = (pipeline / "runA" / name).read_bytes()
        b = (runB / name).read_bytes()
        assert a == b, name


def test_attack_refuses_solution_dir(pipeline, tmp_path, capsys):
    leaky = tmp_path / "leaky"
    shutil.copytree(pipeline / "game" / "bundle", leaky)
    shutil.copy(pipeline / "game" / "solution" / "solution.json", leaky)
    fast = pipeline / "fast.json"
    code = run(["attack", "--bundle", str(leaky), "--config", str(fast),
                "--out", str(tmp_path / "out")])
    assert code == 6
    err = json.loads(capsys.readouterr().err)
    assert err["code"] == 6 and err["error"] == "HygieneError"
    assert "solution.json" in err["message"]
    shutil.copy(pipeline / "game" / "solution" / "solution.bin", leaky)
    assert run(["attack", "--bundle", str(leaky), "--config", str(fast),
                "--allow-oracle", "--out", str(tmp_path / "out")]) == 0


def test_missing_inputs_exit_3(tmp_path, capsys):
    code = run(["attack", "--bundle", str(tmp_path / "nope"),
                "--out", str(tmp_path)])
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"
    assert run(["score", "--guess", str(tmp_path / "ghost.json"),
                "--solution", str(tmp_path), "--out", str(tmp_path)]) == 3
    assert run(["gen", "--style", "import", "--path", str(tmp_path / "pgms"),
                "--out", str(tmp_path)]) == 3


def test_malformed_guess_exits_4(pipeline, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"foo": 1}))
    code = run(["score", "--guess", str(bad),
                "--solution", str(pipeline / "game" / "solution"),
                "--out", str(tmp_path)])
    assert code == 4
    assert json.loads(capsys.readouterr().err)["error"] == "ValidationError"


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    code = run(["gen", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "bogus" in err["message"]


def test_bad_thread_count_exits_2(tmp_path):
    assert run(["gen", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_gen_count_zero_and_empty_challenge(tmp_path, capsys):
    data = tmp_path / "empty"
    assert run(["gen", "--count", "0", "--out", str(data)]) == 0
    assert "wrote 0 images" in capsys.readouterr().out
    code = run(["challenge", "--dataset", str(data / "dataset.json"),
                "--n", "4", "--out", str(tmp_path / "game")])
    assert code == 2
    assert "outside" in json.loads(capsys.readouterr().err)["message"]


def test_gen_import_pgm_directory(tmp_path):
    src = tmp_path / "pgms"
    src.mkdir()
    gen = np.random.default_rng(0)
    for name in ("a.pgm", "b.pgm"):
        pixels = gen.integers(0, 256, size=(32, 32), dtype=np.uint8)
        (src / name).write_bytes(b"P5\n32 32\n255\n" + pixels.tobytes())
    out = tmp_path / "ds"
    assert run(["gen", "--style", "import", "--path", str(src),
                "--out", str(out)]) == 0
    manifest = serialize.read_json(out / "dataset.json")
    assert manifest["meta"]["count"] == 2
    assert manifest["meta"]["seed"] is None
    run_info = serialize.read_json(out / "run.json")
    names = {os.path.basename(p) for p in run_info["inputs"]}
    assert {"a.pgm", "b.pgm"} <= names


def test_theory_nia_smoke(tmp_path, capsys):
    out = tmp_path / "nia"
    assert run(["theory", "nia", "--n", "8", "--threshold", "4",
                "--trials", "400", "--out", str(out), "--csv"]) == 0
    result = serialize.read_json(out / "result.json")
    assert result["game"] == "nia" and result["trials"] == 400
    assert abs(result["advantage"]) <= 0.5
    assert (out / "result.csv").exists()
    assert "advantage" in capsys.readouterr().out


def test_theory_nia_identity_equality_wins(tmp_path):
    out = tmp_path / "idnia"
    assert run(["theory", "nia", "--scheme", "identity",
                "--adversary", "equality", "--n", "8", "--threshold", "4",
                "--trials", "200", "--out", str(out)]) == 0
    assert serialize.read_json(out / "result.json")["advantage"] == 0.5


def test_theory_cia_smoke(tmp_path):
    out = tmp_path / "cia"
    assert run(["theory", "cia", "--n", "8", "--threshold", "4",
                "--trials", "150", "--out", str(out)]) == 0
    result = serialize.read_json(out / "result.json")
    assert result["game"] == "cia"
    assert abs(result["advantage"]) <= 4 * result["standard_error"]


def test_theory_unknown_adversary_exits_2(tmp_path):
    assert run(["theory", "cia", "--adversary", "equality",
                "--out", str(tmp_path)]) == 2
    assert run(["theory", "nia", "--adversary", "nope",
                "--out", str(tmp_path)]) == 2


def test_theory_bad_threshold_exits_2(tmp_path):
    assert run(["theory", "nia", "--n", "8", "--threshold", "8",
                "--trials", "10", "--out", str(tmp_path)]) == 2


def test_theory_pred_smoke(tmp_path):
    out = tmp_path / "pred"
    assert run(["theory", "pred", "--n", "8", "--threshold", "4",
                "--m", "40", "--T", "5", "--queries", "60",
                "--out", str(out)]) == 0
    result = serialize.read_json(out / "result.json")
    assert 0.0 <= result["risk"] <= 1.0
    assert result["balanced_accuracy"] >= 0.75
    assert result["dist"] == "uniform"


def test_theory_pred_skewed_smoke(tmp_path):
    out = tmp_path / "predsk"
    assert run(["theory", "pred", "--n", "8", "--threshold", "4",
                "--m", "40", "--T", "5", "--queries", "60",
                "--dist", "skewed", "--out", str(out)]) == 0
    assert serialize.read_json(out / "result.json")["dist"] == "skewed"


def test_theory_pred_impossible_target_exits_5(tmp_path, capsys):
    code = run(["theory", "pred", "--n", "8", "--threshold", "4",
                "--m", "4", "--T", "1", "--queries", "1", "--eps", "0.6",
                "--out", str(tmp_path)])
    assert code == 5
    assert json.loads(capsys.readouterr().err)["error"] == "ExtractionError"


def test_theory_challenge2_smoke(tmp_path, capsys):
    out = tmp_path / "c2"
    assert run(["theory", "challenge2", "--n", "6", "--a2", "64", "256",
                "--N", "8", "--trials", "10", "--out", str(out), "--csv"]) == 0
    result = serialize.read_json(out / "result.json")
    assert [r["a2"] for r in result["rows"]] == [64, 256]
    assert all(r["reconstruction"] for r in result["rows"])
    assert "reconstruction=True" in capsys.readouterr().out
