import json
from pathlib import Path

import pytest

from exdos.cli.app import run
from exdos.utils.errors import EXIT_INPUT_FORMAT, EXIT_OK, EXIT_USAGE


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path: Path):
    for name in ("EXDOS_SEED", "EXDOS_OPCODE_OVERRIDE", "EXDOS_LOG_CONFIG", "EXDOS_THREADS"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("EXDOS_OUT_DIR", str(tmp_path / "runs"))


def _small_config(tmp_path: Path) -> Path:
    path = tmp_path / "train.yaml"
    path.write_text(
        "learning_rate: 0.005\nbatch_size: 8\nhidden_dim: 8\nnum_layers: 1\nrelation_dim: 4\nhead_hidden: 4\n"
        "teacher_epochs: 1\ndistill_epochs: 1\nfinetune_epochs: 1\n",
        encoding="utf-8",
    )
    return path


def test_disasm_should_print_offsets_and_mnemonics(capsys, tmp_path: Path):
    code = run(["--out-dir", str(tmp_path), "disasm", "0x6001600201"])

    out = capsys.readouterr().out.splitlines()
    assert code == EXIT_OK
    assert out == ["000000  PUSH1 0x01", "000002  PUSH1 0x02", "000004  ADD"]
    resolved = json.loads((tmp_path / "disasm.resolved.json").read_text(encoding="utf-8"))
    assert resolved["subcommand"] == "disasm"
    assert resolved["seed"] == 7


def test_malformed_bytecode_should_exit_with_input_format_code(tmp_path: Path):
    assert run(["--out-dir", str(tmp_path), "disasm", "0x60zz"]) == EXIT_INPUT_FORMAT


def test_usage_errors_should_exit_with_one(capsys):
    assert run(["no-such-command"]) == EXIT_USAGE
    assert run([]) == EXIT_USAGE
    assert run(["split"]) == EXIT_USAGE
    capsys.readouterr()


def test_cfg_patterns_and_featurize_should_chain_through_files(tmp_path: Path):
    graph = tmp_path / "graph.json"
    blocks = tmp_path / "blocks.json"

    assert run(["--out-dir", str(tmp_path), "cfg", "600457005b00", "--out", str(graph), "--blocks-out", str(blocks)]) == 0
    assert run(["--out-dir", str(tmp_path), "patterns", str(graph), "--out", str(tmp_path / "ann.json")]) == EXIT_USAGE
    assert run(["--out-dir", str(tmp_path), "patterns", str(graph), "--blocks", str(blocks), "--out", str(tmp_path / "ann.json")]) == 0
    assert run(["--out-dir", str(tmp_path), "featurize", str(graph), "--blocks", str(blocks), "--out", str(tmp_path / "f.json")]) == 0

    features = json.loads((tmp_path / "f.json").read_text(encoding="utf-8"))
    assert json.loads(graph.read_text(encoding="utf-8"))["modality"] == "bytecode"
    assert isinstance(features, dict)


def test_gen_corpus_and_split_should_be_reproducible(tmp_path: Path):
    args = ["--seed", "3", "--out-dir", str(tmp_path), "gen-corpus", "--per-vulnerability", "4", "--vulnerability", "timestamp"]

    assert run([*args, "--dest", str(tmp_path / "a")]) == 0
    assert run([*args, "--dest", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()

    split_args = ["--seed", "3", "--out-dir", str(tmp_path), "split", str(tmp_path / "a" / "manifest.json"), "--ratios", "2,1,1"]
    assert run([*split_args, "--out", str(tmp_path / "s1.json")]) == 0
    assert run([*split_args, "--out", str(tmp_path / "s2.json")]) == 0
    assert (tmp_path / "s1.json").read_bytes() == (tmp_path / "s2.json").read_bytes()
    assert run([*split_args[:-2], "--ratios", "7,1"]) == EXIT_USAGE


def test_training_pipeline_should_produce_a_detectable_student(capsys, tmp_path: Path):
    config = _small_config(tmp_path)
    manifest = tmp_path / "corpus" / "manifest.json"
    base = ["--seed", "1", "--out-dir", str(tmp_path)]
    train = ["--manifest", str(manifest), "--vulnerability", "reentrancy", "--config", str(config)]

    assert run([*base, "gen-corpus", "--per-vulnerability", "10", "--vulnerability", "reentrancy", "--dest", str(tmp_path / "corpus")]) == 0
    assert run([*base, "train-teacher", *train]) == 0
    assert run([*base, "distill", *train, "--teacher", str(tmp_path / "teacher.json")]) == 0
    assert run([*base, "finetune", *train, "--student", str(tmp_path / "student_distilled.json")]) == 0
    capsys.readouterr()

    hex_path = next((tmp_path / "corpus" / "contracts").glob("*.hex"))
    assert run([*base, "detect", str(hex_path), "--model", str(tmp_path / "student.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["contract_id"] == hex_path.name.split(".")[0]
    assert report["label"] in {"vulnerable", "normal"}

    history = json.loads((tmp_path / "distill.history.json").read_text(encoding="utf-8"))
    assert history["epochs"] == 1
    assert history["teacher_digest"]


def test_eval_should_write_metrics_for_a_checkpoint(tmp_path: Path):
    config = _small_config(tmp_path)
    base = ["--seed", "2", "--out-dir", str(tmp_path)]
    assert run([*base, "gen-corpus", "--per-vulnerability", "10", "--vulnerability", "infinite-loop", "--dest", str(tmp_path / "c")]) == 0
    manifest = str(tmp_path / "c" / "manifest.json")
    train = ["--manifest", manifest, "--vulnerability", "infinite-loop", "--config", str(config)]
    assert run([*base, "finetune", *train]) == 0

    code = run([*base, "eval", *train, "--model", str(tmp_path / "student.json"), "--dest", str(tmp_path / "ev")])

    assert code == 0
    assert (tmp_path / "ev" / "metrics.csv").read_text(encoding="utf-8").startswith("run,seed,accuracy")
    assert run([*base, "eval", *train, "--runs", "1", "--preset", "bogus"]) == EXIT_INPUT_FORMAT


def test_detect_should_exit_with_input_format_code_for_bad_checkpoint(tmp_path: Path):
    bad = tmp_path / "model.json"
    bad.write_text("{}", encoding="utf-8")

    assert run(["--out-dir", str(tmp_path), "detect", "6003565b00", "--model", str(bad)]) == EXIT_INPUT_FORMAT
