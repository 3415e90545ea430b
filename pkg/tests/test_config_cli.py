import numpy as np
import pytest

from arcstack.checkpoint import read_manifest
from arcstack.cli import main
from arcstack.config import ConfigError, RunConfig
from arcstack.conllu import read_conllu, write_conllu

from conftest import DATA_DIR, sentence_from_heads

SAMPLE = DATA_DIR / "sample.conllu"

TINY_CONFIG = """
# desk-scale test setup
model.layers=1
model.heads=2
model.dim=16
model.ff_dim=20
model.exist_hidden=10
model.relation_hidden=8
model.dropout=0.0
train.epochs=2
train.lr=0.002
train.patience=0
vocab.min_freq=1
seed=7
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG, encoding="utf-8")
    return path


# -- config ------------------------------------------------------------------

def test_config_defaults():
    cfg = RunConfig()
    assert cfg.get("model.layers") == 2
    assert cfg.get("model.variant") == "sentence,graph"
    assert cfg.get("train.lr") == pytest.approx(1e-3)
    assert cfg.get("train.epochs") == 12
    assert cfg.get("eval.punctuation") == "include"


def test_config_rejects_unknown_key():
    cfg = RunConfig()
    with pytest.raises(ConfigError, match="unknown config key"):
        cfg.set("model.bogus", "1")


def test_config_type_conversion_errors():
    cfg = RunConfig()
    with pytest.raises(ConfigError, match="expects int"):
        cfg.set("model.layers", "two")


def test_config_from_file(tiny_config):
    cfg = RunConfig.from_file(tiny_config)
    assert cfg.get("model.dim") == 16
    assert cfg.get("train.epochs") == 2
    assert cfg.get("seed") == 7


def test_config_file_syntax_error(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("model.layers\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="key=value"):
        RunConfig.from_file(bad)


def test_config_hash_changes_with_values():
    a = RunConfig()
    b = RunConfig()
    assert a.config_hash() == b.config_hash()
    b.set("seed", 99)
    assert a.config_hash() != b.config_hash()


# -- oracle command ------------------------------------------------------------

def test_cli_oracle_stdout(capsys):
    assert main(["oracle", str(SAMPLE)]) == 0
    out = capsys.readouterr().out
    assert "# sent_id = s1" in out
    assert "0\tSHIFT\t_" in out
    assert "LEFT_ARC\t" in out


def test_cli_oracle_verify_ok():
    assert main(["oracle", str(SAMPLE), "--verify"]) == 0


def test_cli_oracle_projective_treebank_has_no_swap(tmp_path, capsys):
    proj = tmp_path / "proj.conllu"
    write_conllu([sentence_from_heads([2, 0, 2], labels=["a", "root", "b"], sent_id="p1"),
                  sentence_from_heads([0, 1], labels=["root", "a"], sent_id="p2")], proj)
    assert main(["oracle", str(proj)]) == 0
    out = capsys.readouterr().out
    assert "SWAP" not in out


def test_cli_oracle_nonprojective_contains_swap(capsys):
    assert main(["oracle", str(SAMPLE)]) == 0
    out = capsys.readouterr().out
    assert "SWAP" in out  # s3/s6 are non-projective


def test_cli_oracle_empty_treebank(tmp_path, capsys):
    empty = tmp_path / "empty.conllu"
    empty.write_text("", encoding="utf-8")
    assert main(["oracle", str(empty), "--verify"]) == 0
    assert capsys.readouterr().out == ""


def test_cli_oracle_output_file(tmp_path):
    out = tmp_path / "dump.tsv"
    assert main(["oracle", str(SAMPLE), "--output", str(out)]) == 0
    text = out.read_text(encoding="utf-8")
    assert text.startswith("# sent_id = s1")
    assert text.endswith("\n")


def test_cli_missing_file_is_user_error(capsys):
    assert main(["oracle", "/nonexistent.conllu"]) == 1
    assert capsys.readouterr().err.startswith("error:")


# -- train/parse/eval/analyze pipeline -------------------------------------------

def train_tiny(tmp_path, tiny_config, variant="sentence,graph"):
    tmp_path.mkdir(parents=True, exist_ok=True)
    model_path = tmp_path / "model.ckpt"
    report_path = tmp_path / "report.tsv"
    code = main(["train", "--config", str(tiny_config), "--variant", variant,
                 "--train", str(SAMPLE), "--dev", str(SAMPLE),
                 "--model", str(model_path), "--report", str(report_path)])
    return code, model_path, report_path


def test_cli_train_graph_variant_manifest(tmp_path, tiny_config, capsys):
    code, model_path, report_path = train_tiny(tmp_path, tiny_config, "sentence,graph")
    assert code == 0
    manifest = read_manifest(model_path)
    names = {e["name"] for e in manifest["entries"]}
    assert "enc.L0.graph.wl1" in names and "enc.L0.graph.wl2" in names
    assert "emb.label" in names
    lines = report_path.read_text().splitlines()
    assert lines[0] == "epoch\tloss\tdev_uas\tdev_las"
    assert len(lines) >= 3


def test_cli_train_plain_variant_lacks_graph_tensors(tmp_path, tiny_config):
    code, model_path, _ = train_tiny(tmp_path, tiny_config, "sentence")
    assert code == 0
    names = {e["name"] for e in read_manifest(model_path)["entries"]}
    assert not any("graph.wl" in n for n in names)
    assert "emb.label" not in names


def test_cli_train_invalid_variant_combo_fails_fast(tmp_path, tiny_config, capsys):
    code = main(["train", "--config", str(tiny_config), "--variant", "sentence,comp",
                 "--train", str(SAMPLE), "--dev", str(SAMPLE),
                 "--model", str(tmp_path / "m.ckpt")])
    assert code == 1
    assert "error:" in capsys.readouterr().err
    assert not (tmp_path / "m.ckpt").exists()


def test_cli_full_pipeline(tmp_path, tiny_config, capsys):
    code, model_path, _ = train_tiny(tmp_path, tiny_config)
    assert code == 0
    parsed = tmp_path / "pred.conllu"
    assert main(["parse", "--model", str(model_path), "--input", str(SAMPLE),
                 "--output", str(parsed)]) == 0
    predicted = read_conllu(parsed)
    assert len(predicted) == len(read_conllu(SAMPLE))
    capsys.readouterr()
    assert main(["eval", str(SAMPLE), str(parsed)]) == 0
    line = capsys.readouterr().out.strip()
    uas, las = line.split("\t")
    assert float(uas) >= float(las)
    analysis_dir = tmp_path / "analysis"
    assert main(["analyze", str(SAMPLE), str(parsed), "--output-dir", str(analysis_dir)]) == 0
    assert (analysis_dir / "report.txt").exists()
    table = (analysis_dir / "dependency_length.tsv").read_text().splitlines()[1:]
    gold_total = sum(int(row.split("\t")[2]) for row in table)
    scored = sum(len(s.tokens) for s in read_conllu(SAMPLE))
    assert gold_total == scored  # include-punctuation mode conserves the population


def test_cli_eval_gold_vs_gold(capsys):
    assert main(["eval", str(SAMPLE), str(SAMPLE)]) == 0
    assert capsys.readouterr().out.strip() == "100.00\t100.00"


def test_cli_parse_variant_mismatch(tmp_path, tiny_config, capsys):
    code, model_path, _ = train_tiny(tmp_path, tiny_config, "sentence,graph")
    assert code == 0
    code = main(["parse", "--model", str(model_path), "--input", str(SAMPLE),
                 "--output", str(tmp_path / "x.conllu"), "--variant", "sentence"])
    assert code == 1
    assert "does not match" in capsys.readouterr().err


def test_cli_analyze_compare_writes_rer(tmp_path, tiny_config):
    code, model_path, _ = train_tiny(tmp_path, tiny_config)
    assert code == 0
    parsed = tmp_path / "pred.conllu"
    main(["parse", "--model", str(model_path), "--input", str(SAMPLE), "--output", str(parsed)])
    out = tmp_path / "cmp"
    assert main(["analyze", str(SAMPLE), str(parsed), "--output-dir", str(out),
                 "--compare", str(SAMPLE)]) == 0
    lines = (out / "comparison.tsv").read_text().splitlines()
    assert lines[0] == "label\treference_f\tother_f\trer"


def test_cli_train_is_deterministic(tmp_path, tiny_config):
    code1, model1, report1 = train_tiny(tmp_path / "a", tiny_config)
    code2, model2, report2 = train_tiny(tmp_path / "b", tiny_config)
    assert code1 == code2 == 0
    assert model1.read_bytes() == model2.read_bytes()
    assert report1.read_bytes() == report2.read_bytes()
