import hashlib

import pytest

from chanlingo.cli import dump_config, main, parse_args


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture
def pipeline(tmp_path):
    """gen -> build-vocab -> train (one small epoch) in ``tmp_path``."""
    d = tmp_path
    assert run(["gen", "--out", d / "ch.csf", "--duration-samples", 1500, "--seed", 3]) == 0
    assert run(["build-vocab", "--in", d / "ch.csf", "--min-freq", 2, "--out", d / "v.vccf"]) == 0
    assert run(["train", "--mode", "nmt", "--in", d / "ch.csf", "--vocab", d / "v.vccf", "--M", 8, "--N", 4,
                "--stride", 4, "--bidir", "--attention", "--hidden", 8, "--emb", 4, "--epochs", 1,
                "--out", d / "m.ckpt"]) == 0
    return d


def test_task_flags():
    ns = parse_args(["eval", "--truth", __file__, "--model", __file__, "--vocab", __file__,
                     "--M", "30", "--N", "10", "--report", "r.tsv"])
    assert (ns.M, ns.N) == (30, 10)
    assert ns.accumulate is False


def test_type_mismatch_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        parse_args(["train", "--M", "abc"])
    assert info.value.code == 2
    assert "--M" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["train", "--mode", "nmt"],
    ["frobnicate"],
    ["gen", "--out", "x.csf", "--bogus", "1"],
    ["predict", "--model", "missing.ckpt", "--vocab", "v", "--in", "a", "--M", "3", "--N", "2", "--out", "p"],
    [],
])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        parse_args(argv)
    assert info.value.code == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        parse_args(["--version"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    assert "csf v1" in out and "vccf v1" in out and "CKPT v1" in out


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("# fading setup\nduration-samples=300\nspeed_mps=2.5\nnum_taps=2\ntap_gains_db=0,-3\n")
    ns = parse_args(["gen", "--config", str(cfg), "--out", str(tmp_path / "a.csf"), "--speed-mps", "1.0"])
    assert ns.duration_samples == 300
    assert ns.speed_mps == 1.0
    assert ns.tap_gains_db == (0.0, -3.0)
    cfg.write_text("nonsense=1\n")
    with pytest.raises(SystemExit) as info:
        parse_args(["gen", "--config", str(cfg), "--out", "a.csf"])
    assert info.value.code == 2


def test_gen_multi_tap_files(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("duration_samples=200\nnum_taps=2\ntap_gains_db=0,-3\n")
    assert run(["gen", "--config", cfg, "--out", tmp_path / "ch.csf"]) == 0
    assert (tmp_path / "ch_tap0.csf").exists() and (tmp_path / "ch_tap1.csf").exists()


def test_dump_config_reproduces_train_invocation(tmp_path, pipeline):
    d = pipeline
    argv = ["train", "--mode", "nmt", "--in", str(d / "ch.csf"), "--vocab", str(d / "v.vccf"), "--M", "8",
            "--N", "4", "--stride", "4", "--bidir", "--cell", "lstm", "--hidden", "8", "--epochs", "1",
            "--lr", "0.003", "--out", str(d / "m2.ckpt"), "--dump-config", str(d / "run.cfg")]
    first = parse_args(argv)
    (d / "run.cfg").write_text(dump_config(first))
    second = parse_args(["train", "--config", str(d / "run.cfg")])
    ignore = {"config", "dump_config", "handler"}
    assert {k: v for k, v in vars(first).items() if k not in ignore} == \
        {k: v for k, v in vars(second).items() if k not in ignore}


def test_smoke_pipeline(pipeline, capsys):
    d = pipeline
    assert run(["predict", "--model", d / "m.ckpt", "--vocab", d / "v.vccf", "--in", d / "ch.csf",
                "--M", 8, "--N", 4, "--out", d / "p.csf"]) == 0
    assert len((d / "p.csf").read_text().splitlines()) == 1 + 4
    assert run(["eval", "--truth", d / "ch.csf", "--model", d / "m.ckpt", "--vocab", d / "v.vccf",
                "--M", 8, "--N", 4, "--baseline", "--report", d / "r.tsv"]) == 0
    rows = (d / "r.tsv").read_text().splitlines()
    assert rows[0].startswith("label\tnmse") and len(rows) == 3
    assert run(["attention", "--model", d / "m.ckpt", "--in", d / "ch.csf", "--M", 8, "--N", 4,
                "--out", d / "att.tsv"]) == 0
    att = [list(map(float, r.split("\t"))) for r in (d / "att.tsv").read_text().splitlines()]
    assert len(att) == 4 and all(len(r) == 8 and abs(sum(r) - 1) < 1e-6 for r in att)
    assert run(["diversity", "--in", d / "p.csf", "--in", d / "p.csf", "--out", d / "pd.csf",
                "--trace", d / "tr.tsv"]) == 0
    assert (d / "pd.csf").exists()


def test_vocabulary_mismatch_is_a_runtime_error(pipeline, capsys):
    d = pipeline
    assert run(["build-vocab", "--in", d / "ch.csf", "--min-freq", 3, "--out", d / "other.vccf"]) == 0
    code = run(["eval", "--truth", d / "ch.csf", "--model", d / "m.ckpt", "--vocab", d / "other.vccf",
                "--M", 8, "--N", 4, "--report", d / "r.tsv"])
    assert code == 1
    assert "vocabulary-mismatch" in capsys.readouterr().err
    assert not (d / "r.tsv").exists()


def test_attention_requires_attention_model(pipeline, capsys):
    d = pipeline
    assert run(["train", "--mode", "nlg", "--in", d / "ch.csf", "--vocab", d / "v.vccf", "--M", 8, "--N", 4,
                "--stride", 8, "--hidden", 8, "--emb", 4, "--epochs", 1, "--out", d / "nlg.ckpt"]) == 0
    assert run(["attention", "--model", d / "nlg.ckpt", "--in", d / "ch.csf", "--M", 8, "--N", 4,
                "--out", d / "att.tsv"]) == 1
    assert "invalid-state" in capsys.readouterr().err
    assert not (d / "att.tsv").exists()


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_identical_runs_give_identical_files(tmp_path):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        run(["gen", "--out", d / "ch.csf", "--duration-samples", 800, "--seed", 1, "--snr-db", 20])
        run(["build-vocab", "--in", d / "ch.csf", "--min-freq", 2, "--out", d / "v.vccf"])
        run(["train", "--mode", "nmt", "--in", d / "ch.csf", "--vocab", d / "v.vccf", "--M", 6, "--N", 3,
             "--stride", 3, "--attention", "--hidden", 8, "--emb", 4, "--epochs", 1, "--threads", 1,
             "--out", d / "m.ckpt"])
        run(["eval", "--truth", d / "ch.csf", "--model", d / "m.ckpt", "--vocab", d / "v.vccf",
             "--M", 6, "--N", 3, "--report", d / "r.tsv"])
        outs.append([digest(d / f) for f in ("ch.csf", "v.vccf", "m.ckpt", "r.tsv")])
    assert outs[0] == outs[1]
