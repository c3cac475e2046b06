"""CLI tests: argument parsing, artifact plumbing, exit codes."""

import json
import os

import pytest

from csipred import cli, nn

TINY = ("n_rb=4 n_tx=2 n_rx=2 n_layers=2 slots_per_realization=128 "
        "train_size=40 val_size=12 test_size=8 epochs=2 batch_size=16 "
        "history_p=2 doppler_list_hz=10").split()


def tiny_args(*extra):
    args = []
    for kv in TINY:
        args += ["--set", kv]
    return list(extra) + args


def run(argv):
    return cli.main(argv)


class TestParsing:
    def test_unknown_verb_exits_one(self, capsys):
        assert run(["bogus"]) == 1

    def test_missing_verb_exits_one(self):
        assert run([]) == 1

    def test_help_exits_zero(self):
        assert run(["--help"]) == 0

    def test_bad_override_exits_one(self, tmp_path, capsys):
        code = run(["gen", "--out", str(tmp_path), "--set", "nonsense=1"])
        assert code == 1
        assert "config error" in capsys.readouterr().err

    def test_config_file_plus_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("seed = 3\n")
        code = run(tiny_args("gen", "--config", str(cfg),
                             "--out", str(tmp_path / "out")))
        assert code == 0


class TestGen:
    def test_writes_window_files_and_sidecar(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(tiny_args("gen", "--out", str(out),
                             "--profile", "TDL-A", "--doppler", "10")) == 0
        files = sorted(os.listdir(out))
        assert "windows_tdla_10hz_train.wsmp" in files
        assert "windows_tdla_10hz_val.wsmp" in files
        assert "windows_tdla_10hz_test.wsmp" in files
        meta = json.load(open(out / "windows_tdla_10hz.meta.json"))
        assert meta["verb"] == "gen"
        assert "config_hash" in meta

    def test_env_var_overrides_out_dir(self, tmp_path, monkeypatch, capsys):
        envdir = tmp_path / "envout"
        monkeypatch.setenv(cli.OUT_DIR_ENV, str(envdir))
        assert run(tiny_args("gen", "--out", str(tmp_path / "ignored"))) == 0
        assert envdir.is_dir()
        assert any(f.endswith(".wsmp") for f in os.listdir(envdir))


class TestTrainEval:
    def test_train_writes_model_and_sidecar(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(tiny_args("train", "--model", "dnn",
                             "--out", str(out))) == 0
        model_path = out / "model_dnn_tdla_10hz.csip"
        assert model_path.exists()
        meta = json.load(open(str(model_path) + ".meta.json"))
        assert meta["epochs"] == 2
        assert "dataset_hash" in meta
        model = nn.load_model(model_path)
        assert model.kind == "dnn"

    def test_eval_dim_mismatch_exits_two(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(tiny_args("train", "--model", "dnn",
                             "--out", str(out))) == 0
        code = run(tiny_args("eval", "--model-file",
                             str(out / "model_dnn_tdla_10hz.csip"),
                             "--out", str(out))
                   + ["--set", "history_p=5"])
        assert code == 2
        err = capsys.readouterr().err
        assert "P+1=3" in err and "P+1=6" in err

    def test_eval_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(tiny_args("train", "--model", "dnn",
                             "--out", str(out))) == 0
        assert run(tiny_args("eval", "--model-file",
                             str(out / "model_dnn_tdla_10hz.csip"),
                             "--out", str(out))) == 0
        assert "nmse=" in capsys.readouterr().out

    def test_missing_model_file_exits_two(self, tmp_path, capsys):
        code = run(tiny_args("eval", "--model-file",
                             str(tmp_path / "nope.csip"),
                             "--out", str(tmp_path)))
        assert code == 2


class TestSweeps:
    def test_sweep_nmse_csv(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(tiny_args("sweep-nmse", "--out", str(out))
                   + ["--set", "profiles=TDL-A"]) == 0
        lines = open(out / "sweep_nmse.csv").read().splitlines()
        assert lines[0].startswith("profile,doppler_hz,model")
        assert len(lines) == 4  # header + hold + dnn + lstm
        assert (out / "sweep_nmse.csv.meta.json").exists()

    def test_sweep_complexity_csv(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(tiny_args("sweep-complexity", "--out", str(out),
                             "--d-list", "2,4")) == 0
        lines = open(out / "sweep_complexity.csv").read().splitlines()
        assert len(lines) == 5  # header + 2 sizes x 2 kinds


class TestThroughput:
    def test_policy_pair_comparable_csvs(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(tiny_args("throughput", "--policy", "stale",
                             "--slots", "1500", "--out", str(out))) == 0
        assert run(tiny_args("throughput", "--policy", "lstm",
                             "--slots", "1500", "--out", str(out))) == 0
        a = open(out / "throughput_stale_tdla_10hz.csv").read().splitlines()
        b = open(out / "throughput_lstm_tdla_10hz.csv").read().splitlines()
        assert a[0] == b[0]
        ra, rb = a[1].split(","), b[1].split(",")
        assert ra[2] == "stale" and rb[2] == "lstm"
        # same channel + success seeds: the stale baseline column agrees
        assert ra[9] == rb[9]
