import os

import numpy as np
import pytest
from PIL import Image

from vecgp.cli import main


def run_cli(*argv):
    return main(list(argv))


class TestEval:
    def test_rmse_printed(self, capsys):
        assert run_cli("eval", "x", "--domain", "16x16") == 0
        out = capsys.readouterr().out
        assert out.startswith("rmse:")
        float(out.split(":")[1])

    def test_perfect_fit_is_zero(self, capsys):
        assert run_cli("eval", "add(x, y)", "--domain", "16x16",
                       "--target", "add(x, y)") == 0
        assert "rmse: 0" in capsys.readouterr().out

    def test_engines_agree(self, capsys):
        run_cli("eval", "sin(mult(x, y))", "--domain", "16x16")
        a = capsys.readouterr().out
        run_cli("eval", "sin(mult(x, y))", "--domain", "16x16",
                "--engine", "iterative")
        assert a == capsys.readouterr().out

    def test_outputs_written(self, tmp_path, capsys):
        img = tmp_path / "p.png"
        npy = tmp_path / "p.npy"
        assert run_cli("eval", "mult(x, y)", "--domain", "16x16",
                       "--out-image", str(img), "--out-tensor", str(npy)) == 0
        assert img.is_file()
        arr = np.load(npy)
        assert arr.shape == (16, 16) and arr.dtype == np.float32

    def test_parse_error_exits_2_with_caret(self, capsys):
        code = run_cli("eval", "add(x, bogus(y))", "--domain", "16x16")
        assert code == 2
        err = capsys.readouterr().err
        assert "parse error" in err
        caret_line = err.splitlines()[-1]
        assert caret_line.index("^") == 7


class TestRender:
    def test_writes_png(self, tmp_path, capsys):
        out = tmp_path / "r.png"
        assert run_cli("render", "sin(mult(x, y))", "--domain", "32x32",
                       "--out", str(out)) == 0
        img = Image.open(out)
        assert img.size == (32, 32)

    def test_rank_gate(self, tmp_path):
        assert run_cli("render", "x", "--domain", "16",
                       "--out", str(tmp_path / "r.png")) == 2


class TestCheck:
    def test_valid_file(self, tmp_path, capsys):
        path = tmp_path / "pop.txt"
        path.write_text("add(x, y)\nmult(x, 0.5)\n")
        assert run_cli("check", str(path)) == 0
        out = capsys.readouterr().out
        assert out.count("ok") == 2

    def test_findings_exit_1(self, tmp_path, capsys):
        path = tmp_path / "pop.txt"
        path.write_text("add(x, y)\nbogus(x)\nneg(neg(neg(x)))\n")
        assert run_cli("check", str(path), "--depth", "2") == 1
        out = capsys.readouterr().out
        assert "line 2: INVALID" in out
        assert "line 3: INVALID" in out and "depth" in out

    def test_empty_file_warns(self, tmp_path, capsys):
        path = tmp_path / "pop.txt"
        path.write_text("# only a comment\n")
        assert run_cli("check", str(path)) == 0
        assert "no expressions" in capsys.readouterr().out

    def test_missing_file_exit_3(self, tmp_path):
        assert run_cli("check", str(tmp_path / "nope.txt")) == 3


class TestRunResume:
    def test_run_creates_folder(self, tmp_path, capsys):
        code = run_cli("run", "--seed", "5", "--pop", "8", "--gens", "2",
                       "--depth", "5", "--domain", "16x16",
                       "--out", str(tmp_path))
        assert code == 0
        out = capsys.readouterr().out
        assert "generation 2" in out and "best:" in out
        folders = list(tmp_path.iterdir())
        assert len(folders) == 1
        assert (folders[0] / "state.txt").is_file()

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed: 1\npop_size: 8\nmax_depth: 5\n"
                       "generations: 9\ndomain: 16x16\n")
        out_dir = tmp_path / "runs"
        out_dir.mkdir()
        code = run_cli("run", "--config", str(cfg), "--gens", "1",
                       "--out", str(out_dir))
        assert code == 0
        folder = next(out_dir.iterdir())
        assert "generations: 1" in (folder / "config.txt").read_text()

    def test_resume_continues_to_limit(self, tmp_path, capsys):
        run_cli("run", "--seed", "2", "--pop", "8", "--gens", "1",
                "--depth", "5", "--domain", "16x16", "--out", str(tmp_path))
        folder = next(p for p in tmp_path.iterdir() if p.is_dir())
        state_file = folder / "state.txt"
        text = state_file.read_text()
        state_file.write_text(text.replace("generations: 1", "generations: 3"))
        capsys.readouterr()
        assert run_cli("resume", str(folder)) == 0
        assert "generation 3" in capsys.readouterr().out

    def test_bad_config_exit_2(self, tmp_path, capsys):
        code = run_cli("run", "--pop", "1", "--gens", "1",
                       "--domain", "16x16", "--out", str(tmp_path))
        assert code == 2
        assert "pop_size" in capsys.readouterr().err

    def test_bad_domain_exit_2(self, tmp_path):
        assert run_cli("run", "--domain", "axb", "--out", str(tmp_path)) == 2

    def test_bad_threads_exit_2(self, capsys):
        assert run_cli("--threads", "0", "eval", "x", "--domain", "16x16") == 2


class TestBenchCommands:
    def test_bench_eval_outputs(self, tmp_path):
        code = run_cli("bench-eval", "--sizes", "16", "--runs", "1",
                       "--approaches", "vectorized-nocache",
                       "--out", str(tmp_path))
        assert code == 0
        for name in ("timings.csv", "tree_eval.tsv", "tree_eval.svg"):
            assert (tmp_path / name).is_file()

    def test_bench_evolve_outputs(self, tmp_path):
        code = run_cli("bench-evolve", "--sizes", "16", "--runs", "1",
                       "--gens", "1", "--approaches", "vectorized-cache",
                       "--out", str(tmp_path))
        assert code == 0
        for name in ("timings.csv", "generation_timings.csv",
                     "evolution.tsv", "evolution.svg"):
            assert (tmp_path / name).is_file()
