import json
import os

import numpy as np
import pytest

from autosynth.cli import RunConfig, load_config, main
from autosynth.evolution import read_history_csv


@pytest.fixture
def fast_config(tmp_path):
    cfg = {
        "seed": 3,
        "out_dir": str(tmp_path / "run"),
        "target_mesh": "demo",
        "target_aug": 8,
        "points_per_cloud": 48,
        "objects_per_dataset": 6,
        "population": 4,
        "trials": 5,
        "baseline_samples": 3,
        "surrogate": {
            "iterations": 40,
            "dtype": "float32",
            "latent": 8,
            "encoder_widths": [8, 16],
            "decoder_widths": [16, 32],
        },
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path, tmp_path


class TestConfig:
    def test_defaults_match_published_settings(self):
        cfg = RunConfig()
        assert cfg.population == 32
        assert cfg.trials == 1_000
        assert cfg.target_aug == 100
        assert cfg.surrogate.batch_size == 8
        assert cfg.surrogate.learning_rate == 1e-3

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"nonsense": 1}')
        with pytest.raises(ValueError, match="nonsense"):
            load_config(path)

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "seed": oops\n}')
        with pytest.raises(ValueError, match="line 2"):
            load_config(path)

    def test_missing_target_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"target_mesh": "does/not/exist.obj"}')
        with pytest.raises(ValueError, match="target mesh"):
            load_config(path)


class TestSearch:
    def test_artifacts_and_row_count(self, fast_config, capsys):
        cfg_path, tmp_path = fast_config
        assert main(["search", "--config", str(cfg_path)]) == 0
        out = tmp_path / "run"
        assert (out / "best_policy.json").exists()
        assert (out / "summary.json").exists()
        rows = read_history_csv(out / "history.csv")
        assert len(rows) == 5
        summary = json.loads((out / "summary.json").read_text())
        assert summary["population"] == 4 and summary["trials"] == 5
        best = [r["best_score"] for r in rows]
        assert all(b <= a for a, b in zip(best, best[1:]))

    def test_rerun_byte_identical_any_threads(self, fast_config):
        cfg_path, tmp_path = fast_config
        main(["search", "--config", str(cfg_path), "--out", str(tmp_path / "a"), "--threads", "1"])
        main(["search", "--config", str(cfg_path), "--out", str(tmp_path / "b"), "--threads", "3"])
        a = (tmp_path / "a" / "history.csv").read_bytes()
        b = (tmp_path / "b" / "history.csv").read_bytes()
        assert a == b

    def test_checkpoint_resume_matches(self, fast_config):
        cfg_path, tmp_path = fast_config
        main(["search", "--config", str(cfg_path), "--out", str(tmp_path / "full")])
        cp = tmp_path / "cp.json"
        main([
            "search", "--config", str(cfg_path), "--out", str(tmp_path / "half"),
            "--trials", "2", "--checkpoint", str(cp),
        ])
        main([
            "search", "--config", str(cfg_path), "--out", str(tmp_path / "resumed"),
            "--resume", str(cp),
        ])
        assert (tmp_path / "resumed" / "history.csv").read_bytes() == (
            tmp_path / "full" / "history.csv"
        ).read_bytes()

    def test_eval_matches_search_best(self, fast_config, capsys):
        cfg_path, tmp_path = fast_config
        main(["search", "--config", str(cfg_path)])
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        capsys.readouterr()
        code = main([
            "eval", "--config", str(cfg_path),
            "--policy", str(tmp_path / "run" / "best_policy.json"),
            "--out", str(tmp_path / "eval"),
        ])
        assert code == 0
        printed = capsys.readouterr().out.strip()
        assert printed == f"{summary['best_score']:.6g}"
        record = json.loads((tmp_path / "eval" / "eval.json").read_text())
        assert record["score"] == summary["best_score"]


class TestGen:
    def test_files_on_disk(self, fast_config, capsys):
        cfg_path, tmp_path = fast_config
        policy_path = tmp_path / "p.json"
        policy_path.write_text('{"labels": [8,8,8,8,8,8,8,8,8,8,8], "version": 1}')
        out = tmp_path / "gen"
        code = main([
            "gen", "--config", str(cfg_path), "--policy", str(policy_path),
            "--n", "4", "--out", str(out),
        ])
        assert code == 0
        assert sorted(p.name for p in out.glob("obj_*.obj")) == [
            f"obj_{i:05d}.obj" for i in range(4)
        ]
        assert len(list(out.glob("cloud_*.ply"))) == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["entries"]) == 4

    def test_n_zero_exits_2(self, fast_config, capsys):
        cfg_path, tmp_path = fast_config
        policy_path = tmp_path / "p.json"
        policy_path.write_text('{"labels": [0,0,0,0,0,0,0,0,0,0,0], "version": 1}')
        assert main([
            "gen", "--config", str(cfg_path), "--policy", str(policy_path),
            "--n", "0", "--out", str(tmp_path / "x"),
        ]) == 2

    def test_repeated_run_identical_manifest(self, fast_config):
        cfg_path, tmp_path = fast_config
        policy_path = tmp_path / "p.json"
        policy_path.write_text('{"labels": [1,2,3,4,5,6,7,8,0,1,2], "version": 1}')
        for sub in ("g1", "g2"):
            main([
                "gen", "--config", str(cfg_path), "--policy", str(policy_path),
                "--n", "3", "--out", str(tmp_path / sub),
            ])
        m1 = (tmp_path / "g1" / "manifest.json").read_bytes()
        m2 = (tmp_path / "g2" / "manifest.json").read_bytes()
        assert m1 == m2
        c1 = (tmp_path / "g1" / "cloud_00000.ply").read_bytes()
        c2 = (tmp_path / "g2" / "cloud_00000.ply").read_bytes()
        assert c1 == c2

    def test_invalid_policy_exits_2(self, fast_config, tmp_path):
        cfg_path, _ = fast_config
        bad = tmp_path / "bad.json"
        bad.write_text('{"labels": [1, 2], "version": 1}')
        assert main([
            "gen", "--config", str(cfg_path), "--policy", str(bad),
            "--n", "1", "--out", str(tmp_path / "y"),
        ]) == 2


class TestBaseline:
    def test_full_range_prints_one_score(self, fast_config, capsys):
        cfg_path, tmp_path = fast_config
        code = main([
            "baseline", "--config", str(cfg_path), "--mode", "full-range",
            "--out", str(tmp_path / "bl"),
        ])
        assert code == 0
        printed = capsys.readouterr().out.strip().splitlines()
        assert len(printed) == 1
        float(printed[0])  # parses as one number
        record = json.loads((tmp_path / "bl" / "baseline.json").read_text())
        assert record["mode"] == "full-range"

    def test_random_reports_min_le_median(self, fast_config, capsys):
        cfg_path, tmp_path = fast_config
        code = main([
            "baseline", "--config", str(cfg_path), "--mode", "random",
            "--out", str(tmp_path / "bl2"),
        ])
        assert code == 0
        record = json.loads((tmp_path / "bl2" / "baseline.json").read_text())
        assert len(record["scores"]) == 3
        assert record["min"] <= record["median"]


class TestReport:
    def test_rows_monotone_and_replayable(self, fast_config, capsys):
        cfg_path, tmp_path = fast_config
        main(["search", "--config", str(cfg_path)])
        history = tmp_path / "run" / "history.csv"
        for sub in ("r1", "r2"):
            assert main([
                "report", "--history", str(history), "--out", str(tmp_path / sub),
            ]) == 0
        rows1 = (tmp_path / "r1" / "report.csv").read_bytes()
        rows2 = (tmp_path / "r2" / "report.csv").read_bytes()
        assert rows1 == rows2
        lines = rows1.decode().splitlines()
        assert len(lines) == 1 + 5  # header + one row per trial
        best = [float(l.split(",")[1]) for l in lines[1:]]
        assert all(b <= a for a, b in zip(best, best[1:]))
        assert (tmp_path / "r1" / "best_score.png").exists()
        assert (tmp_path / "r1" / "score_quantiles.png").exists()

    def test_malformed_history_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("trial,parent_hash,child_labels,child_score,best_score\n1,x,y,z,w\n")
        assert main(["report", "--history", str(bad), "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err
        assert "row 2" in err


class TestThreadsEnv:
    def test_env_fallback(self, fast_config, monkeypatch):
        cfg_path, tmp_path = fast_config
        monkeypatch.setenv("AUTOSYNTH_THREADS", "2")
        main(["search", "--config", str(cfg_path), "--out", str(tmp_path / "env")])
        monkeypatch.setenv("AUTOSYNTH_THREADS", "1")
        main(["search", "--config", str(cfg_path), "--out", str(tmp_path / "env1")])
        assert (tmp_path / "env" / "history.csv").read_bytes() == (
            tmp_path / "env1" / "history.csv"
        ).read_bytes()

    def test_bad_env_value_exits_2(self, fast_config, monkeypatch):
        cfg_path, tmp_path = fast_config
        monkeypatch.setenv("AUTOSYNTH_THREADS", "soon")
        assert main(["search", "--config", str(cfg_path)]) == 2


class TestOutputContainment:
    def test_all_outputs_under_out_dir(self, fast_config, monkeypatch, tmp_path):
        cfg_path, base = fast_config
        workdir = tmp_path / "cwd"
        workdir.mkdir()
        monkeypatch.chdir(workdir)
        main(["search", "--config", str(cfg_path), "--out", str(base / "contained")])
        assert list(workdir.iterdir()) == []


class TestHelp:
    @pytest.mark.parametrize("cmd", ["search", "gen", "eval", "baseline", "report"])
    def test_help_lists_flags(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        assert "--seed" in text and "--out" in text
        assert "default" in text
