import csv
import io
import json

import pytest

from hybridse.cli import build_parser, config_from_args, main


class TestParser:
    def test_overrides(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"preset": "experiment1", "scenes_per_array": 4}))
        args = build_parser().parse_args([
            "run", "--config", str(path), "--seed", "9", "--variant", "Hybrid2", "--variant", "Hybrid3",
            "--cutoff-hz", "1000", "--bands", "0,1000,8000", "--jobs", "2", "--save-audio",
        ])
        c = config_from_args(args)
        assert c.seed == 9 and c.scenes_per_array == 4 and c.variants == ["Hybrid2", "Hybrid3"]
        assert c.cutoff_hz == 1000 and c.bands == [0.0, 1000.0, 8000.0] and c.jobs == 2 and c.save_audio

    def test_scenes_flag_beats_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"scenes_per_array": 4}))
        args = build_parser().parse_args(["gen", "--config", str(path), "--scenes-per-array", "2"])
        assert config_from_args(args).scenes_per_array == 2


class TestCommands:
    def test_arrays(self, capsys):
        assert main(["arrays"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["arrays"]) == 11

    def test_arrays_regenerate_matches_packaged(self, tmp_path, capsys):
        assert main(["arrays", "--regenerate", "--out", str(tmp_path / "a.json")]) == 0
        main(["arrays"])
        packaged = json.loads(capsys.readouterr().out)
        assert json.loads((tmp_path / "a.json").read_text()) == packaged

    def test_beampattern(self, tmp_path):
        out = tmp_path / "bp.csv"
        bank = tmp_path / "bank.json"
        assert main(["beampattern", "--array", "1", "--beam", "left", "--freqs", "500,2000",
                     "--step", "10", "--out", str(out), "--bank-out", str(bank)]) == 0
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert len(rows) == 2 * 36
        assert set(rows[0]) == {"freq_hz", "azimuth_deg", "gain", "gain_db"}
        gains = {float(r["azimuth_deg"]): float(r["gain"]) for r in rows if float(r["freq_hz"]) == 2000}
        assert gains[90.0] == pytest.approx(1.0, abs=1e-9)
        assert [b["label"] for b in json.loads(bank.read_text())["beams"]] == ["front", "back", "left", "right"]

    def test_run(self, corpus_dir, tmp_path, capsys):
        code = main(["run", "--preset", "experiment2", "--corpus", str(corpus_dir), "--output", str(tmp_path),
                     "--arrays", "0,1", "--scenes-per-array", "1", "--variant", "Hybrid3"])
        assert code == 0
        out = capsys.readouterr().out
        assert "Hybrid3" in out and "Unseen" in out
        assert (tmp_path / "experiment2" / "report.csv").exists()

    def test_staged(self, corpus_dir, tmp_path, capsys):
        common = ["--corpus", str(corpus_dir), "--output", str(tmp_path), "--arrays", "0",
                  "--scenes-per-array", "1", "--variant", "Baseline1"]
        assert main(["gen", *common]) == 0
        assert main(["enhance", *common]) == 0
        assert main(["eval", *common]) == 0
        assert "Baseline1" in capsys.readouterr().out

    def test_errors_exit_2(self, tmp_path, capsys):
        assert main(["run", "--variant", "Nope", "--output", str(tmp_path)]) == 2
        assert "error:" in capsys.readouterr().err
        assert main(["eval", "--output", str(tmp_path / "none"), "--arrays", "0"]) == 2
