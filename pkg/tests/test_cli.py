import shutil
import subprocess
import sys

import numpy as np
import pytest

from stlgcp.cli import build_parser, main
from stlgcp.core import GridSpec, ObservationWindow, Raster
from stlgcp.export import write_esri_ascii

SUBCOMMANDS = ["ingest", "bandwidth", "intensity", "glm-fit", "kst", "pcf", "autocov", "xk", "mctest", "envelope",
               "fit-cov", "grf-sample", "mala", "forecast", "simulate", "pipeline"]


@pytest.fixture
def data(small_dataset, tmp_path):
    d = tmp_path / "d"
    shutil.copytree(small_dataset, d, ignore=shutil.ignore_patterns("out"))
    return d


def read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


class TestParser:
    def test_all_subcommands(self):
        sub = build_parser()._subparsers._group_actions[0].choices
        assert set(SUBCOMMANDS) <= set(sub)

    @pytest.mark.parametrize("name", ["ingest", "kst", "pipeline"])
    def test_common_flags(self, name):
        args = build_parser().parse_args([name, "--config", "c.toml", "--out", "o", "--seed", "4", "--threads", "2"])
        assert (args.config, args.out, args.seed, args.threads) == ("c.toml", "o", 4, 2)


class TestStages:
    def test_bandwidth_prints_value(self, data, capsys):
        assert main(["bandwidth", "--config", str(data / "config.toml")]) == 0
        h = float(capsys.readouterr().out.strip())
        assert h == read_csv(data / "out" / "bandwidth.csv")["h"]

    def test_bandwidth_flags_override(self, data, capsys):
        main(["bandwidth", "--config", str(data / "config.toml"), "--K", "2", "--out", str(data / "o2")])
        assert int(read_csv(data / "o2" / "bandwidth.csv")["K"]) == 2

    def test_pipeline_then_resume(self, data, capsys):
        cfg = str(data / "config.toml")
        assert main(["pipeline", "--config", cfg]) == 0
        assert main(["forecast", "--config", cfg]) == 0
        err = capsys.readouterr().err
        assert "forecast: reused" in err and "mala: reused" in err
        assert main(["glm-fit", "--config", cfg, "--fresh"]) == 0
        assert "glm-fit: done" in capsys.readouterr().err

    def test_seed_flag_changes_outputs(self, data):
        cfg = str(data / "config.toml")
        main(["mala", "--config", cfg, "--out", str(data / "a")])
        main(["mala", "--config", cfg, "--out", str(data / "b"), "--seed", "1234"])
        a = (data / "a" / "mala_posterior_mean.csv").read_bytes()
        b = (data / "b" / "mala_posterior_mean.csv").read_bytes()
        assert a != b

    def test_invalid_config_exit_code(self, data, capsys):
        (data / "bad.toml").write_text('[paths]\npattern = "pattern.csv"\nwindow = "window.csv"\n[mala]\nthin = 0\n')
        assert main(["pipeline", "--config", str(data / "bad.toml")]) == 2
        assert "mala.thin" in capsys.readouterr().err

    def test_missing_file_exit_code(self, tmp_path, capsys):
        assert main(["ingest", "--pattern", str(tmp_path / "x.csv"), "--window", str(tmp_path / "y.csv")]) == 2
        assert "paths.pattern" in capsys.readouterr().err


class TestSummaries:
    @pytest.mark.parametrize("name,cols", [("kst", ("r", "t", "value")), ("pcf", ("u", "value")),
                                           ("autocov", ("v", "value")), ("mctest", ("n_perm", "observed", "fraction_below"))])
    def test_summary_files(self, data, capsys, name, cols):
        assert main([name, "--config", str(data / "config.toml")]) == 0
        path = capsys.readouterr().out.strip().splitlines()[-1]
        table = read_csv(path)
        assert tuple(table.dtype.names) == cols
        assert np.all(np.isfinite(table[cols[-1]]))


class TestStandalone:
    def test_xk(self, tmp_path):
        (tmp_path / "w.csv").write_text("x,y\n0,0\n10,0\n10,10\n0,10\n")
        rng = np.random.default_rng(0)
        for k in (1, 2):
            xy = rng.uniform(0, 10, (60, 2))
            rows = "\n".join(f"{x},{y},1" for x, y in xy)
            (tmp_path / f"p{k}.csv").write_text("x,y,t\n" + rows + "\n")
        assert main(["xk", "--pattern1", str(tmp_path / "p1.csv"), "--pattern2", str(tmp_path / "p2.csv"),
                     "--window", str(tmp_path / "w.csv"), "--n-r", "5", "--out", str(tmp_path / "o")]) == 0
        t = read_csv(tmp_path / "o" / "xk.csv")
        assert len(t) == 5 and t["r"][-1] == pytest.approx(1.25)
        np.testing.assert_allclose(t["K0"], np.pi * t["r"] ** 2)

    def test_envelope(self, tmp_path):
        w = ObservationWindow.rectangle(0, 0, 10, 10)
        (tmp_path / "w.csv").write_text("x,y\n0,0\n10,0\n10,10\n0,10\n")
        g = GridSpec.from_window(w, 10, 10)
        write_esri_ascii(Raster(g, np.full((10, 10), 1.5)), tmp_path / "r.asc")
        rng = np.random.default_rng(1)
        xy = rng.uniform(0, 10, (150, 2))
        (tmp_path / "p.csv").write_text("x,y,t\n" + "\n".join(f"{x},{y},1" for x, y in xy) + "\n")
        assert main(["envelope", "--pattern", str(tmp_path / "p.csv"), "--window", str(tmp_path / "w.csv"),
                     "--raster", str(tmp_path / "r.asc"), "--n-sim", "20", "--seed", "3",
                     "--out", str(tmp_path / "o")]) == 0
        t = read_csv(tmp_path / "o" / "envelope.csv")
        assert set(t.dtype.names) == {"r", "observed", "lo", "hi", "inside"}
        assert np.all(t["lo"] <= t["hi"])

    def test_grf_sample(self, tmp_path):
        (tmp_path / "w.csv").write_text("x,y\n0,0\n4,0\n4,2\n0,2\n")
        args = ["grf-sample", "--window", str(tmp_path / "w.csv"), "--sigma2", "1.0", "--phi", "0.5",
                "--m", "8", "--p", "4", "--seed", "5"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "grf_sample.csv").read_bytes()
        assert a == (tmp_path / "b" / "grf_sample.csv").read_bytes()
        assert len(a.decode().strip().splitlines()) == 1 + 8 * 4


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "stlgcp.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "pipeline" in out.stdout
