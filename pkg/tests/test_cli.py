"""Command-line interface: subcommands, file outputs, determinism, overrides."""

import pytest

from fedlink.cli import main

SMALL = [
    "--num-devices", "6",
    "--participants-per-round", "3",
    "--total-samples", "150",
    "--probe-models", "5",
    "--seed", "3",
]


def _run(argv):
    assert main(argv) == 0


class TestBoundsCommand:
    def test_writes_table_and_manifest(self, tmp_path):
        out = str(tmp_path / "b")
        _run(["bounds", "--out", out] + SMALL)
        table = (tmp_path / "b" / "bounds.csv").read_text().splitlines()
        assert table[0].startswith("g_digital,g_analog,phi_quant")
        assert len(table) == 2
        assert (tmp_path / "b" / "manifest.txt").exists()

    def test_config_file_round_trip(self, tmp_path):
        out1 = str(tmp_path / "direct")
        _run(["bounds", "--out", out1] + SMALL)
        # extract the echoed configuration and rerun from the file
        manifest = (tmp_path / "direct" / "manifest.txt").read_text()
        config_lines = [
            ln for ln in manifest.splitlines()
            if ln.startswith(("system.", "learning.", "device."))
        ]
        cfg_file = tmp_path / "echo.cfg"
        cfg_file.write_text("\n".join(config_lines) + "\n")
        out2 = str(tmp_path / "fromfile")
        _run(["bounds", "--out", out2, "--config", str(cfg_file), "--seed", "3"])
        t1 = (tmp_path / "direct" / "bounds.csv").read_text()
        t2 = (tmp_path / "fromfile" / "bounds.csv").read_text()
        assert t1.split(",")[:2] == t2.split(",")[:2]

    def test_dbm_flags_convert(self, tmp_path):
        out = str(tmp_path / "dbm")
        _run(["bounds", "--out", out, "--power-budget-dbm", "30"] + SMALL)
        manifest = (tmp_path / "dbm" / "manifest.txt").read_text()
        assert "system.power_budget_w = 1.0" in manifest


class TestSimulateCommand:
    def test_trace_structure(self, tmp_path):
        out = str(tmp_path / "sim")
        _run(["simulate", "--out", out, "--scheme", "digital",
              "--rounds", "6", "--replications", "2"] + SMALL)
        lines = (tmp_path / "sim" / "trace.csv").read_text().splitlines()
        assert lines[0].startswith("scheme,replication,round,loss,gap")
        assert len(lines) == 1 + 6 * 2

    def test_explicit_plan_flag(self, tmp_path):
        out = str(tmp_path / "simplan")
        _run(["simulate", "--out", out, "--scheme", "analog",
              "--rounds", "4", "--replications", "1", "--plan", "learning"] + SMALL)
        assert (tmp_path / "simplan" / "trace.csv").exists()


class TestOptimizeCommand:
    @pytest.mark.parametrize("scheme", ["digital", "analog"])
    def test_probs_sum_to_sample_size(self, tmp_path, scheme):
        out = str(tmp_path / f"opt_{scheme}")
        _run(["optimize", "--out", out, "--scheme", scheme] + SMALL)
        lines = (tmp_path / f"opt_{scheme}" / "optimized_probs.csv").read_text().splitlines()
        probs = [float(ln.split(",")[3]) for ln in lines[1:]]
        assert sum(probs) == pytest.approx(3.0, abs=1e-6)
        summary = (tmp_path / f"opt_{scheme}" / "optimizer_summary.csv").read_text().splitlines()
        assert summary[1].startswith(scheme)


class TestSweepCommand:
    def test_axis_rows(self, tmp_path):
        out = str(tmp_path / "sw")
        _run(["sweep", "--out", out, "--axis", "rho", "--grid", "0.5,0.7,0.9"] + SMALL)
        lines = (tmp_path / "sw" / "sweep.csv").read_text().splitlines()
        assert len(lines) == 4
        assert lines[1].startswith("rho,0.5,")


class TestCompareCommand:
    def test_two_runs_are_byte_identical(self, tmp_path):
        args = ["compare", "--rounds", "6", "--replications", "2"] + SMALL
        out1, out2 = str(tmp_path / "c1"), str(tmp_path / "c2")
        _run(args + ["--out", out1])
        _run(args + ["--out", out2])
        for name in ("compare.csv", "manifest.txt"):
            b1 = (tmp_path / "c1" / name).read_bytes()
            b2 = (tmp_path / "c2" / name).read_bytes()
            assert b1 == b2

    def test_covers_baselines_and_optimized(self, tmp_path):
        out = str(tmp_path / "c")
        _run(["compare", "--rounds", "4", "--replications", "1", "--out", out] + SMALL)
        lines = (tmp_path / "c" / "compare.csv").read_text().splitlines()
        plans = {ln.split(",")[1] for ln in lines[1:]}
        assert plans == {"uniform", "learning", "channel", "mindist", "opt_digital", "opt_analog"}
        schemes = {ln.split(",")[0] for ln in lines[1:]}
        assert schemes == {"digital", "analog"}