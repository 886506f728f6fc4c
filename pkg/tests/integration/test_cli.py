"""
Integration tests for the hydrolimit command line
"""

import json

import pytest

from hydrolimit.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main, parse_overrides


class TestOverrides:
    """Test --set parsing"""

    def test_values_are_json(self):
        assert parse_overrides(["K=9", "initial.kind=disk", "ladder=[64,128]"]) == {
            "K": 9, "initial.kind": "disk", "ladder": [64, 128]}

    def test_missing_equals(self):
        with pytest.raises(ValueError):
            parse_overrides(["K"])


class TestExitCodes:
    """Test the exit-code contract"""

    def test_design_rates_passes(self, tmp_path, capsys):
        assert main(["design-rates", "--output", str(tmp_path)]) == EXIT_OK
        result = json.loads(capsys.readouterr().out)
        assert result["passed"]
        assert (tmp_path / "design-rates" / "design.json").exists()

    def test_infeasible_target_fails(self, tmp_path):
        # f(0) < 0 needs a negative creation rate on the empty window
        code = main(["design-rates", "--set", "model.alpha_minus=-0.1", "--output", str(tmp_path)])
        assert code == EXIT_FAILED

    def test_invalid_config_is_usage_error(self, tmp_path):
        assert main(["wave", "--K", "0.5", "--output", str(tmp_path)]) == EXIT_USAGE

    def test_bad_override_is_usage_error(self):
        assert main(["wave", "--set", "K"]) == EXIT_USAGE

    def test_unknown_command(self):
        assert main(["simulate-everything"]) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert main(["wave", "--config", str(tmp_path / "missing.yaml")]) == EXIT_USAGE


class TestKMCAndPlot:
    """Particle run followed by a chart of its trajectories"""

    def test_kmc_then_plot(self, tmp_path):
        code = main([
            "kmc", "--N", "16", "--replicas", "2", "--workers", "1", "--t-end", "0.01",
            "--set", "block=4", "--set", "output_times=[0, 0.01]", "--output", str(tmp_path),
        ])
        assert code == EXIT_OK
        csv = tmp_path / "kmc" / "trajectories.csv"
        assert csv.exists()

        svg = tmp_path / "density.svg"
        assert main(["plot", str(csv), "--group", "replica", "--svg", str(svg)]) == EXIT_OK
        assert svg.read_text(encoding="utf-8").lstrip().startswith("<?xml")

    def test_plot_unknown_column(self, tmp_path):
        csv = tmp_path / "series.csv"
        csv.write_text("t,density\n0,0.5\n", encoding="utf-8")
        assert main(["plot", str(csv), "--y", "mass"]) == EXIT_USAGE

    def test_plot_finds_the_series_in_a_run_directory(self, tmp_path):
        code = main([
            "kmc", "--N", "16", "--replicas", "2", "--workers", "1", "--t-end", "0.01",
            "--set", "block=4", "--set", "output_times=[0, 0.01]", "--output", str(tmp_path),
        ])
        assert code == EXIT_OK
        svg = tmp_path / "from_dir.svg"
        assert main(["plot", str(tmp_path / "kmc"), "--group", "replica", "--svg", str(svg)]) == EXIT_OK
        assert svg.exists()

    def test_plot_directory_without_the_columns(self, tmp_path):
        (tmp_path / "series.csv").write_text("t,mass\n0,0.5\n", encoding="utf-8")
        assert main(["plot", str(tmp_path)]) == EXIT_USAGE


class TestHydroSweep:
    """The hydro command over several lattice sizes"""

    @pytest.mark.slow
    def test_sweep_flag(self, tmp_path, capsys):
        code = main([
            "hydro", "--sweep", "--replicas", "4", "--workers", "1", "--t-end", "0.04",
            "--set", "sweep.N_values=[32, 64]", "--set", "sweep.blocks=4",
            "--set", "output_times=[0, 0.02, 0.04]", "--output", str(tmp_path),
        ])
        assert code in (EXIT_OK, EXIT_FAILED)
        result = json.loads(capsys.readouterr().out)
        assert result["N_values"] == [32, 64]
        assert (tmp_path / "hydro-sweep" / "hydro_sweep.json").exists()
