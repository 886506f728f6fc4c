"""
Unit tests for I/O and statistics utilities
"""

import json

import numpy as np
import pandas as pd
import pytest

from hydrolimit.core import DomainError
from hydrolimit.utils import IOUtils, StatsUtils


class TestIOUtils:
    """Test IOUtils class"""

    def test_read_json_config(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"geometry": {"N": 64}}))
        assert IOUtils.read_config_file(path) == {"geometry": {"N": 64}}

    def test_read_toml_config(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text("K = 16.0\n[geometry]\nN = 128\n")
        assert IOUtils.read_config_file(path) == {"K": 16.0, "geometry": {"N": 128}}

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(DomainError):
            IOUtils.read_config_file(tmp_path / "exp.yaml")

    def test_malformed_config_is_reraised(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ValueError):
            IOUtils.read_config_file(path)

    def test_config_hash_ignores_key_order(self):
        assert IOUtils.config_hash({"a": 1, "b": 2}) == IOUtils.config_hash({"b": 2, "a": 1})
        assert IOUtils.config_hash({"a": 1}) != IOUtils.config_hash({"a": 2})

    def test_series_and_listing(self, tmp_path):
        pd.DataFrame({"t": [0.0], "density": [0.5]}).to_csv(tmp_path / "b.csv", index=False)
        pd.DataFrame({"t": [1.0]}).to_csv(tmp_path / "a.csv", index=False)
        assert [p.name for p in IOUtils.list_csv(tmp_path)] == ["a.csv", "b.csv"]
        assert list(IOUtils.read_series(tmp_path / "b.csv").columns) == ["t", "density"]

    def test_read_series_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            IOUtils.read_series(tmp_path / "missing.csv")


class TestStatsUtils:
    """Test StatsUtils class"""

    def test_chi_square_accepts_matching_counts(self):
        probs = np.array([0.5, 0.3, 0.2])
        result = StatsUtils.chi_square_agreement([500, 300, 200], probs)
        assert result.statistic == pytest.approx(0.0)
        assert result.passed

    def test_chi_square_rejects_wrong_law(self):
        result = StatsUtils.chi_square_agreement([900, 50, 50], [1 / 3, 1 / 3, 1 / 3])
        assert not result.passed

    def test_chi_square_pools_small_cells(self):
        result = StatsUtils.chi_square_agreement([98, 1, 1, 0], [0.97, 0.01, 0.01, 0.01])
        assert result.pooled_bins == 3
        assert result.dof == 1

    def test_chi_square_mass_on_impossible_state(self):
        result = StatsUtils.chi_square_agreement([10, 1], [1.0, 0.0])
        assert not result.passed

    def test_chi_square_shape_mismatch(self):
        with pytest.raises(DomainError):
            StatsUtils.chi_square_agreement([1, 2], [1.0])

    def test_linear_fit(self):
        x = np.linspace(0.0, 1.0, 11)
        fit = StatsUtils.linear_fit(x, 0.4 * x + 0.1)
        assert fit.slope == pytest.approx(0.4)
        assert fit.intercept == pytest.approx(0.1)
        assert fit.ci_low <= 0.4 <= fit.ci_high

    def test_linear_fit_needs_three_points(self):
        with pytest.raises(DomainError):
            StatsUtils.linear_fit([0.0, 1.0], [0.0, 1.0])

    def test_loglog_slope(self):
        x = np.array([128.0, 256.0, 512.0])
        assert StatsUtils.loglog_slope(x, 3.0 / x) == pytest.approx(-1.0)

    def test_mean_ci(self):
        ci = StatsUtils.mean_ci([1.0, 2.0, 3.0])
        assert ci["mean"] == pytest.approx(2.0)
        assert ci["ci_low"] < 2.0 < ci["ci_high"]
        assert StatsUtils.mean_ci([5.0])["stderr"] == 0.0

    def test_is_non_increasing(self):
        assert StatsUtils.is_non_increasing([3.0, 2.0, 2.0, 1.0])
        assert not StatsUtils.is_non_increasing([1.0, 2.0])
        assert StatsUtils.is_non_increasing([1.0, 1.05], rtol=0.1)
