"""
Integration tests for hydrolimit
Runs the harness pipelines end to end at desk scale
"""

import math

import pytest

from hydrolimit.core import ArtifactStore, DomainError
from hydrolimit.core.artifact_store import strip_timestamps
from hydrolimit.services.experiment_harness import (
    ExperimentConfig, run_certificates, run_hydro_sweep, run_hydrodynamic, run_oracle, run_pde_ladder,
)


def config(tmp_path, **overrides):
    return ExperimentConfig.from_file(None, {"output_dir": str(tmp_path), "workers": 1, **overrides})


class TestHydrodynamicPipeline:
    """Particle system against the moving-front limit"""

    def test_hydro_run(self, tmp_path):
        cfg = config(tmp_path, **{
            "geometry.N": 64, "block": 8, "replicas": 4, "t_end": 0.1,
            "output_times": [0.0, 0.05, 0.1],
        })
        result = run_hydrodynamic(cfg)
        assert result["c_star"] == pytest.approx(0.4, abs=1e-6)
        assert result["replicas"] == 4
        assert math.isfinite(result["sup_deviation"])
        assert result["mass_std"] >= 0.0
        ci = result["sup_deviation_ci"]
        assert ci["ci_low"] <= ci["mean"] <= ci["ci_high"]
        # a mean of per-replica maxima bounds the largest mean
        assert ci["mean"] >= result["sup_deviation"] - 1e-12

        store = ArtifactStore(tmp_path / "hydro")
        deviations = store.get("deviations")
        assert set(deviations["phi"]) == {"one", "cos2pi", "sin2pi", "cos4pi"}
        assert sorted(set(deviations["t"])) == [0.0, 0.05, 0.1]
        assert store.get("profiles")["block"].max() == 7

    def test_glauber_off_keeps_mass(self, tmp_path):
        cfg = config(tmp_path, **{
            "model.glauber_off": True, "geometry.N": 32, "block": 8, "replicas": 2,
            "t_end": 0.02, "output_times": [0.0, 0.01, 0.02],
        })
        result = run_hydrodynamic(cfg)
        assert result["c_star"] == 0.0
        frame = ArtifactStore(tmp_path / "hydro").get("deviations")
        mass = frame[frame["phi"] == "one"].groupby("replica")["empirical"].nunique()
        assert (mass == 1).all()

    def test_reruns_are_identical(self, tmp_path):
        overrides = {"geometry.N": 32, "block": 8, "replicas": 2, "t_end": 0.02,
                     "output_times": [0.0, 0.01, 0.02]}
        first = run_hydrodynamic(config(tmp_path / "a", **overrides))
        second = run_hydrodynamic(config(tmp_path / "b", **overrides))
        assert strip_timestamps(first) == strip_timestamps(second)

    @pytest.mark.slow
    def test_hydro_sweep(self, tmp_path):
        cfg = config(tmp_path, **{
            "sweep.N_values": [64, 32], "sweep.blocks": 4, "replicas": 4, "t_end": 0.05,
            "output_times": [0.0, 0.025, 0.05],
        })
        result = run_hydro_sweep(cfg)
        assert result["N_values"] == [32, 64]
        assert len(result["points"]) == 2
        assert result["expected_slope"] == -0.5
        assert math.isfinite(result["mass_std_slope"])
        # two sizes give a point slope and no interval
        assert result["mass_std_slope_ci"] is None
        assert result["passed"] == (result["sup_deviation_non_increasing"] and result["mass_scaling_ok"]
                                    and result["speed_within_tolerance"])

        store = ArtifactStore(tmp_path / "hydro-sweep")
        sweep = store.get("sweep")
        assert sweep["N"].tolist() == [32, 64]
        assert sweep["K"].tolist() == sorted(sweep["K"].tolist())
        assert set(store.get("deviations")["N"]) == {32, 64}
        assert store.exists("hydro_sweep")


class TestExactOracle:
    """Monte Carlo state frequencies on a four-site torus"""

    @pytest.mark.slow
    def test_oracle_agrees(self, tmp_path):
        result = run_oracle(config(tmp_path, replicas=2000))
        assert result["passed"]
        assert [r["t"] for r in result["rows"]] == [0.1, 0.5]
        assert ArtifactStore(tmp_path / "oracle").exists("oracle")


class TestPDELadder:
    """Lattice problem across N"""

    @pytest.mark.slow
    def test_ladder_speed(self, tmp_path):
        cfg = config(tmp_path, ladder=[64, 128], ladder_exponent=None, K=256.0)
        result = run_pde_ladder(cfg)
        assert result["c_star"] == pytest.approx(0.4, abs=1e-6)
        assert [r["N"] for r in result["ladder"]] == [64, 128]
        assert result["ladder"][-1]["speed"] == pytest.approx(0.4, abs=0.08)
        for row in result["ladder"]:
            assert 0.0 < row["C_gradient"] < math.inf
            assert 0.0 <= row["C_laplacian"] < math.inf

    def test_horizon_must_exceed_generation(self, tmp_path):
        cfg = config(tmp_path, ladder=[32], ladder_exponent=None, K=256.0, ladder_t_end=0.1)
        with pytest.raises(DomainError):
            run_pde_ladder(cfg)


class TestCertificate:
    """Wave, sub/super-solutions and sandwich as one certificate"""

    @pytest.mark.slow
    def test_certificate_1d(self, tmp_path):
        cfg = config(tmp_path, **{
            "geometry.N": 128, "K": 16.0, "t_end": 0.1,
            "certificate.eps": 0.05, "certificate.consistency_N": [128, 256],
        })
        certificate = run_certificates(cfg)
        checks = certificate["checks"]
        assert {"wave_tails", "slope_inequality", "initial_ordering", "residual_super", "residual_sub",
                "sandwich", "consistency"} <= set(checks)
        failed = [name for name, check in checks.items() if not check["passed"]]
        assert failed == []
        assert certificate["passed"]
        assert certificate["consistency"]["non_growing"]
        sweep = certificate["generation_sweep"]
        assert [r["eps"] for r in sweep["results"]] == [0.1, 0.05]
        assert sweep["bounded"]
        assert 0.0 < certificate["horizon"] <= 0.1
        assert len(certificate["sandwich"]) == cfg.certificate.sandwich_times
        stored = ArtifactStore(tmp_path / "certify").get("certificate")
        assert stored["passed"] == certificate["passed"]
