"""
Configuration management module for hydrolimit
"""

import os
import json
import platform
from pathlib import Path
from typing import Dict, Any, Optional, List
from dataclasses import dataclass, field, asdict, fields, is_dataclass
from enum import Enum

from dotenv import load_dotenv

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class InitialProfile(Enum):
    """Initial density profile family"""
    TANH_FRONT = "tanh_front"
    DISK = "disk"
    CUSTOM = "custom"


class ExperimentKind(Enum):
    """Experiment families driven by the harness"""
    DESIGN_RATES = "design-rates"
    WAVE = "wave"
    PDE = "pde"
    KMC = "kmc"
    CERTIFY = "certify"
    HYDRO = "hydro"
    ORACLE = "oracle"


@dataclass
class ModelSettings:
    """Reaction model: target cubic s(u-a_-)(a_+-u)(u-a_*) and rate window"""
    alpha_minus: float = 0.25
    alpha_star: float = 0.45
    alpha_plus: float = 0.75
    scale: float = 32.0
    window_radius: int = 1


@dataclass
class LatticeSettings:
    """Lattice geometry settings"""
    dimension: int = 1
    side: int = 256
    block_size: int = 8


@dataclass
class KMCSettings:
    """Particle simulation settings"""
    K: float = 4.0
    replicas: int = 8
    seed: int = 20240611
    t_end: float = 0.1
    observer_times: List[float] = field(default_factory=lambda: [0.0, 0.05, 0.1])


@dataclass
class SolverSettings:
    """Method-of-lines RK4 settings"""
    diffusion_safety: float = 1.0 / 8.0
    reaction_safety: float = 0.1
    bound_tolerance: float = 1e-6
    ordering_tolerance: float = 1e-9
    min_points_per_eps: float = 20.0


@dataclass
class WaveSettings:
    """Traveling-wave shooter settings"""
    half_width: float = 40.0
    spacing: float = 0.01
    tolerance: float = 1e-10
    rtol: float = 1e-10
    atol: float = 1e-12
    start_offset: float = 1e-8
    max_widenings: int = 3


@dataclass
class CertificateSettings:
    """Sub/super-solution certificate settings"""
    residual_target: float = 0.5
    kappa: float = 3.0
    time_step: float = 1e-6
    horizon_fraction: float = 0.8


@dataclass
class ProcessingSettings:
    """Parallel processing settings"""
    parallel_workers: int = 2
    chunk_size: int = 4
    show_progress: bool = True


@dataclass
class OutputSettings:
    """Output and logging locations"""
    output_dir: str = "runs"
    log_dir: str = field(default_factory=lambda: str(Path.home() / ".hydrolimit"))
    log_file_name: str = "hydrolimit.log"


@dataclass
class Settings:
    """Main settings class"""
    model: ModelSettings = field(default_factory=ModelSettings)
    lattice: LatticeSettings = field(default_factory=LatticeSettings)
    kmc: KMCSettings = field(default_factory=KMCSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    wave: WaveSettings = field(default_factory=WaveSettings)
    certificate: CertificateSettings = field(default_factory=CertificateSettings)
    processing: ProcessingSettings = field(default_factory=ProcessingSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    debug: bool = False
    log_level: str = "INFO"

    __version__: str = "0.1.0"

    def __post_init__(self):
        """Apply environment overrides"""
        self.apply_environment()

    def apply_environment(self) -> None:
        """Read HYDROLIMIT_* overrides (a .env file is honored)"""
        load_dotenv(override=False)
        workers = os.environ.get("HYDROLIMIT_WORKERS")
        if workers:
            try:
                self.processing.parallel_workers = max(1, int(workers))
            except ValueError:
                pass
        level = os.environ.get("HYDROLIMIT_LOG_LEVEL")
        if level:
            self.log_level = level.upper()
        output_dir = os.environ.get("HYDROLIMIT_OUTPUT_DIR")
        if output_dir:
            self.output.output_dir = output_dir

    def to_dict(self) -> Dict[str, Any]:
        """Canonical serialization (used in run manifests)"""
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            data[f.name] = asdict(value) if is_dataclass(value) else value
        return data

    def update(self, data: Dict[str, Any]) -> None:
        """Merge a nested mapping into the settings groups"""
        for key, value in data.items():
            current = getattr(self, key, None)
            if is_dataclass(current) and isinstance(value, dict):
                for sub_key, sub_value in value.items():
                    if hasattr(current, sub_key):
                        setattr(current, sub_key, sub_value)
            elif key in ("debug", "log_level"):
                setattr(self, key, value)

    def save(self, path: Path) -> None:
        """Save settings to a JSON file"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def load(self, path: Path) -> None:
        """Load settings from a JSON or TOML file"""
        path = Path(path)
        if not path.exists():
            return
        if path.suffix.lower() == ".toml":
            with open(path, 'rb') as f:
                config_data = tomllib.load(f)
        else:
            with open(path, 'r', encoding='utf-8') as f:
                config_data = json.load(f)
        self.update(config_data)
        self.apply_environment()

    def get_log_path(self) -> Path:
        """Get log file path"""
        return Path(self.output.log_dir) / self.output.log_file_name

    def get_output_path(self) -> Path:
        """Get output root directory"""
        return Path(self.output.output_dir)

    def get_system_info(self) -> Dict[str, Any]:
        """Get system information"""
        return {
            "platform": platform.system(),
            "architecture": platform.machine(),
            "python_version": platform.python_version(),
            "workers": self.processing.parallel_workers,
            "log_file": str(self.get_log_path()),
        }


def load_settings(path: Optional[Path] = None) -> Settings:
    """Create a fresh Settings object, optionally merged with a file"""
    result = Settings()
    if path is not None:
        result.load(path)
    return result


# Global settings instance
settings = Settings()
