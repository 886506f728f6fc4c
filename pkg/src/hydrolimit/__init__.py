"""
hydrolimit - Glauber-Kawasaki hydrodynamic-limit laboratory
"""

__version__ = "0.1.0"
__description__ = "Particle systems, Allen-Cahn fronts and comparison certificates"

from .core.config import settings
from .core.logger import logger
from .core.artifact_store import ArtifactStore

__all__ = [
    "settings",
    "logger",
    "ArtifactStore",
]
