"""
Artifact persistence module for hydrolimit

Every experiment writes into one run directory. The store keeps a
``manifest.json`` index (name, relative path, size, sha256, metadata) so
runs can be compared byte for byte.
"""

import hashlib
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from .config import settings
from .logger import logger
from .error_handler import HydroLimitError, ErrorCategory


class ArtifactError(HydroLimitError):
    """Artifact could not be written or read"""
    category = ErrorCategory.IO


def _to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and dataclass-like objects for json.dump"""
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "to_dict"):
        return _to_jsonable(value.to_dict())
    return value


def dumps_json(data: Any) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation)"""
    return json.dumps(_to_jsonable(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass
class ArtifactEntry:
    """Manifest entry"""
    name: str
    path: str
    size: int
    sha256: str
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "path": self.path,
            "size": self.size,
            "sha256": self.sha256,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArtifactEntry":
        return cls(**data)


class ArtifactStore:
    """Run-directory artifact writer with a manifest index"""

    MANIFEST = "manifest.json"

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.index: Dict[str, ArtifactEntry] = {}
        self.lock = threading.Lock()
        self._load_index()

    @classmethod
    def for_experiment(cls, experiment: str, root: Optional[Union[str, Path]] = None) -> "ArtifactStore":
        """Store rooted at <output_dir>/<experiment>"""
        base = Path(root) if root is not None else settings.get_output_path()
        return cls(base / experiment)

    def _load_index(self):
        manifest = self.run_dir / self.MANIFEST
        if not manifest.exists():
            return
        try:
            data = json.loads(manifest.read_text(encoding="utf-8"))
            self.index = {e["name"]: ArtifactEntry.from_dict(e) for e in data.get("artifacts", [])}
        except (OSError, ValueError, KeyError) as e:
            logger.error(f"Failed to load artifact manifest: {e}")
            self.index = {}

    def _save_index(self):
        entries = [self.index[k].to_dict() for k in sorted(self.index)]
        (self.run_dir / self.MANIFEST).write_text(dumps_json({"artifacts": entries}), encoding="utf-8")

    def _register(self, name: str, path: Path, metadata: Optional[Dict[str, Any]]) -> Path:
        payload = path.read_bytes()
        entry = ArtifactEntry(
            name=name,
            path=str(path.relative_to(self.run_dir)),
            size=len(payload),
            sha256=hashlib.sha256(payload).hexdigest(),
            metadata=_to_jsonable(metadata or {}),
        )
        with self.lock:
            self.index[name] = entry
            self._save_index()
        logger.log_file_operation("write", str(path), entry.size)
        return path

    def put_json(self, name: str, data: Any, metadata: Optional[Dict[str, Any]] = None) -> Path:
        """Write deterministic JSON"""
        path = self.run_dir / f"{name}.json"
        try:
            path.write_text(dumps_json(data), encoding="utf-8")
        except (OSError, TypeError) as e:
            raise ArtifactError(f"Cannot write {path}: {e}", {"name": name}) from e
        return self._register(name, path, metadata)

    def put_frame(self, name: str, frame: pd.DataFrame, metadata: Optional[Dict[str, Any]] = None) -> Path:
        """Write a CSV with a fixed float format"""
        path = self.run_dir / f"{name}.csv"
        try:
            frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
        except OSError as e:
            raise ArtifactError(f"Cannot write {path}: {e}", {"name": name}) from e
        return self._register(name, path, metadata)

    def put_bytes(self, name: str, payload: bytes, suffix: str = ".bin",
                  metadata: Optional[Dict[str, Any]] = None) -> Path:
        """Write a binary blob (configuration snapshots)"""
        path = self.run_dir / f"{name}{suffix}"
        try:
            path.write_bytes(payload)
        except OSError as e:
            raise ArtifactError(f"Cannot write {path}: {e}", {"name": name}) from e
        return self._register(name, path, metadata)

    def get(self, name: str, default: Any = None) -> Any:
        """Reload an artifact: dict for JSON, DataFrame for CSV, bytes otherwise"""
        entry = self.index.get(name)
        if entry is None:
            return default
        path = self.run_dir / entry.path
        if not path.exists():
            return default
        if path.suffix == ".json":
            return json.loads(path.read_text(encoding="utf-8"))
        if path.suffix == ".csv":
            return pd.read_csv(path)
        return path.read_bytes()

    def exists(self, name: str) -> bool:
        entry = self.index.get(name)
        return entry is not None and (self.run_dir / entry.path).exists()

    def entries(self) -> List[ArtifactEntry]:
        return [self.index[k] for k in sorted(self.index)]

    def write_manifest_header(self, experiment: str, config: Dict[str, Any]) -> Path:
        """Write run.json with the run configuration and a creation timestamp"""
        return self.put_json("run", {
            "experiment": experiment,
            "config": config,
            "created_at": datetime.now().isoformat(),
        })


def strip_timestamps(data: Any) -> Any:
    """Drop every ``created_at`` key (used for reproducibility comparisons)"""
    if isinstance(data, dict):
        return {k: strip_timestamps(v) for k, v in data.items() if k != "created_at"}
    if isinstance(data, list):
        return [strip_timestamps(v) for v in data]
    return data
