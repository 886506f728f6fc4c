"""
I/O utilities for hydrolimit
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd

from ..core import error_handler, ErrorCategory, ErrorSeverity, DomainError
from ..core.artifact_store import dumps_json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class IOUtils:
    """Config files, snapshot suffix and CSV series"""

    CONFIG_FORMATS = {'.json', '.toml'}
    SNAPSHOT_SUFFIX = '.gkcf'

    @staticmethod
    def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
        """Read a JSON or TOML experiment config"""
        path = Path(path)
        if path.suffix.lower() not in IOUtils.CONFIG_FORMATS:
            raise DomainError(f"unsupported config format: {path.suffix}", {"path": str(path)})
        try:
            if path.suffix.lower() == '.toml':
                with open(path, 'rb') as f:
                    return tomllib.load(f)
            with open(path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except (OSError, ValueError) as e:
            error_handler.handle_error(
                error=e,
                context={"path": str(path)},
                category=ErrorCategory.CONFIGURATION,
                severity=ErrorSeverity.HIGH,
            )
            raise

    @staticmethod
    def config_hash(config: Dict[str, Any]) -> str:
        """sha256 of the canonical JSON form"""
        return hashlib.sha256(dumps_json(config).encode('utf-8')).hexdigest()

    @staticmethod
    def read_series(path: Union[str, Path]) -> pd.DataFrame:
        """Load a CSV written by the artifact store"""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"File not found: {path}")
        return pd.read_csv(path)

    @staticmethod
    def list_csv(run_dir: Union[str, Path]) -> List[Path]:
        return sorted(Path(run_dir).glob('*.csv'))
