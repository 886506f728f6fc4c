"""
Main entry point for hydrolimit
"""

import sys
from pathlib import Path

# Add src directory to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from hydrolimit.core import settings, logger, error_handler, ErrorSeverity


def check_dependencies() -> bool:
    """Check that the numerical stack is importable"""
    required_modules = ["numpy", "scipy", "pandas", "pydantic", "tqdm", "dotenv"]
    missing_modules = []
    for module in required_modules:
        try:
            __import__(module)
        except ImportError:
            missing_modules.append(module)
    if missing_modules:
        logger.error(f"Missing required modules: {missing_modules}")
        return False
    return True


def main() -> int:
    try:
        system_info = settings.get_system_info()
        logger.debug(f"Python {system_info['python_version']} on {system_info['platform']}, "
                     f"{system_info['workers']} workers")
        if not check_dependencies():
            return 1
        from hydrolimit.cli import main as cli_main
        return cli_main(sys.argv[1:])
    except Exception as e:
        error_handler.handle_error(
            error=e,
            context={"operation": "main"},
            severity=ErrorSeverity.CRITICAL
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
