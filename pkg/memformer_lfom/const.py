__version__ = "0.3.0"
__config_file_version__ = "1"
__cache_version__ = "1"

from pathlib import Path

# Constants for configuration paths
DEFAULT_CONFIG_DIR = Path("~/.config/memformer_lfom").expanduser()
DEFAULT_CONFIG_FILE = DEFAULT_CONFIG_DIR / f"config.v{__config_file_version__}.toml"
DEFAULT_CACHE_DIR = Path("~/.cache/memformer_lfom").expanduser()

ENV_PREFIX = "MEMFORMER_"
