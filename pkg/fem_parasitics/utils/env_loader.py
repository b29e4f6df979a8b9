"""Loading of run overrides from a .env file."""

import logging
import os

logger = logging.getLogger(__name__)


def load_env_vars(env_path=".env", target_keys=None, override=False):
    """Load KEY=VALUE lines from a .env file into ``os.environ``.

    Args:
        env_path: Path to the .env file.
        target_keys: Keys to load. If None, loads all keys.
        override: Replace variables that are already set in the environment.

    Returns:
        List of loaded variable names.
    """
    loaded_vars = []
    try:
        with open(env_path, "r", encoding="utf-8") as f:
            for line in f:
                stripped_line = line.strip()
                if not stripped_line or stripped_line.startswith("#") or "=" not in stripped_line:
                    continue
                key, value = stripped_line.split("=", 1)
                key = key.strip()
                if key.startswith("export "):
                    key = key[len("export "):].strip()
                value = value.strip().strip("'\"")

                if target_keys is not None and key not in target_keys:
                    continue
                if key in os.environ and not override:
                    logger.debug(f"{key} already set in the environment; keeping it")
                    continue
                os.environ[key] = value
                if key not in loaded_vars:
                    loaded_vars.append(key)

        if loaded_vars:
            logger.info(f"Loaded {', '.join(loaded_vars)} from {env_path}")
    except FileNotFoundError:
        logger.debug(f"{env_path} not found; using the process environment only")
    except OSError as e:
        logger.warning(f"Error reading {env_path}: {e}")

    return loaded_vars
