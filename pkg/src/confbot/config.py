"""Server configuration: one file, environment overrides, CLI overrides.

Precedence (lowest to highest): built-in defaults, config file, CONFBOT_*
environment variables, explicit keyword overrides from the CLI.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

__all__ = ["AppConfig", "load_config", "data_path"]

DEFAULT_MAP_URL = (
    "https://staticmap.openstreetmap.de/staticmap.php"
    "?center={lat},{lon}&zoom=16&size=420x260&markers={lat},{lon},red-pushpin"
)


def data_path(name: str) -> str:
    """Absolute path of a packaged data file."""
    return str(resources.files("confbot.data") / name)


@dataclass
class AppConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    corpus_path: str = ""
    bot_path: str = ""
    poi_catalog_path: str = ""
    programme_path: str = ""
    log_dir: str = "./confbot-logs"
    tau: float = 0.3
    capacity: int = 200
    admin_token: str | None = None
    map_url_template: str = DEFAULT_MAP_URL
    static_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.corpus_path:
            self.corpus_path = data_path("corpus.json")
        if not self.bot_path:
            self.bot_path = data_path("bot.json")
        if not self.poi_catalog_path:
            self.poi_catalog_path = data_path("poi_small.json")
        if not self.programme_path:
            self.programme_path = data_path("prog_small.json")


_ENV_KEYS = {
    "CONFBOT_HOST": ("host", str),
    "CONFBOT_PORT": ("port", int),
    "CONFBOT_CORPUS": ("corpus_path", str),
    "CONFBOT_BOT_CONFIG": ("bot_path", str),
    "CONFBOT_POI_CATALOG": ("poi_catalog_path", str),
    "CONFBOT_PROGRAMME": ("programme_path", str),
    "CONFBOT_LOG_DIR": ("log_dir", str),
    "CONFBOT_TAU": ("tau", float),
    "CONFBOT_CAPACITY": ("capacity", int),
    "CONFBOT_ADMIN_TOKEN": ("admin_token", str),
    "CONFBOT_MAP_URL": ("map_url_template", str),
    "CONFBOT_STATIC_DIR": ("static_dir", str),
}


def load_config(
    config_file: str | Path | None = None,
    env: dict | None = None,
    **overrides,
) -> AppConfig:
    """Merge defaults, the optional config file, env vars, and overrides."""
    values: dict = {}
    if config_file is not None:
        doc = json.loads(Path(config_file).read_text(encoding="utf-8"))
        known = {f.name for f in fields(AppConfig)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)
    env = os.environ if env is None else env
    for env_key, (name, cast) in _ENV_KEYS.items():
        if env_key in env:
            values[name] = cast(env[env_key])
    for name, value in overrides.items():
        if value is not None:
            values[name] = value
    return AppConfig(**values)
