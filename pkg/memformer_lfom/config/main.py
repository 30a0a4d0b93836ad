from __future__ import annotations

import argparse
import ast
import logging
import os
import threading
import typing
from inspect import getdoc
from pathlib import Path
from types import NoneType
from types import UnionType
from typing import Any
from typing import Literal
from typing import get_args
from typing import get_origin

import tomlkit
from pydantic import BaseModel

from memformer_lfom.config.model import SettingsModel
from memformer_lfom.const import DEFAULT_CONFIG_FILE
from memformer_lfom.const import ENV_PREFIX

log = logging.getLogger(__name__)


class MagicDefault:
    pass


def build_args_parser(
    parser: argparse.ArgumentParser | None = None,
    settings_model: type[BaseModel] | None = None,
    field_name2type: dict[str, Any] | None = None,
    recursion_depth: int = 0,
    positional_count: int = 0,
) -> tuple[argparse.ArgumentParser, dict[str, Any]]:
    """Derive the command line from the settings models.

    ``foo_bar`` becomes ``--foo-bar``; bools become switches; the single
    ``list[str]`` field becomes the positional arguments.
    """
    if parser is None:
        parser = argparse.ArgumentParser(
            prog="memformer",
            description="Memformers as linear first-order optimizers: train, verify, reproduce.",
        )

    if field_name2type is None:
        field_name2type = {}

    if settings_model is not None:
        parser = parser.add_argument_group(
            title=settings_model.__name__,
            description=getdoc(settings_model),
        )
    else:
        settings_model = SettingsModel

    for field_name, field_detail in settings_model.model_fields.items():
        if field_name in field_name2type:
            log.critical(f"duplicate field name: {field_name}")
            raise ValueError(f"duplicate field name: {field_name}")
        field_name2type[field_name] = field_detail.annotation
        if field_detail.default_factory is not None:
            if recursion_depth > 0:
                raise ValueError("not supported nested settings models")
            build_args_parser(
                parser,
                field_detail.default_factory,
                field_name2type,
                recursion_depth + 1,
                positional_count,
            )
            continue

        type_hint = typing.get_type_hints(settings_model)[field_name]
        original_type = typing.get_origin(type_hint)
        args = typing.get_args(type_hint)
        if original_type is Literal:
            continue
        if original_type is None:
            args = [type_hint]
        args_name = field_name.replace("_", "-").lower()

        if original_type is list:
            if positional_count > 0:
                raise ValueError("not supported multiple positional arguments")
            if args[0] is not str:
                raise ValueError("list type must be str")
            positional_count += 1
            parser.add_argument(
                f"{args_name}",
                nargs="*",
                type=str,
                help=field_detail.description,
            )
            continue

        for arg in args:
            if arg is bool:
                parser.add_argument(
                    f"--{args_name}",
                    action="store_true"
                    if field_detail.default is False
                    else "store_false",
                    default=MagicDefault,
                    help=field_detail.description,
                )
            elif arg == NoneType:
                continue
            else:
                parser.add_argument(
                    f"--{args_name}",
                    type=arg,
                    default=MagicDefault,
                    help=field_detail.description,
                )
    return parser, field_name2type


class ConfigManager:
    """Singleton configuration manager"""

    _instance: ConfigManager | None = None
    _settings: SettingsModel | None = None
    _default_config_file_path = DEFAULT_CONFIG_FILE
    _config_file_lock = threading.Lock()

    def __new__(cls) -> ConfigManager:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def _read_toml_file(self, file_path: Path) -> dict:
        """Read and parse a TOML file, returning {} if it is missing or broken."""
        try:
            with self._config_file_lock:
                with file_path.open(encoding="utf-8") as f:
                    content = tomlkit.load(f)
            return self._process_toml_content(content.unwrap())
        except FileNotFoundError:
            log.debug(f"Config file not found: {file_path}")
            return {}
        except Exception as e:
            log.warning(f"Error reading config file {file_path}: {e}")
            return {}

    def _process_toml_content(self, content: dict) -> dict:
        """Convert "null" strings (TOML has no null) back to None, recursively."""
        processed = {}
        for key, value in content.items():
            if isinstance(value, dict):
                processed[key] = self._process_toml_content(value)
            elif isinstance(value, str) and value == "null":
                processed[key] = None
            else:
                processed[key] = value
        return processed

    def _write_toml_file(self, file_path: Path, content: dict) -> None:
        """Write content to a TOML file through a temp file in the same directory.

        Args:
            file_path: Path to write the TOML file
            content: Nested settings dictionary
        """

        def convert_none_to_null(d):
            result = {}
            for k, v in d.items():
                if v is None:
                    result[k] = "null"
                elif isinstance(v, dict):
                    result[k] = convert_none_to_null(v)
                else:
                    result[k] = v
            return result

        document = tomlkit.document()
        # plain keys must precede the first table
        items = sorted(
            convert_none_to_null(content).items(),
            key=lambda item: isinstance(item[1], dict),
        )
        for key, value in items:
            if isinstance(value, dict):
                section = tomlkit.table()
                for k, v in value.items():
                    section.add(k, v)
                document.add(key, section)
            else:
                document.add(key, value)

        temp_path = file_path.with_name(file_path.name + ".tmp")
        try:
            with self._config_file_lock:
                file_path.parent.mkdir(parents=True, exist_ok=True)
                with temp_path.open("w", encoding="utf-8") as f:
                    tomlkit.dump(document, f)
                temp_path.replace(file_path)
        except Exception as e:
            log.warning(f"Error writing config file {file_path}: {e}")
            raise

    def _is_file_content_identical(self, file_path: Path, content: dict) -> bool:
        try:
            return self._read_toml_file(file_path) == content
        except Exception as e:
            log.warning(f"Error comparing file content: {e}")
            return False

    def parse_env_vars(
        self,
        dedup_field_name: set[str] | None = None,
        recursion_depth: int = 0,
        settings_model: type[BaseModel] | None = None,
    ) -> dict:
        return self.parse_dict_vars(
            dedup_field_name,
            recursion_depth,
            settings_model,
            os.environ,
            prefix=ENV_PREFIX,
        )

    def parse_dict_vars(
        self,
        dedup_field_name: set[str] | None = None,
        recursion_depth: int = 0,
        settings_model: type[BaseModel] | None = None,
        dict_vars: dict | None = None,
        prefix: str = "",
    ) -> dict:
        """Pick the flat ``PREFIX_FIELD`` entries of ``dict_vars`` into a nested settings dict."""
        settings = {}
        if dedup_field_name is None:
            dedup_field_name = set()
        if settings_model is None:
            settings_model = SettingsModel

        dict_vars = {k.replace("-", "_").upper(): v for k, v in dict_vars.items()}
        for field_name, field_detail in settings_model.model_fields.items():
            if field_name in dedup_field_name:
                log.critical(f"duplicate field name: {field_name}")
                raise ValueError(f"duplicate field name: {field_name}")
            dedup_field_name.add(field_name)
            if field_detail.default_factory is not None:
                if recursion_depth > 0:
                    raise ValueError("not supported nested settings models")
                parsed = self.parse_dict_vars(
                    dedup_field_name,
                    recursion_depth + 1,
                    field_detail.default_factory,
                    dict_vars,
                    prefix=prefix,
                )
                if parsed:
                    settings[field_name] = parsed
                continue

            env_name = f"{prefix}{field_name.upper()}"
            if env_name not in dict_vars:
                continue
            type_hint = typing.get_type_hints(settings_model)[field_name]
            try:
                settings[field_name] = self._convert_env_value(
                    dict_vars[env_name],
                    type_hint,
                    get_origin(type_hint),
                    get_args(type_hint),
                )
            except (ValueError, TypeError, SyntaxError) as e:
                log.warning(f"Could not convert {env_name}: {e}")

        if recursion_depth == 0:
            log.debug(f"Parsed settings: {settings}")
        return settings

    def _convert_env_value(
        self, value: Any, type_hint: Any, origin_type: Any, type_args: tuple
    ) -> Any:
        """Convert a string (or already typed CLI value) to ``type_hint``."""
        if origin_type is typing.Union or origin_type is UnionType:
            if value is None:
                return None
            if (
                NoneType in type_args
                and isinstance(value, str)
                and value.lower() in ("none", "null")
            ):
                return None
            for arg in type_args:
                if arg is NoneType:
                    continue
                try:
                    return self._convert_env_value(
                        value, arg, get_origin(arg), get_args(arg)
                    )
                except (ValueError, TypeError):
                    continue
            raise ValueError(
                f"Could not convert '{value}' to any of the types: {type_args}"
            )
        if origin_type is list:
            if isinstance(value, list | tuple):
                return [str(v) for v in value]
            literal = ast.literal_eval(value) if value.strip().startswith("[") else None
            if isinstance(literal, list):
                return [str(v) for v in literal]
            return value.split()
        if type_hint is bool:
            if isinstance(value, bool):
                return value
            return value.lower() in ("true", "1", "yes", "y", "on")
        elif type_hint is int:
            return int(value)
        elif type_hint is float:
            return float(value)
        elif type_hint is str:
            return str(value)
        return type_hint(value)

    def _deep_merge(self, target: dict, source: dict) -> dict:
        for key, value in source.items():
            if (
                key in target
                and isinstance(target[key], dict)
                and isinstance(value, dict)
            ):
                self._deep_merge(target[key], value)
            else:
                target[key] = value
        return target

    def merge_settings(self, config_dicts: list[dict]) -> dict:
        """Merge configuration dictionaries, highest priority first."""
        result = {}
        for config in reversed(config_dicts):
            self._deep_merge(result, config)
        return result

    def test_config(self, args: dict) -> bool:
        try:
            self._build_model_from_args(SettingsModel, args)
            return True
        except Exception:
            log.exception("Error in test_config:")
            return False

    def initialize_config(self, argv: list[str] | None = None) -> SettingsModel:
        """Resolve settings: CLI > environment > --config-file > user default file."""
        parser, _ = build_args_parser()
        args = parser.parse_args(argv)
        cli_args: dict[str, Any] = {
            k.replace("-", "_"): v
            for k, v in vars(args).items()
            if v is not MagicDefault
        }
        cli_parsed_args = self.parse_dict_vars(dict_vars=cli_args)
        env_vars = self.parse_env_vars()

        default_config_file = self._read_toml_file(Path(self._default_config_file_path))
        if not self.test_config(default_config_file):
            log.error(
                f"Error in test_config: {self._default_config_file_path}, skip it"
            )
            default_config_file = {}

        merged_args = self.merge_settings([cli_parsed_args, env_vars])
        config_file = merged_args.pop("config_file", None)
        if config_file:
            user_config = self._read_toml_file(Path(config_file))
            user_config.pop("config_file", None)
            if not self.test_config(user_config):
                log.error(f"Error in test_config: {config_file}, skip it")
                user_config = {}
            merged_args = self.merge_settings(
                [merged_args, user_config, default_config_file]
            )
            merged_args["config_file"] = config_file
        else:
            merged_args = self.merge_settings([merged_args, default_config_file])

        settings = self._build_model_from_args(SettingsModel, merged_args)
        settings.validate_settings()
        self._settings = settings
        log.debug(f"Initialized settings: {settings.model_dump_json()}")
        return settings

    def write_config_file(self, file_path: Path, settings: SettingsModel) -> None:
        """Write resolved settings so a run can be replayed with --config-file."""
        content = settings.model_dump(mode="json", exclude={"config_file"})
        content["basic"].pop("command", None)
        if self._is_file_content_identical(file_path, content):
            log.debug(f"Config file {file_path} is identical to the settings, skip it")
            return
        self._write_toml_file(file_path, content)
        log.info(f"Written config file to {file_path}")

    def _build_model_from_args(
        self, model_class: type[BaseModel], args_dict: dict
    ) -> BaseModel:
        return model_class(**args_dict)

    @property
    def settings(self) -> SettingsModel:
        """Get current settings"""
        if self._settings is None:
            raise RuntimeError("Settings not initialized")
        return self._settings
