"""
Flat `key = value` config files and the matching command-line flags.
"""

import argparse
import typing
from dataclasses import MISSING, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Type

from guirl.errors import DataError

TRUE_VALUES = ("1", "true", "yes", "on")
FALSE_VALUES = ("0", "false", "no", "off")


def parse_bool(text: str) -> bool:
    value = str(text).strip().lower()
    if value in TRUE_VALUES:
        return True
    if value in FALSE_VALUES:
        return False
    raise ValueError(f"expected a boolean (on/off, true/false), got {text!r}")


def _converter(tp: Any) -> Callable[[str], Any]:
    optional = False
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        optional = len(args) < len(typing.get_args(tp))
        tp = args[0]
    if typing.get_origin(tp) is typing.Literal:
        tp = type(typing.get_args(tp)[0])
    base = {bool: parse_bool, int: int, float: float}.get(tp, str)

    def convert(text: str) -> Any:
        if optional and str(text).strip().lower() in ("", "none", "null"):
            return None
        return base(text)

    return convert


def field_converters(config_cls: Type) -> Dict[str, Callable[[str], Any]]:
    hints = typing.get_type_hints(config_cls)
    return {f.name: _converter(hints[f.name]) for f in fields(config_cls)}


def coerce_values(
    config_cls: Type, raw: Dict[str, str], where: str = "config"
) -> Dict[str, Any]:
    converters = field_converters(config_cls)
    out = {}
    for key, text in raw.items():
        if key not in converters:
            raise DataError(f"{where}: unknown config key {key!r}")
        try:
            out[key] = converters[key](text)
        except ValueError as e:
            raise DataError(f"{where}: bad value for {key}: {e}") from e
    return out


def parse_assignments(tokens: List[str], where: str) -> Dict[str, str]:
    raw = {}
    for token in tokens:
        if "=" not in token:
            raise DataError(f"{where}: expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        raw[key.strip().replace("-", "_")] = value.strip()
    return raw


def read_config_file(path: str | Path) -> Dict[str, str]:
    """Raw `key = value` pairs; `#` starts a comment, later keys win."""
    raw: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise DataError(f"{path}:{lineno}: expected key = value, got {text!r}")
            key, value = text.split("=", 1)
            raw[key.strip()] = value.strip()
    return raw


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if value is None:
        return "none"
    return str(value)


def write_config_file(config: Any, path: str | Path, header: Optional[str] = None) -> None:
    lines = [header] if header else []
    lines += [f"{f.name} = {_format_value(getattr(config, f.name))}" for f in fields(config)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def add_config_arguments(
    parser: argparse.ArgumentParser, config_cls: Type, shown_defaults: Any = None
) -> None:
    """
    One `--flag` per dataclass field, all defaulting to None (unset).

    Help texts show the values of `shown_defaults` (an instance) when given,
    else the dataclass defaults.
    """
    converters = field_converters(config_cls)
    for f in fields(config_cls):
        if shown_defaults is not None:
            default = getattr(shown_defaults, f.name)
        elif f.default is not MISSING:
            default = f.default
        elif f.default_factory is not MISSING:
            default = f.default_factory()
        else:
            default = None
        parser.add_argument(
            f"--{f.name.replace('_', '-')}",
            dest=f.name,
            type=converters[f.name],
            default=None,
            metavar=f.name.split("_")[-1].upper(),
            help=f"{f.metadata.get('help', '')} (default: {_format_value(default)})",
        )


def config_overrides(args: argparse.Namespace, config_cls: Type) -> Dict[str, Any]:
    return {
        f.name: getattr(args, f.name)
        for f in fields(config_cls)
        if getattr(args, f.name, None) is not None
    }


def parse_grid_file(path: str | Path) -> List[Tuple[str, Dict[str, str]]]:
    """
    Variants of an ablation grid, one per line: `[name:] key=value key=value ...`.

    Unnamed variants are called `variant-<n>`.
    """
    variants = []
    names = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            name = f"variant-{len(variants) + 1}"
            head, sep, rest = text.partition(":")
            if sep and "=" not in head:
                name, text = head.strip(), rest.strip()
            where = f"{path}:{lineno}"
            if not name:
                raise DataError(f"{where}: empty variant name")
            if name in names:
                raise DataError(f"{where}: duplicate variant name {name!r}")
            names.add(name)
            variants.append((name, parse_assignments(text.split(), where)))
    return variants
