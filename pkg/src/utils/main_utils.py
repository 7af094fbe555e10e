import math
import os
import sys
from datetime import datetime, timezone

import numpy as np
import yaml
import json
from pandas import DataFrame

from src.constants import REPORT_SIGNIFICANT_DIGITS
from src.exception import MyException, ConfigError
from src.logger import logging


def read_yaml_file(file_path: str) -> dict:
    """Reads a YAML or JSON document (JSON is parsed as a YAML subset)."""
    try:
        with open(file_path, "rb") as yaml_file:
            return yaml.safe_load(yaml_file)

    except Exception as e:
        raise MyException(e, sys) from e


def write_yaml_file(file_path: str, content: object, replace: bool = False) -> None:
    try:
        if replace:
            if os.path.exists(file_path):
                os.remove(file_path)
        os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
        with open(file_path, "w") as file:
            yaml.safe_dump(content, file, sort_keys=False)
    except Exception as e:
        raise MyException(e, sys) from e


def round_significant(value: float, digits: int = REPORT_SIGNIFICANT_DIGITS) -> float:
    if value == 0 or not math.isfinite(value):
        return value
    return float(f"{value:.{digits - 1}e}")


def to_jsonable(obj, digits: int = REPORT_SIGNIFICANT_DIGITS):
    """
    Converts reports made of dicts, lists, dataclass dicts and numpy values into
    builtin JSON types, rounding floats to `digits` significant digits.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            return None
        return round_significant(value, digits)
    if isinstance(obj, datetime):
        return obj.isoformat()
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(to_jsonable(report), indent=4)


def write_json_report(file_path: str, report: dict) -> None:
    """
    Method Name :   write_json_report
    Description :   Writes a report as indented JSON with rounded floats

    On Failure  :   Write an exception log and then raise an exception
    """
    try:
        os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
        with open(file_path, "w", encoding="utf-8") as report_file:
            json.dump(to_jsonable(report), report_file, indent=4)
        logging.info(f"Report written to {file_path}")
    except Exception as e:
        raise MyException(e, sys) from e


def parse_utc(value) -> datetime:
    """Parses an ISO-8601 instant; naive values are taken as UTC."""
    if isinstance(value, datetime):
        stamp = value
    else:
        try:
            stamp = datetime.fromisoformat(str(value).replace("Z", "+00:00"))
        except ValueError as e:
            raise ConfigError(f"invalid UTC instant {value!r}", sys) from e
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


def apply_overrides(config: dict, overrides: list) -> dict:
    """
    Applies `dotted.key=value` overrides in place. Values are parsed as YAML so
    numbers, booleans and lists keep their type.
    """
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value", sys)
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = config
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-mapping value", sys)
        node[parts[-1]] = yaml.safe_load(raw)
        logging.info(f"Config override applied: {key} = {node[parts[-1]]!r}")
    return config


def report_to_frame(report: dict) -> DataFrame:
    """Flattens a nested report into a two-column table for --table output."""
    rows = []

    def walk(prefix, node):
        if isinstance(node, dict):
            for k, v in node.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(node, list) and node and isinstance(node[0], (dict, list)):
            for i, v in enumerate(node):
                walk(f"{prefix}[{i}]", v)
        else:
            rows.append((prefix, node))

    walk("", to_jsonable(report))
    return DataFrame(rows, columns=["key", "value"])
