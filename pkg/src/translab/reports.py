"""Run-report assembly, JSON schema validation, atomic file writes."""

from __future__ import annotations

import json
import os
import tempfile
import time
from pathlib import Path

SCHEMA = {
    "type": "object",
    "required": ["kind", "config", "converged", "invariants"],
    "properties": {
        "kind": {"type": "string"},
        "timestamp": {"type": "string"},
        "config": {"type": "object"},
        "converged": {"type": "boolean"},
        "gradient_norm": {"type": "number"},
        "normal_residual": {"type": "number"},
        "x_m": {"type": "number"},
        "y_m": {"type": "number"},
        "z_m": {"type": "number"},
        "area_g": {"type": "number"},
        "diagnostics": {"type": "object"},
        "morse": {"type": "object"},
        "invariants": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "passed"],
                "properties": {
                    "name": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "margin": {"type": "number"},
                    "paper": {"type": "boolean"},
                },
            },
        },
        "notes": {"type": "array"},
    },
}


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so a killed run never leaves
    a partial file at the target path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def atomic_writer(path):
    """Context-like helper: returns (write(text)) bound to atomic semantics."""
    return lambda text: atomic_write_text(path, text)


def validate_report(report: dict, schema: dict = SCHEMA) -> list:
    """Minimal JSON-schema check (type/required/items); returns error list."""
    errors = []

    def walk(obj, sch, where):
        typ = sch.get("type")
        if typ == "object":
            if not isinstance(obj, dict):
                errors.append(f"{where}: expected object")
                return
            for req in sch.get("required", []):
                if req not in obj:
                    errors.append(f"{where}: missing required '{req}'")
            for key, sub in sch.get("properties", {}).items():
                if key in obj:
                    walk(obj[key], sub, f"{where}.{key}")
        elif typ == "array":
            if not isinstance(obj, list):
                errors.append(f"{where}: expected array")
                return
            item_schema = sch.get("items")
            if item_schema:
                for i, item in enumerate(obj):
                    walk(item, item_schema, f"{where}[{i}]")
        elif typ == "number":
            if not isinstance(obj, (int, float)) or isinstance(obj, bool):
                errors.append(f"{where}: expected number")
        elif typ == "string":
            if not isinstance(obj, str):
                errors.append(f"{where}: expected string")
        elif typ == "boolean":
            if not isinstance(obj, bool):
                errors.append(f"{where}: expected boolean")

    walk(report, schema, "$")
    return errors


def base_report(kind: str, config: dict) -> dict:
    return {
        "kind": kind,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config": config,
        "converged": False,
        "invariants": [],
        "notes": [],
    }
