#!/usr/bin/env python3
"""Validate shipped specs and every JSON file under run directories against schemas/."""

import json
import pathlib
import sys

import jsonschema
from referencing import Registry, Resource

ROOT = pathlib.Path(__file__).resolve().parent.parent
SCHEMAS = ROOT / "schemas"

BY_NAME = {
    "metrics.json": "metrics",
    "comparison.json": "comparison",
    "training.json": "training",
    "manifest.json": "manifest",
    "summary.json": "summary",
    "decomposition.json": "check",
    "capacity.json": "capacity",
    "shortcut.json": "shortcut",
    "shift-table.json": "shift-table",
    "rae.json": "variant",
    "svae.json": "variant",
    "pvae.json": "variant",
    "psvae.json": "variant",
}


def load_registry():
    resources = []
    for path in SCHEMAS.glob("*.schema.json"):
        resources.append((path.name, Resource.from_contents(json.loads(path.read_text()))))
    return Registry().with_resources(resources)


def validator(registry, name):
    schema = json.loads((SCHEMAS / f"{name}.schema.json").read_text())
    return jsonschema.Draft7Validator(schema, registry=registry)


def main(argv):
    registry = load_registry()
    checked, failures = 0, 0
    targets = [(p, "spec") for p in sorted((ROOT / "specs").glob("*.json"))]
    for arg in argv[1:]:
        base = pathlib.Path(arg)
        for path in sorted(base.rglob("*.json")):
            name = BY_NAME.get(path.name)
            if name is None:
                print(f"no schema for {path}")
                failures += 1
                continue
            targets.append((path, name))
    for path, name in targets:
        errors = list(validator(registry, name).iter_errors(json.loads(path.read_text())))
        checked += 1
        for e in errors[:5]:
            print(f"{path}: {'/'.join(map(str, e.absolute_path))}: {e.message}")
        failures += bool(errors)
    print(f"validated {checked} files, {failures} invalid")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
