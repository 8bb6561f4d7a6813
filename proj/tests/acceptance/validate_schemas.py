"""Validates recorded API responses against the published schemas.

Usage: validate_schemas.py SCHEMA_DIR RECORDS

RECORDS holds one JSON object per line: {"schema": "<file>", "body": {...}}.
Prints one line per failure and exits 1 if any record is invalid.
"""

import json
import pathlib
import sys

import jsonschema
from referencing import Registry, Resource


def main() -> int:
    schema_dir = pathlib.Path(sys.argv[1])
    schemas = {}
    registry = Registry()
    for path in sorted(schema_dir.glob("*.json")):
        doc = json.loads(path.read_text())
        jsonschema.Draft202012Validator.check_schema(doc)
        schemas[path.name] = doc
        registry = registry.with_resource(doc["$id"], Resource.from_contents(doc))

    failures = 0
    count = 0
    for lineno, line in enumerate(pathlib.Path(sys.argv[2]).read_text().splitlines(), 1):
        if not line.strip():
            continue
        record = json.loads(line)
        count += 1
        name = record["schema"]
        if name not in schemas:
            print(f"record {lineno}: unknown schema {name}")
            failures += 1
            continue
        validator = jsonschema.Draft202012Validator(schemas[name], registry=registry)
        for error in validator.iter_errors(record["body"]):
            print(f"record {lineno} ({name}): {error.json_path}: {error.message}")
            failures += 1
    print(f"validated {count} records against {len(schemas)} schemas, {failures} errors")
    return 1 if failures or count == 0 else 0


if __name__ == "__main__":
    sys.exit(main())
