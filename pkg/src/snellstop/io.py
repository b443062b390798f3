"""Config/spec file reading and versioned CSV output."""
from __future__ import annotations

import csv
import io
import json
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import MalformedSpec


def read_structured(path) -> dict:
    """Read a TOML (default) or JSON file into a dict."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MalformedSpec(f"cannot read {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise MalformedSpec(f"cannot parse {path}: {exc}") from None


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def render_csv(schema: str, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def write_atomic(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, schema: str, header, rows) -> Path:
    return write_atomic(path, render_csv(schema, header, rows))


def read_csv(path) -> tuple:
    """Return (schema, header, rows) of a CSV written by :func:`write_csv`."""
    lines = Path(path).read_text().splitlines()
    schema = lines[0].removeprefix("# schema: ") if lines and lines[0].startswith("#") else None
    body = lines[1:] if schema is not None else lines
    rows = list(csv.reader(body))
    return schema, rows[0], rows[1:]
