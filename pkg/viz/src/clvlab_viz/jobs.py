"""Plot job description: what to draw, from which artifacts, to which file.

A job is a small JSON document.  Artifact inputs are given per role, either
as plain paths or, when a run manifest is supplied, as artifact names that
resolve relative to the manifest and must be listed in it.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("colored-trajectory", "heatmap", "lcurve", "series-overlay")

# per-kind input roles: (required, optional)
ROLES = {
    "colored-trajectory": (("series", "angles"), ()),
    "heatmap": (("grid",), ()),
    "lcurve": (("curve",), ("knee",)),
    "series-overlay": (("series", "reconstruction", "labels"), ()),
}

STYLE_KEYS = {"cmap", "xlabel", "ylabel", "title", "dpi"}


class SchemaError(ValueError):
    """An input document does not match its documented schema."""


@dataclass(frozen=True)
class PlotJob:
    kind: str
    inputs: dict
    output: Path
    style: dict = field(default_factory=dict)


def _require_keys(doc: dict, allowed: set, context: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SchemaError(f"{context} has unknown keys: {unknown}")


def read_manifest(path: Path) -> set:
    """Names of the artifacts a pipeline run recorded."""
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    files = doc.get("files")
    if not isinstance(files, list):
        raise SchemaError(f"{path} has no 'files' list")
    names = set()
    for entry in files:
        if not isinstance(entry, dict) or "name" not in entry:
            raise SchemaError(f"{path} has a malformed 'files' entry")
        names.add(entry["name"])
    return names


def load_job(path) -> PlotJob:
    """Parse and validate a job document; resolve inputs to existing files."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("job document must be an object")
    _require_keys(doc, {"kind", "inputs", "output", "style", "manifest"}, "job")

    kind = doc.get("kind")
    if kind not in KINDS:
        raise SchemaError(f"unknown kind {kind!r}; expected one of {list(KINDS)}")
    if "output" not in doc:
        raise SchemaError("job needs an 'output' image path")
    inputs = doc.get("inputs")
    if not isinstance(inputs, dict):
        raise SchemaError("job 'inputs' must map roles to artifact paths")

    style = doc.get("style", {})
    if not isinstance(style, dict):
        raise SchemaError("job 'style' must be an object")
    _require_keys(style, STYLE_KEYS, "style")

    required, optional = ROLES[kind]
    _require_keys(inputs, set(required) | set(optional), f"{kind} inputs")
    for role in required:
        if role not in inputs:
            raise SchemaError(f"{kind} job is missing required input '{role}'")

    base = path.parent
    listed = None
    if "manifest" in doc:
        manifest = (base / doc["manifest"]).resolve()
        if not manifest.is_file():
            raise SchemaError(f"manifest {manifest} does not exist")
        listed = read_manifest(manifest)
        base = manifest.parent

    resolved = {}
    for role, value in inputs.items():
        if listed is not None and value not in listed:
            raise SchemaError(f"input '{value}' is not listed in the manifest")
        p = (base / value).resolve()
        if not p.is_file():
            raise SchemaError(f"input {p} does not exist")
        resolved[role] = p

    output = Path(doc["output"])
    if not output.is_absolute():
        output = path.parent / output
    return PlotJob(kind=kind, inputs=resolved, output=output, style=dict(style))
