"""CSV and manifest output.

CSV files open with '#'-prefixed metadata lines (schema id, package version,
master seed, config digest) followed by a header row and data rows.  Floats
are written with repr (shortest round-trip), so identical runs produce
byte-identical bodies; timestamps live only in the JSON manifest.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from pathlib import Path

from . import __version__

SCHEMA_PREFIX = "bbmfront"


def config_digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, schema: str, header: list[str], rows,
              seed: int | None = None, digest: str | None = None) -> None:
    lines = [f"# schema: {SCHEMA_PREFIX}/{schema}/v1",
             f"# version: {SCHEMA_PREFIX} {__version__}"]
    if seed is not None:
        lines.append(f"# seed: {seed}")
    if digest is not None:
        lines.append(f"# config_digest: {digest}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Returns (metadata dict, header list, rows as lists of strings)."""
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[str]] = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = v.strip()
            continue
        if header is None:
            header = line.split(",")
        else:
            rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path}: no header row found")
    return meta, header, rows


class ManifestWriter:
    """Collects output files and writes the run manifest for a directory."""

    def __init__(self, out_dir, subcommand: str, digest: str, seed: int):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.subcommand = subcommand
        self.digest = digest
        self.seed = seed
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out_dir / name

    def finalize(self) -> Path:
        manifest = {
            "subcommand": self.subcommand,
            "config_digest": self.digest,
            "master_seed": self.seed,
            "version": f"{SCHEMA_PREFIX} {__version__}",
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "outputs": sorted(self.outputs),
        }
        p = self.out_dir / "manifest.json"
        p.write_text(json.dumps(manifest, indent=2) + "\n")
        return p
