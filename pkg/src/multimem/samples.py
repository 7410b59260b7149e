"""Retained MCMC draws and their on-disk archive format.

An archive is a directory holding ``manifest.json`` plus one flat binary file
per retained field per draw block (``<field>.<block>.bin``).  Each binary
file starts with a little-endian ``uint64`` rank followed by that many
``uint64`` dimensions, then the row-major little-endian ``float64`` payload.
The final chain state lives in ``state.<name>.bin`` files in the same
format, so a chain can be resumed.  The manifest records SHA-256 digests of
every file; :func:`load_archive` verifies them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ChainSamples", "ArchiveError", "write_array", "read_array", "save_archive", "load_archive"]

FORMAT_VERSION = 1


class ArchiveError(ValueError):
    """Corrupt, incomplete or mismatched chain archive."""


@dataclass
class ChainSamples:
    """Thinned post-burn-in draws keyed by field name.

    ``fields[name]`` has the draw index as its leading axis.  ``meta`` holds
    the run configuration (seed, burn-in, thinning, iterations done, dataset
    digest, ...).  ``final_state`` and ``rng_state`` allow resumption.
    """

    fields: dict
    meta: dict = field(default_factory=dict)
    final_state: dict | None = None
    rng_state: dict | None = None
    blocks: list = field(default_factory=list)

    def __getitem__(self, name):
        try:
            return self.fields[name]
        except KeyError:
            raise KeyError(f"field {name!r} was not retained (have: {sorted(self.fields)})") from None

    def __contains__(self, name):
        return name in self.fields

    @property
    def n_draws(self) -> int:
        if not self.fields:
            return 0
        return len(next(iter(self.fields.values())))


def write_array(path, array) -> str:
    """Write ``array`` in the shape-prefixed float64 format; return its SHA-256."""
    a = np.ascontiguousarray(array, dtype="<f8")
    header = np.array([a.ndim, *a.shape], dtype="<u8")
    payload = header.tobytes() + a.tobytes()
    Path(path).write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def read_array(path, expected_digest=None) -> np.ndarray:
    payload = Path(path).read_bytes()
    if expected_digest is not None and hashlib.sha256(payload).hexdigest() != expected_digest:
        raise ArchiveError(f"checksum mismatch for {path}")
    if len(payload) < 8:
        raise ArchiveError(f"{path}: truncated header")
    ndim = int(np.frombuffer(payload[:8], dtype="<u8")[0])
    shape = tuple(int(s) for s in np.frombuffer(payload[8 : 8 + 8 * ndim], dtype="<u8"))
    data = np.frombuffer(payload[8 + 8 * ndim :], dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise ArchiveError(f"{path}: payload does not match shape {shape}")
    return data.reshape(shape).copy()


def save_archive(samples: ChainSamples, directory, append_from: int | None = None) -> Path:
    """Write ``samples`` to ``directory``.

    With ``append_from=k`` only draws ``k:`` are written, as a new block
    appended to the archive already in ``directory``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / "manifest.json"
    if append_from is None:
        for old in directory.glob("*.bin"):
            old.unlink()
        blocks = []
        start = 0
    else:
        blocks = json.loads(manifest_path.read_text())["blocks"]
        start = append_from
    files = {}
    index = len(blocks)
    for name, arr in samples.fields.items():
        fname = f"{name}.{index:03d}.bin"
        files[name] = {"file": fname, "sha256": write_array(directory / fname, arr[start:])}
    blocks.append({"draws": samples.n_draws - start, "fields": files})

    state_files = {}
    for name, arr in (samples.final_state or {}).items():
        fname = f"state.{name}.bin"
        state_files[name] = {"file": fname, "sha256": write_array(directory / fname, arr)}

    manifest = {
        "format": "multimem-chain",
        "version": FORMAT_VERSION,
        "meta": samples.meta,
        "blocks": blocks,
        "final_state": state_files,
        "rng_state": samples.rng_state,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    samples.blocks = blocks
    return directory


def load_archive(directory, verify: bool = True) -> ChainSamples:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ArchiveError(f"{directory}: no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != "multimem-chain":
        raise ArchiveError(f"{directory}: not a chain archive")
    pieces = {}
    for block in manifest["blocks"]:
        for name, entry in block["fields"].items():
            arr = read_array(directory / entry["file"], entry["sha256"] if verify else None)
            pieces.setdefault(name, []).append(arr)
    fields = {name: np.concatenate(parts, axis=0) for name, parts in pieces.items()}
    state = {
        name: read_array(directory / entry["file"], entry["sha256"] if verify else None)
        for name, entry in manifest.get("final_state", {}).items()
    }
    return ChainSamples(fields, manifest["meta"], state or None, manifest.get("rng_state"), manifest["blocks"])
