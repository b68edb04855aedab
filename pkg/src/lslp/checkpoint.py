"""Self-describing network checkpoints.

A checkpoint is a zip archive (stored, fixed timestamps, so identical
parameters give identical bytes) holding

* ``header.json``: format tag, pyramid level, free-form metadata and, per
  network, its kind, architecture descriptor and tensor table
  (name, shape, dtype ``<f4``, sha256 of the payload);
* ``tensors/<network>/<tensor>.bin``: raw little-endian float32 payloads.
"""
from __future__ import annotations

import hashlib
import json
import zipfile
from pathlib import Path

import numpy as np

from .nets import NetworkParams

FORMAT = "lslp-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class LevelMismatchError(CheckpointError):
    pass


def _write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(networks: dict, path, *, level: int | None = None, metadata: dict | None = None) -> Path:
    """Write ``{name: NetworkParams}`` to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format": FORMAT, "version": VERSION, "level": level,
              "metadata": metadata or {}, "networks": {}}
    payloads = []
    for net_name in sorted(networks):
        params: NetworkParams = networks[net_name]
        table = []
        for t_name in sorted(params.tensors):
            data = np.ascontiguousarray(params.tensors[t_name], dtype="<f4").tobytes()
            member = f"tensors/{net_name}/{t_name}.bin"
            table.append({"name": t_name, "shape": list(params.tensors[t_name].shape), "dtype": "<f4",
                          "sha256": hashlib.sha256(data).hexdigest(), "member": member})
            payloads.append((member, data))
        header["networks"][net_name] = {"kind": params.kind, "arch": params.arch, "tensors": table}

    with zipfile.ZipFile(path, "w") as zf:
        _write(zf, "header.json", json.dumps(header, indent=2, sort_keys=True).encode())
        for member, data in payloads:
            _write(zf, member, data)
    return path


def load_checkpoint(path, *, expected_level: int | None = None):
    """Return ``(networks, header)``; ``header`` carries ``level`` and ``metadata``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {path} does not exist")
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json"))
            if header.get("format") != FORMAT:
                raise CheckpointVersionError(f"{path}: not an {FORMAT} archive")
            if header.get("version") != VERSION:
                raise CheckpointVersionError(
                    f"{path}: checkpoint version {header.get('version')} unsupported (expected {VERSION})")
            networks = {}
            for net_name, entry in header["networks"].items():
                tensors = {}
                for t in entry["tensors"]:
                    data = zf.read(t["member"])
                    if hashlib.sha256(data).hexdigest() != t["sha256"]:
                        raise CorruptCheckpointError(f"{path}: checksum mismatch in {t['member']}")
                    shape = tuple(t["shape"])
                    if len(data) != 4 * int(np.prod(shape)):
                        raise CorruptCheckpointError(f"{path}: wrong payload size for {t['member']}")
                    tensors[t["name"]] = np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float32)
                networks[net_name] = NetworkParams(entry["kind"], entry["arch"], tensors)
    except CheckpointError:
        raise
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, EOFError, OSError, ValueError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc

    if expected_level is not None and header.get("level") != expected_level:
        raise LevelMismatchError(
            f"{path}: checkpoint is for level {header.get('level')}, expected level {expected_level}")
    return networks, header
