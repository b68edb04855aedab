from __future__ import annotations

import hashlib
import json
import time
from contextlib import contextmanager
from pathlib import Path

from threadpoolctl import threadpool_limits


@contextmanager
def single_threaded(threads: int = 1):
    """Pin BLAS/OpenMP pools; a fixed thread count keeps float reductions
    in a fixed order, which bitwise reproducibility relies on."""
    with threadpool_limits(limits=threads):
        yield


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_hashes(root) -> dict:
    """``relative path -> sha256`` for every file below ``root``."""
    root = Path(root)
    return {str(p.relative_to(root)): file_sha256(p) for p in sorted(root.rglob("*")) if p.is_file()}


def write_run_manifest(path, command: str, config: dict, seeds: dict, inputs: list, outputs: list,
                       started: float) -> Path:
    """Provenance record of one CLI run: what was run, with which settings,
    and the hash of every input and output file."""
    path = Path(path)

    def hashed(paths):
        out = {}
        for p in paths:
            p = Path(p)
            if p.is_dir():
                out.update({str(p / k): v for k, v in tree_hashes(p).items()})
            elif p.is_file():
                out[str(p)] = file_sha256(p)
        return out

    record = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": hashed(inputs),
        "outputs": hashed(outputs),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path
