"""Core checkpoint format: supernet hash, rank map, raw parameter blocks.

Binary mode is an .npz archive and round-trips bit-exactly. JSON mode stores
floats with Python's shortest round-trip repr (17 significant digits at
most), which also reparses to the identical doubles.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .encoding import EdgeCore, TnDistribution
from .errors import DataFormatError
from .supernet import Supernet, supernet_sha256

FORMAT_VERSION = 1


def save_checkpoint(dist: TnDistribution, path: str | Path, mode: str = "binary") -> None:
    path = Path(path)
    if mode == "binary":
        payload = {
            f"beta_{c.edge_id}": c.values for c in dist.cores
        }
        payload["rank_values"] = np.array(
            [dist.ranks[n] for n in dist.supernet.nodes], dtype=np.int64
        )
        header = {
            "format_version": FORMAT_VERSION,
            "supernet_sha256": supernet_sha256(dist.supernet),
            "nodes": list(dist.supernet.nodes),
        }
        payload["header_json"] = np.frombuffer(
            json.dumps(header).encode("utf-8"), dtype=np.uint8
        )
        with open(path, "wb") as fh:
            np.savez(fh, **payload)
    elif mode == "json":
        doc = {
            "format_version": FORMAT_VERSION,
            "supernet_sha256": supernet_sha256(dist.supernet),
            "ranks": {n: dist.ranks[n] for n in dist.supernet.nodes},
            "betas": [c.values.tolist() for c in dist.cores],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
    else:
        raise DataFormatError(f"unknown checkpoint mode {mode!r}")


def load_checkpoint(path: str | Path, supernet: Supernet) -> TnDistribution:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"PK":  # zip container -> npz
        data = np.load(path)
        header = json.loads(bytes(data["header_json"]).decode("utf-8"))
        _check_hash(header, supernet)
        rank_values = data["rank_values"]
        if len(rank_values) != supernet.num_nodes:
            raise DataFormatError("checkpoint rank map does not match the supernet")
        ranks = {n: int(r) for n, r in zip(supernet.nodes, rank_values)}
        cores = [
            EdgeCore(e.id, np.asarray(data[f"beta_{e.id}"], dtype=np.float64))
            for e in supernet.edges
        ]
        return TnDistribution(supernet, ranks, cores)
    doc = json.loads(path.read_text(encoding="utf-8"))
    _check_hash(doc, supernet)
    ranks = {str(k): int(v) for k, v in doc["ranks"].items()}
    cores = [
        EdgeCore(e.id, np.asarray(doc["betas"][e.id - 1], dtype=np.float64))
        for e in supernet.edges
    ]
    return TnDistribution(supernet, ranks, cores)


def _check_hash(header: dict, supernet: Supernet) -> None:
    expected = supernet_sha256(supernet)
    found = header.get("supernet_sha256")
    if found != expected:
        raise DataFormatError(
            f"checkpoint was written for supernet {found}, not {expected}"
        )
