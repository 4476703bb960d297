"""Versioned checkpoint files: a JSON header plus named float tensors.

Layout is a zip archive containing ``meta.json`` (format version, artifact
kind, config dict, tensor manifest) and one raw ``.npy`` entry per tensor.
Tensors round-trip bit-exact.
"""

from __future__ import annotations

import io
import json
import zipfile
from typing import Any, Dict

import numpy as np
import torch

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, kind: str, config: Dict[str, Any], state_dict: Dict[str, torch.Tensor]) -> None:
    tensors = {name: t.detach().cpu().numpy() for name, t in state_dict.items()}
    manifest = {name: {"shape": list(a.shape), "dtype": str(a.dtype)} for name, a in tensors.items()}
    meta = {"format_version": FORMAT_VERSION, "kind": kind, "config": config, "tensors": manifest}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=1, sort_keys=True))
        for name, arr in tensors.items():
            buf = io.BytesIO()
            np.save(buf, arr, allow_pickle=False)
            zf.writestr(f"tensors/{name}.npy", buf.getvalue())


def load_checkpoint(path, expected_kind: str | None = None):
    """Returns (kind, config, state_dict). Verifies version and manifest."""
    with zipfile.ZipFile(path, "r") as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {meta.get('format_version')!r}")
        if expected_kind is not None and meta["kind"] != expected_kind:
            raise CheckpointError(f"expected checkpoint kind {expected_kind!r}, found {meta['kind']!r}")
        state = {}
        for name, info in meta["tensors"].items():
            arr = np.load(io.BytesIO(zf.read(f"tensors/{name}.npy")), allow_pickle=False)
            if list(arr.shape) != info["shape"] or str(arr.dtype) != info["dtype"]:
                raise CheckpointError(f"tensor {name!r} does not match its manifest entry")
            state[name] = torch.from_numpy(arr)
    return meta["kind"], meta["config"], state
