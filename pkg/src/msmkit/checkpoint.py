"""Self-describing checkpoint container shared by all trained models.

A checkpoint is a zip archive holding ``manifest.json`` plus one raw blob
per named parameter: u32 ndim, u32 dims..., then little-endian float32
data, row-major.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
import zipfile

import numpy as np
import torch


def _encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def _decode_tensor(blob: bytes) -> np.ndarray:
    (ndim,) = struct.unpack_from("<I", blob, 0)
    shape = struct.unpack_from(f"<{ndim}I", blob, 4)
    return np.frombuffer(blob, dtype="<f4", offset=4 + 4 * ndim).reshape(shape).copy()


def state_dict_hash(state: dict, manifest: dict) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(manifest, sort_keys=True).encode())
    for name in sorted(state):
        h.update(name.encode())
        h.update(np.ascontiguousarray(state[name].detach().cpu().numpy(), dtype="<f4").tobytes())
    return h.hexdigest()


def save_checkpoint(path, module: torch.nn.Module, manifest: dict) -> None:
    path = str(path)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
        for name, tensor in module.state_dict().items():
            zf.writestr(f"params/{name}.bin", _encode_tensor(tensor.detach().cpu().numpy()))


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (manifest, state_dict of float32 torch tensors)."""
    path = str(path)
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        state = {}
        for info in zf.infolist():
            if info.filename.startswith("params/") and info.filename.endswith(".bin"):
                name = info.filename[len("params/"):-len(".bin")]
                state[name] = torch.from_numpy(_decode_tensor(zf.read(info)))
    return manifest, state


def dataset_hash(images) -> str:
    """Content hash of a list of ImageGrids (order-sensitive)."""
    h = hashlib.sha256()
    for im in images:
        h.update(np.ascontiguousarray(im.pixels, dtype="<f8").tobytes())
    return h.hexdigest()


def roundtrip_bytes(module: torch.nn.Module, manifest: dict) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("manifest.json", json.dumps(manifest, sort_keys=True))
        for name, tensor in module.state_dict().items():
            zf.writestr(f"params/{name}.bin", _encode_tensor(tensor.detach().cpu().numpy()))
    return buf.getvalue()
