"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    bytes 0-3    magic b"SZCK"
    bytes 4-7    format version (uint32), currently 1
    bytes 8-15   header length H (uint64)
    bytes 16-..  header: UTF-8 JSON
    then         payload: concatenated tensor data, float32 little-endian

The JSON header holds {"config": ..., "extra": ..., "tensors": [{"name",
"shape", "offset", "count"}...], "payload_sha256": hex}.  Tensors are stored
as 32-bit little-endian floats in header order; the checksum covers the
payload, so truncation or corruption is detected at load.
"""

import hashlib
import json
import struct

import numpy as np

MAGIC = b"SZCK"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, tensors, config=None, extra=None):
    index = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        data = arr.astype("<f4").tobytes()
        index.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)}
        )
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    header = {
        "config": config or {},
        "extra": extra or {},
        "tensors": index,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        f.write(payload)


def load_checkpoint(path):
    """Returns (tensors, config, extra); raises CheckpointError on damage."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {blob[:4]!r})")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} (this build reads {VERSION})"
        )
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    payload = blob[16 + hlen :]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch (corrupt file)")
    tensors = {}
    for rec in header["tensors"]:
        start = rec["offset"]
        count = rec["count"]
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=start)
        tensors[rec["name"]] = arr.reshape(rec["shape"]).astype(np.float64)
    return tensors, header["config"], header["extra"]
