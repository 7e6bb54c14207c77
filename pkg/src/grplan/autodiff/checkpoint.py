"""Binary checkpoint format.

Layout: ``MAGIC`` (8 bytes), format version (uint32 LE), header length
(uint32 LE), UTF-8 JSON header, then each parameter's float64 values in
little-endian order, in the order the header lists them. The header holds
``params`` ([name, shape] pairs), ``meta`` (free-form JSON) and ``crc32`` of
the payload.
"""

import json
import struct
import zlib

import numpy as np

MAGIC = b"GRPCKPT\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params, meta=None):
    """Write an ordered mapping ``name -> ndarray`` to ``path``."""
    names = list(params)
    payload = b"".join(np.ascontiguousarray(params[k], dtype="<f8").tobytes() for k in names)
    header = {
        "params": [[k, list(np.shape(params[k]))] for k in names],
        "meta": meta or {},
        "crc32": zlib.crc32(payload),
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(hbytes)) + hbytes + payload)


def load_checkpoint(path):
    """Return ``(params, meta)``; raises CheckpointError on any mismatch."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    header = json.loads(blob[16:16 + hlen])
    payload = blob[16 + hlen:]
    if zlib.crc32(payload) != header["crc32"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    params, offset = {}, 0
    for name, shape in header["params"]:
        size = int(np.prod(shape)) * 8
        if offset + size > len(payload):
            raise CheckpointError(f"{path}: truncated payload at {name}")
        params[name] = np.frombuffer(payload[offset:offset + size], dtype="<f8").reshape(shape).astype(np.float64)
        offset += size
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing bytes")
    return params, header["meta"]
