"""Byte-stable checkpoint container: ASCII manifest + f32 payloads.

Layout:
    VSCKPT1
    tensors <count>
    <name> <d0> <d1> ...     (one line per tensor, manifest order)
    <empty line>
    concatenated little-endian float32 payloads in manifest order
"""

import numpy as np

from ..volgrid import FormatError


def save_checkpoint(tensors, path):
    """tensors: ordered name -> array mapping."""
    lines = ["VSCKPT1", f"tensors {len(tensors)}"]
    payloads = []
    for name, arr in tensors.items():
        if any(ch.isspace() for ch in name):
            raise ValueError(f"tensor name may not contain whitespace: {name!r}")
        arr = np.asarray(arr)
        lines.append(" ".join([name] + [str(d) for d in arr.shape]))
        payloads.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n\n").encode("ascii"))
        for p in payloads:
            f.write(p)


def load_checkpoint(path):
    with open(path, "rb") as f:
        buf = f.read()
    head, sep, payload = buf.partition(b"\n\n")
    if not sep:
        raise FormatError("malformed checkpoint: missing manifest terminator")
    lines = head.decode("ascii", errors="replace").split("\n")
    if len(lines) < 2 or lines[0] != "VSCKPT1":
        raise FormatError("malformed checkpoint: bad magic")
    try:
        count = int(lines[1].split()[1])
    except (IndexError, ValueError) as e:
        raise FormatError(f"malformed checkpoint manifest: {e}") from e
    if len(lines) != 2 + count:
        raise FormatError("manifest line count does not match tensor count")
    tensors = {}
    offset = 0
    for line in lines[2:]:
        parts = line.split()
        name, shape = parts[0], tuple(int(d) for d in parts[1:])
        n = int(np.prod(shape)) if shape else 1
        raw = payload[offset * 4:(offset + n) * 4]
        if len(raw) != n * 4:
            raise FormatError(f"payload truncated at tensor {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        offset += n
    if len(payload) != offset * 4:
        raise FormatError("trailing bytes after last tensor payload")
    return tensors
