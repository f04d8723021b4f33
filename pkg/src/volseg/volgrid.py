"""Dense 3D scalar grids with physical spacing, elementwise math and file I/O.

Voxel order is x-fastest everywhere (linear index = x + nx*(y + ny*z)),
matching the MetaImage raw convention.  Payloads are float32; reductions
that feed losses or metrics accumulate in float64.
"""

import os
import re

import numpy as np


class FormatError(ValueError):
    """Malformed or unsupported volume file."""


class DimsMismatchError(ValueError):
    """Operands do not share grid dimensions."""


class Volume:
    """Immutable dense 3D scalar grid.

    data is a float32 array of shape (nx, ny, nz); ``linear()`` returns the
    x-fastest flat view.  spacing is millimeters per voxel along (x, y, z).
    """

    __slots__ = ("data", "spacing")

    def __init__(self, data, spacing=(1.0, 1.0, 1.0)):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {arr.shape}")
        if any(n <= 0 for n in arr.shape):
            raise ValueError(f"voxel counts must be positive, got {arr.shape}")
        sp = tuple(float(s) for s in spacing)
        if len(sp) != 3 or any(s <= 0 for s in sp):
            raise ValueError(f"spacing must be 3 positive reals, got {spacing}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", sp)

    def __setattr__(self, name, value):
        raise AttributeError("Volume is immutable")

    @property
    def dims(self):
        return self.data.shape

    @property
    def voxel_count(self):
        return int(self.data.size)

    def linear(self):
        """Flat float32 view in x-fastest order."""
        return self.data.ravel(order="F")

    @classmethod
    def from_linear(cls, flat, dims, spacing=(1.0, 1.0, 1.0)):
        nx, ny, nz = dims
        flat = np.asarray(flat, dtype=np.float32)
        if flat.size != nx * ny * nz:
            raise ValueError(
                f"data length {flat.size} != nx*ny*nz = {nx * ny * nz}"
            )
        return cls(flat.reshape((nx, ny, nz), order="F"), spacing)

    def with_data(self, data):
        return Volume(data, self.spacing)

    def __eq__(self, other):
        return (
            isinstance(other, Volume)
            and self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"Volume(dims={self.dims}, spacing={self.spacing})"


class BinaryMask(Volume):
    """Volume whose every voxel is exactly 0 or 1."""

    def __init__(self, data, spacing=(1.0, 1.0, 1.0)):
        super().__init__(data, spacing)
        d = self.data
        if not np.all((d == 0) | (d == 1)):
            raise ValueError("mask voxels must be exactly 0 or 1")


class ProbabilityMap(Volume):
    """Volume whose every voxel lies in [0, 1]."""

    def __init__(self, data, spacing=(1.0, 1.0, 1.0)):
        super().__init__(data, spacing)
        d = self.data
        if not (np.all(d >= 0.0) and np.all(d <= 1.0)):
            raise ValueError("probability voxels must lie in [0, 1]")


def linear_index(x, y, z, dims):
    nx, ny, _ = dims
    return x + nx * (y + ny * z)


def index_to_xyz(i, dims):
    nx, ny, _ = dims
    x = i % nx
    y = (i // nx) % ny
    z = i // (nx * ny)
    return x, y, z


# -- elementwise arithmetic ------------------------------------------------

def _check_dims(a, b):
    if a.dims != b.dims:
        raise DimsMismatchError(f"dims mismatch: {a.dims} vs {b.dims}")


def add(a, b):
    _check_dims(a, b)
    return a.with_data(a.data + b.data)


def mul(a, b):
    _check_dims(a, b)
    return a.with_data(a.data * b.data)


def scale(a, k):
    return a.with_data(a.data * np.float32(k))


def dot(a, b):
    """Sum_i a_i * b_i accumulated in float64."""
    _check_dims(a, b)
    return float(np.dot(a.data.ravel().astype(np.float64),
                        b.data.ravel().astype(np.float64)))


def l2_norm_sq(a):
    return dot(a, a)


# -- VVF format ------------------------------------------------------------
#
# ASCII header, newline-terminated lines:
#   VVF1
#   dims <nx> <ny> <nz>
#   spacing <sx> <sy> <sz>
#   dtype u8 | f32
#   <empty line>
# then the raw little-endian payload, x-fastest.

_VVF_DTYPES = {"u8": np.dtype("<u1"), "f32": np.dtype("<f4")}


def write_vvf(v, path, dtype="f32"):
    """Write a Volume in the VVF container; bytes are deterministic."""
    if dtype not in _VVF_DTYPES:
        raise FormatError(f"unknown dtype token {dtype!r}")
    flat = v.linear()
    if dtype == "u8":
        if not np.all((flat == np.rint(flat)) & (flat >= 0) & (flat <= 255)):
            raise FormatError("u8 payload requires integral voxels in [0, 255]")
        payload = flat.astype("<u1").tobytes()
    else:
        payload = flat.astype("<f4").tobytes()
    nx, ny, nz = v.dims
    sx, sy, sz = v.spacing
    header = (
        f"VVF1\n"
        f"dims {nx} {ny} {nz}\n"
        f"spacing {sx!r} {sy!r} {sz!r}\n"
        f"dtype {dtype}\n"
        f"\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(payload)


def read_vvf(path):
    with open(path, "rb") as f:
        buf = f.read()
    head, sep, payload = buf.partition(b"\n\n")
    if not sep:
        raise FormatError("malformed header: missing blank line terminator")
    lines = head.decode("ascii", errors="replace").split("\n")
    if len(lines) != 4 or lines[0] != "VVF1":
        raise FormatError("malformed header: expected VVF1 magic and 4 lines")
    m = re.fullmatch(r"dims (\d+) (\d+) (\d+)", lines[1])
    if not m:
        raise FormatError(f"malformed header: bad dims line {lines[1]!r}")
    nx, ny, nz = (int(g) for g in m.groups())
    parts = lines[2].split()
    if len(parts) != 4 or parts[0] != "spacing":
        raise FormatError(f"malformed header: bad spacing line {lines[2]!r}")
    try:
        spacing = tuple(float(p) for p in parts[1:])
    except ValueError as e:
        raise FormatError(f"malformed header: bad spacing value: {e}") from e
    if not lines[3].startswith("dtype "):
        raise FormatError(f"malformed header: bad dtype line {lines[3]!r}")
    token = lines[3][len("dtype "):]
    if token not in _VVF_DTYPES:
        raise FormatError(f"unknown dtype token {token!r}")
    dt = _VVF_DTYPES[token]
    expected = nx * ny * nz * dt.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"payload length {len(payload)} != expected {expected} "
            f"for dims {nx}x{ny}x{nz} dtype {token}"
        )
    flat = np.frombuffer(payload, dtype=dt)
    return Volume.from_linear(flat, (nx, ny, nz), spacing)


# -- MetaImage (.mhd) subset ----------------------------------------------

_MHD_DTYPES = {"MET_UCHAR": np.dtype("<u1"), "MET_FLOAT": np.dtype("<f4")}


def read_mhd_subset(path):
    """Read the supported MetaImage subset: uncompressed local-raw 3D scalar."""
    keys = {}
    with open(path, "r", encoding="ascii", errors="replace") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"malformed MHD line {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            keys[k] = v
    if keys.get("ObjectType", "Image") != "Image":
        raise FormatError(f"unsupported ObjectType {keys.get('ObjectType')!r}")
    if keys.get("NDims", "3") != "3":
        raise FormatError(f"unsupported NDims {keys.get('NDims')!r}")
    if keys.get("CompressedData", "False").lower() == "true":
        raise FormatError("compressed MHD data is not supported")
    etype = keys.get("ElementType")
    if etype not in _MHD_DTYPES:
        raise FormatError(f"unsupported ElementType {etype!r}")
    try:
        dims = tuple(int(t) for t in keys["DimSize"].split())
        spacing = tuple(float(t) for t in
                        keys.get("ElementSpacing", "1 1 1").split())
    except (KeyError, ValueError) as e:
        raise FormatError(f"malformed MHD header: {e}") from e
    if len(dims) != 3 or len(spacing) != 3:
        raise FormatError("DimSize and ElementSpacing must have 3 entries")
    raw_name = keys.get("ElementDataFile")
    if not raw_name or raw_name.upper() == "LIST":
        raise FormatError(f"unsupported ElementDataFile {raw_name!r}")
    raw_path = os.path.join(os.path.dirname(os.path.abspath(path)), raw_name)
    if not os.path.exists(raw_path):
        raise FormatError(f"referenced raw file missing: {raw_path}")
    dt = _MHD_DTYPES[etype]
    with open(raw_path, "rb") as f:
        payload = f.read()
    expected = dims[0] * dims[1] * dims[2] * dt.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"raw payload length {len(payload)} != expected {expected}"
        )
    return Volume.from_linear(np.frombuffer(payload, dtype=dt), dims, spacing)
