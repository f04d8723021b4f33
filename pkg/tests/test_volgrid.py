import numpy as np
import pytest

from volseg.volgrid import (BinaryMask, DimsMismatchError, FormatError,
                            ProbabilityMap, Volume, add, dot, index_to_xyz,
                            l2_norm_sq, linear_index, mul, read_mhd_subset,
                            read_vvf, scale, write_vvf)


def test_volume_invariants():
    v = Volume(np.zeros((2, 3, 4)), spacing=(1.0, 1.5, 2.0))
    assert v.dims == (2, 3, 4)
    assert v.voxel_count == 24
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 2, 2)), spacing=(1.0, 0.0, 1.0))


def test_volume_immutable():
    v = Volume(np.zeros((2, 2, 2)))
    with pytest.raises((ValueError, AttributeError)):
        v.data[0, 0, 0] = 1.0


def test_from_linear_length_check():
    with pytest.raises(ValueError, match="length"):
        Volume.from_linear(np.zeros(7), (2, 2, 2))


def test_mask_and_probability_validation():
    BinaryMask(np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        BinaryMask(np.full((2, 2, 2), 0.5))
    ProbabilityMap(np.full((2, 2, 2), 0.5))
    with pytest.raises(ValueError):
        ProbabilityMap(np.full((2, 2, 2), 1.5))


def test_linear_index_bijection():
    dims = (3, 4, 5)
    seen = set()
    for z in range(dims[2]):
        for y in range(dims[1]):
            for x in range(dims[0]):
                i = linear_index(x, y, z, dims)
                assert index_to_xyz(i, dims) == (x, y, z)
                seen.add(i)
    assert seen == set(range(60))


def test_x_fastest_linearization():
    data = np.arange(8, dtype=np.float32)
    v = Volume.from_linear(data, (2, 2, 2))
    # index 1 is (x=1, y=0, z=0)
    assert v.data[1, 0, 0] == 1.0
    assert v.data[0, 1, 0] == 2.0
    assert v.data[0, 0, 1] == 4.0
    np.testing.assert_array_equal(v.linear(), data)


def test_dot_examples():
    a = Volume.from_linear([1, 0, 0, 0], (4, 1, 1))
    b = Volume.from_linear([0.5, 0.5, 0, 0], (4, 1, 1))
    assert dot(a, b) == pytest.approx(0.5)
    m = BinaryMask(np.array([[[1.0, 0.0], [1.0, 1.0]]]).reshape(1, 2, 2))
    assert dot(m, m) == 3.0  # foreground voxel count
    assert np.all(scale(a, 0).data == 0)
    with pytest.raises(DimsMismatchError):
        dot(a, Volume(np.zeros((2, 2, 2))))


def test_dot_bilinear_symmetric():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = Volume(rng.normal(size=(3, 3, 3)))
        b = Volume(rng.normal(size=(3, 3, 3)))
        c = Volume(rng.normal(size=(3, 3, 3)))
        assert dot(a, b) == pytest.approx(dot(b, a))
        assert dot(add(a, b), c) == pytest.approx(dot(a, c) + dot(b, c),
                                                  rel=1e-6, abs=1e-6)
        assert l2_norm_sq(a) >= 0
    zero = Volume(np.zeros((3, 3, 3)))
    assert l2_norm_sq(zero) == 0.0
    assert np.all(mul(a, zero).data == 0)


def test_vvf_roundtrip_trivial(tmp_path):
    v = Volume(np.zeros((2, 2, 2)))
    p = tmp_path / "v.vvf"
    write_vvf(v, p)
    assert read_vvf(p) == v


def test_vvf_u8_minimal_bytes(tmp_path):
    v = Volume(np.ones((1, 1, 1)))
    p = tmp_path / "one.vvf"
    write_vvf(v, p, dtype="u8")
    raw = p.read_bytes()
    assert raw.endswith(b"\n\n\x01")
    assert raw.startswith(b"VVF1\ndims 1 1 1\n")


def test_vvf_f32_payload_length(tmp_path):
    v = Volume(np.zeros((3, 4, 5)))
    p = tmp_path / "v.vvf"
    write_vvf(v, p, dtype="f32")
    raw = p.read_bytes()
    payload = raw.split(b"\n\n", 1)[1]
    assert len(payload) == 4 * 3 * 4 * 5


def test_vvf_roundtrip_random_bit_identical(tmp_path):
    p = tmp_path / "r.vvf"
    for seed in range(200):
        rng = np.random.default_rng(seed)
        v = Volume(rng.normal(size=(8, 8, 8)).astype(np.float32),
                   spacing=tuple(rng.uniform(0.5, 3.0, 3)))
        write_vvf(v, p)
        first = p.read_bytes()
        back = read_vvf(p)
        assert np.array_equal(back.data, v.data)
        assert back.spacing == v.spacing
        write_vvf(back, p)
        assert p.read_bytes() == first


def test_vvf_mask_u8_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    m = BinaryMask((rng.random((4, 4, 4)) < 0.3).astype(np.float32))
    p = tmp_path / "m.vvf"
    write_vvf(m, p, dtype="u8")
    assert np.array_equal(read_vvf(p).data, m.data)


def test_vvf_u8_rejects_nonintegral(tmp_path):
    with pytest.raises(FormatError, match="integral"):
        write_vvf(Volume(np.full((2, 2, 2), 0.5)), tmp_path / "x.vvf", "u8")


def test_vvf_payload_length_error(tmp_path):
    p = tmp_path / "bad.vvf"
    header = b"VVF1\ndims 3 3 3\nspacing 1.0 1.0 1.0\ndtype u8\n\n"
    p.write_bytes(header + b"\x00" * 26)
    with pytest.raises(FormatError, match="payload length"):
        read_vvf(p)


@pytest.mark.parametrize("header", [
    b"WRONG\ndims 2 2 2\nspacing 1.0 1.0 1.0\ndtype u8\n\n",
    b"VVF1\ndims 2 2\nspacing 1.0 1.0 1.0\ndtype u8\n\n",
    b"VVF1\ndims 2 2 2\nspacing 1.0 1.0\ndtype u8\n\n",
    b"VVF1\ndims 2 2 2\nspacing 1.0 1.0 1.0\ndtype i64\n\n",
])
def test_vvf_header_errors(tmp_path, header):
    p = tmp_path / "bad.vvf"
    p.write_bytes(header + b"\x00" * 8)
    with pytest.raises(FormatError):
        read_vvf(p)


def _write_mhd(tmp_path, dims=(2, 2, 2), etype="MET_UCHAR", raw=None,
               extra=""):
    nvox = dims[0] * dims[1] * dims[2]
    if raw is None:
        raw = bytes(range(nvox))
    (tmp_path / "img.raw").write_bytes(raw)
    header = (
        "ObjectType = Image\nNDims = 3\n"
        f"DimSize = {dims[0]} {dims[1]} {dims[2]}\n"
        "ElementSpacing = 1.0 1.0 1.5\n"
        f"ElementType = {etype}\n"
        f"{extra}"
        "ElementDataFile = img.raw\n"
    )
    p = tmp_path / "img.mhd"
    p.write_text(header)
    return p


def test_mhd_minimal(tmp_path):
    p = _write_mhd(tmp_path)
    v = read_mhd_subset(p)
    assert v.dims == (2, 2, 2)
    assert v.spacing == (1.0, 1.0, 1.5)
    np.testing.assert_array_equal(v.linear(), np.arange(8))


def test_mhd_unsupported_type(tmp_path):
    p = _write_mhd(tmp_path, etype="MET_SHORT")
    with pytest.raises(FormatError, match="ElementType"):
        read_mhd_subset(p)


def test_mhd_compressed_rejected(tmp_path):
    p = _write_mhd(tmp_path, extra="CompressedData = True\n")
    with pytest.raises(FormatError, match="compressed"):
        read_mhd_subset(p)


def test_mhd_missing_raw(tmp_path):
    p = _write_mhd(tmp_path)
    (tmp_path / "img.raw").unlink()
    with pytest.raises(FormatError, match="missing"):
        read_mhd_subset(p)


def test_mhd_cross_format_oracle(tmp_path):
    """A volume written as VVF and re-described by an MHD header must read
    back with identical voxels."""
    rng = np.random.default_rng(3)
    v = Volume(rng.normal(size=(4, 3, 2)).astype(np.float32))
    vvf = tmp_path / "v.vvf"
    write_vvf(v, vvf)
    payload = vvf.read_bytes().split(b"\n\n", 1)[1]
    (tmp_path / "conv.raw").write_bytes(payload)
    (tmp_path / "conv.mhd").write_text(
        "ObjectType = Image\nNDims = 3\nDimSize = 4 3 2\n"
        "ElementSpacing = 1.0 1.0 1.0\nElementType = MET_FLOAT\n"
        "ElementDataFile = conv.raw\n")
    back = read_mhd_subset(tmp_path / "conv.mhd")
    np.testing.assert_array_equal(back.data, v.data)
