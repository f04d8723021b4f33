import numpy as np
import pytest

from volseg.net import backend, kernels_np
from volseg.net.autograd import (Node, avg_pool_ceil, backward,
                                 concat_channels, relu, sigmoid,
                                 upsample_nearest)
from volseg.net.checkpoint import load_checkpoint, save_checkpoint
from volseg.net.layers import (BatchNorm3d, Conv3d, ConvBnRelu,
                               ConvTranspose3d)
from volseg.net.model import (DdspBlock, DdspConfig, NetConfig, SegNet,
                              fuse_outputs)
from volseg.volgrid import FormatError


# -- kernels ---------------------------------------------------------------

def _rand_case(rng, cin=2, cout=3, n=6):
    x = rng.normal(size=(2, cin, n, n, n))
    w = rng.normal(size=(cout, cin, 3, 3, 3))
    return x, w


@pytest.mark.parametrize("stride,dilation,padding", [
    (1, 1, 0), (1, 1, 1), (2, 1, 1), (1, 2, 2), (2, 2, 2),
])
def test_conv_forward_matches_naive(stride, dilation, padding):
    """Direct six-loop reference implementation as oracle."""
    rng = np.random.default_rng(0)
    x, w = _rand_case(rng, cin=2, cout=2, n=5)
    y = backend.conv3d_forward(x, w, stride, dilation, padding)
    b_, cin, nx, ny, nz = x.shape
    cout, _, k, _, _ = w.shape
    ox, oy, oz = kernels_np.conv_out_dims((nx, ny, nz), k, stride,
                                          dilation, padding)
    ref = np.zeros((b_, cout, ox, oy, oz))
    for b in range(b_):
        for o in range(cout):
            for ix in range(ox):
                for iy in range(oy):
                    for iz in range(oz):
                        acc = 0.0
                        for c in range(cin):
                            for u in range(k):
                                for v in range(k):
                                    for t in range(k):
                                        sx = ix * stride - padding + u * dilation
                                        sy = iy * stride - padding + v * dilation
                                        sz = iz * stride - padding + t * dilation
                                        if (0 <= sx < nx and 0 <= sy < ny
                                                and 0 <= sz < nz):
                                            acc += x[b, c, sx, sy, sz] \
                                                * w[o, c, u, v, t]
                        ref[b, o, ix, iy, iz] = acc
    np.testing.assert_allclose(y, ref, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("stride,dilation,padding", [
    (1, 1, 1), (2, 1, 1), (1, 2, 2),
])
def test_conv_gradients_are_adjoints(stride, dilation, padding):
    """<conv(x), gy> = <x, grad_input(gy)> = <w, grad_weight(x, gy)>."""
    rng = np.random.default_rng(1)
    x, w = _rand_case(rng)
    y = backend.conv3d_forward(x, w, stride, dilation, padding)
    gy = rng.normal(size=y.shape)
    gx = backend.conv3d_grad_input(gy, w, stride, dilation, padding,
                                   x.shape[2:])
    gw = backend.conv3d_grad_weight(x, gy, stride, dilation, padding,
                                    w.shape[2])
    lhs = float(np.sum(y * gy))
    assert float(np.sum(x * gx)) == pytest.approx(lhs, rel=1e-10)
    assert float(np.sum(w * gw)) == pytest.approx(lhs, rel=1e-10)


def test_ext_and_numpy_backends_agree():
    rng = np.random.default_rng(2)
    for stride, dilation, padding in [(1, 1, 1), (2, 1, 1), (1, 3, 3)]:
        x, w = _rand_case(rng)
        args = (stride, dilation, padding)
        for mod in ([backend._impl] if backend.BACKEND == "ext" else []):
            y_np = kernels_np.conv3d_forward(x, w, *args)
            y_ext = mod.conv3d_forward(x, w, *args)
            np.testing.assert_allclose(y_ext, y_np, rtol=1e-12, atol=1e-12)
            gy = rng.normal(size=y_np.shape)
            np.testing.assert_allclose(
                mod.conv3d_grad_input(gy, w, *args, x.shape[2:]),
                kernels_np.conv3d_grad_input(gy, w, *args, x.shape[2:]),
                rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(
                mod.conv3d_grad_weight(x, gy, *args, 3),
                kernels_np.conv3d_grad_weight(x, gy, *args, 3),
                rtol=1e-12, atol=1e-12)


# -- autograd ops ----------------------------------------------------------

def _fd_scalar(f, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        hi, lo = x.copy(), x.copy()
        hi[i] += h
        lo[i] -= h
        g[i] = (f(hi) - f(lo)) / (2 * h)
    return g


@pytest.mark.parametrize("op,factory", [
    ("relu", lambda n: relu(n)),
    ("sigmoid", lambda n: sigmoid(n)),
    ("pool2", lambda n: avg_pool_ceil(n, 2)),
    ("pool3", lambda n: avg_pool_ceil(n, 3)),  # 5 not divisible by 3
    ("up2", lambda n: upsample_nearest(n, 2, (10, 10, 10))),
])
def test_op_backward_matches_fd(op, factory):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 2, 5, 5, 5)) + 0.1  # keep off the relu kink
    seed_shape = factory(Node(x)).data.shape
    gy = rng.normal(size=seed_shape)

    def scalar(xa):
        return float(np.sum(factory(Node(xa)).data * gy))

    node = Node(x)
    out = factory(node)
    backward([(out, gy)])
    np.testing.assert_allclose(node.grad, _fd_scalar(scalar, x),
                               rtol=1e-6, atol=1e-8)


def test_concat_and_multiroot_backward():
    rng = np.random.default_rng(4)
    a = Node(rng.normal(size=(1, 2, 3, 3, 3)))
    b = Node(rng.normal(size=(1, 3, 3, 3, 3)))
    cat = concat_channels([a, b])
    s = sigmoid(cat)
    g1 = np.ones_like(cat.data)
    g2 = np.ones_like(s.data)
    backward([(cat, g1), (s, g2)])  # two roots sharing the tape
    expect_a = 1.0 + (s.data * (1 - s.data))[:, :2]
    np.testing.assert_allclose(a.grad, expect_a)
    assert b.grad.shape == b.data.shape


def test_diamond_graph_accumulates():
    x = Node(np.array([2.0]))
    y = Node(x.data * 3.0, (x,), lambda g: (3.0 * g,))
    z = Node(x.data + y.data, (x, y), lambda g: (g, g))
    backward([(z, np.array([1.0]))])
    assert x.grad[0] == pytest.approx(4.0)  # 1 + 3 through both paths


# -- layers ----------------------------------------------------------------

def _layer_fd_check(layer, x, params, rtol=1e-3):
    gy = np.random.default_rng(8).normal(size=layer(Node(x)).data.shape)
    node = Node(x)
    out = layer(node)
    backward([(out, gy.astype(out.data.dtype))])

    def scalar_x(xa):
        return float(np.sum(layer(Node(xa)).data * gy))

    np.testing.assert_allclose(node.grad, _fd_scalar(scalar_x, x),
                               rtol=rtol, atol=1e-6)
    for p in params:
        analytic = p.grad.copy()
        base = p.data.copy()

        def scalar_p(pa):
            p.data = pa
            try:
                return float(np.sum(layer(Node(x)).data * gy))
            finally:
                p.data = base

        np.testing.assert_allclose(analytic, _fd_scalar(scalar_p, base),
                                   rtol=rtol, atol=1e-6)
        p.zero_grad()


def test_conv3d_layer_gradients():
    rng = np.random.default_rng(5)
    layer = Conv3d("c", 2, 2, ksize=3, rng=rng)
    for p in layer.params():
        p.data = p.data.astype(np.float64)
    x = rng.normal(size=(1, 2, 4, 4, 4))
    _layer_fd_check(layer, x, layer.params())


def test_conv_transpose_layer_gradients_and_shape():
    rng = np.random.default_rng(6)
    layer = ConvTranspose3d("t", 3, 2)
    for p in layer.params():
        p.data = p.data.astype(np.float64)
    layer.w.data = layer.w.data + rng.normal(0, 0.1, layer.w.data.shape)
    x = rng.normal(size=(1, 3, 3, 3, 3))
    assert layer(Node(x)).data.shape == (1, 2, 6, 6, 6)
    _layer_fd_check(layer, x, layer.params())


def test_conv_transpose_init_preserves_constants():
    layer = ConvTranspose3d("t", 4, 4)
    x = np.full((1, 4, 3, 3, 3), 2.5, dtype=np.float32)
    y = layer(Node(x)).data
    np.testing.assert_allclose(y, 2.5, rtol=1e-6)


def test_batchnorm_training_stats_and_grad():
    rng = np.random.default_rng(7)
    bn = BatchNorm3d("bn", 2)
    bn.gamma.data = bn.gamma.data.astype(np.float64)
    bn.beta.data = bn.beta.data.astype(np.float64)
    x = rng.normal(3.0, 2.0, size=(2, 2, 4, 4, 4))
    y = bn(Node(x)).data
    # normalized output: per-channel mean ~0, var ~1
    np.testing.assert_allclose(y.mean(axis=(0, 2, 3, 4)), 0.0, atol=1e-10)
    np.testing.assert_allclose(y.var(axis=(0, 2, 3, 4)), 1.0, atol=1e-4)
    _layer_fd_check(bn, x, bn.params(), rtol=1e-4)


def test_batchnorm_eval_uses_running_moments():
    rng = np.random.default_rng(8)
    bn = BatchNorm3d("bn", 1)
    x = rng.normal(5.0, 3.0, size=(4, 1, 4, 4, 4)).astype(np.float32)
    for _ in range(200):
        bn(Node(x))
    bn.training = False
    y = bn(Node(x)).data
    assert abs(y.mean()) < 0.05
    assert abs(y.std() - 1.0) < 0.05
    # eval forward is deterministic and independent of batch composition
    y0 = bn(Node(x[:1])).data
    np.testing.assert_allclose(y0, y[:1], rtol=1e-6)


def test_conv_bn_relu_output_nonnegative():
    rng = np.random.default_rng(9)
    layer = ConvBnRelu("u", 2, 3, rng=rng)
    y = layer(Node(rng.normal(size=(2, 2, 6, 6, 6)).astype(np.float32)))
    assert (y.data >= 0).all()
    assert y.data.max() > 0


# -- block and net ---------------------------------------------------------

def test_ddsp_channel_count_formula():
    cfg = DdspConfig(dilation_rates=(1, 2, 3, 4), pooling_rates=(2, 4, 6),
                     growth_channels=2)
    assert cfg.branch_count == 7
    assert cfg.out_channels(16) == 16 + 7 * 2
    rng = np.random.default_rng(0)
    for dense in (True, False):
        block = DdspBlock("b", 5, cfg, dense=dense, rng=rng)
        x = Node(rng.normal(size=(1, 5, 8, 8, 8)).astype(np.float32))
        y = block(x)
        assert y.data.shape == (1, cfg.out_channels(5), 8, 8, 8)
        assert block.out_ch == cfg.out_channels(5)


def test_ddsp_dense_differs_from_parallel():
    cfg = DdspConfig(growth_channels=1)
    rng_x = np.random.default_rng(1)
    x = rng_x.normal(size=(1, 3, 8, 8, 8)).astype(np.float32)
    outs = []
    for dense in (True, False):
        block = DdspBlock("b", 3, cfg, dense=dense,
                          rng=np.random.default_rng(0))
        outs.append(block(Node(x)).data)
    assert outs[0].shape == outs[1].shape
    assert not np.allclose(outs[0], outs[1])


def test_ddsp_config_validation():
    with pytest.raises(ValueError):
        DdspConfig(dilation_rates=(2, 1))
    with pytest.raises(ValueError):
        DdspConfig(pooling_rates=(0, 2))
    with pytest.raises(ValueError):
        DdspConfig(growth_channels=0)


def test_net_config_validation():
    with pytest.raises(ValueError):
        NetConfig(widths=(4, 8))
    with pytest.raises(ValueError):
        NetConfig(long_mode="skip")
    with pytest.raises(ValueError):
        NetConfig(block_style="fancy")
    with pytest.raises(ValueError):
        NetConfig(fusion_mask=(False, True, True))


@pytest.mark.parametrize("long_mode", ["none", "residual", "concat"])
@pytest.mark.parametrize("block_style", ["non", "ddsp", "aspp"])
def test_segnet_forward_shapes(long_mode, block_style):
    net = SegNet(NetConfig(long_mode=long_mode, block_style=block_style),
                 seed=0)
    x = np.random.default_rng(0).normal(
        size=(1, 1, 8, 8, 8)).astype(np.float32)
    heads = net.forward(x)
    for key in ("main", "stage2", "stage3"):
        assert heads[key].data.shape == (1, 1, 8, 8, 8)
        assert np.all((heads[key].data > 0) & (heads[key].data < 1))


def test_segnet_rejects_bad_spatial():
    net = SegNet(seed=0)
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 1, 6, 6, 6), dtype=np.float32))


def test_segnet_all_params_receive_grads():
    net = SegNet(seed=0)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 1, 8, 8, 8)).astype(np.float32)
    heads = net.forward(x)
    seeds = {k: np.ones_like(heads[k].data) for k in heads}
    net.backward_heads(heads, seeds)
    missing = [p.name for p in net.parameters() if p.grad is None]
    assert missing == []
    # some tensors are legitimately zero at init (dead relu channels under
    # the 0.01-std weights), but most of the net must be live
    nonzero = sum(np.any(p.grad != 0) for p in net.parameters())
    assert nonzero > len(net.parameters()) * 0.75


def test_segnet_deterministic_construction():
    s1 = SegNet(seed=3).state()
    s2 = SegNet(seed=3).state()
    for k in s1:
        np.testing.assert_array_equal(s1[k], s2[k])
    s3 = SegNet(seed=4).state()
    assert any(not np.array_equal(s1[k], s3[k]) for k in s1)


def test_fuse_outputs():
    a, b, c = (np.full((2, 2, 2), v) for v in (0.2, 0.4, 0.9))
    np.testing.assert_allclose(fuse_outputs([a, b, c], (True, True, True)),
                               0.5)
    np.testing.assert_allclose(fuse_outputs([a, b, c], (True, False, False)),
                               0.2)
    with pytest.raises(ValueError):
        fuse_outputs([a, b, c], (False, False, False))


# -- checkpoints -----------------------------------------------------------

def test_checkpoint_roundtrip_bit_identical(tmp_path):
    net = SegNet(seed=0)
    p1 = tmp_path / "a.vsc"
    p2 = tmp_path / "b.vsc"
    save_checkpoint(net.state(), p1)
    tensors = load_checkpoint(p1)
    net2 = SegNet(seed=99)
    net2.load_state(tensors)
    save_checkpoint(net2.state(), p2)
    assert p1.read_bytes() == p2.read_bytes()
    x = np.random.default_rng(0).normal(
        size=(1, 1, 8, 8, 8)).astype(np.float32)
    net.set_training(False)
    net2.set_training(False)
    np.testing.assert_array_equal(net.forward(x)["main"].data,
                                  net2.forward(x)["main"].data)


def test_checkpoint_errors(tmp_path):
    p = tmp_path / "x.vsc"
    p.write_bytes(b"NOPE\n\n")
    with pytest.raises(FormatError):
        load_checkpoint(p)
    save_checkpoint({"a": np.zeros((2, 2))}, p)
    truncated = p.read_bytes()[:-4]
    p.write_bytes(truncated)
    with pytest.raises(FormatError):
        load_checkpoint(p)
    with pytest.raises(ValueError):
        save_checkpoint({"bad name": np.zeros(2)}, p)


def test_load_state_validates(tmp_path):
    net = SegNet(seed=0)
    state = net.state()
    bad = dict(state)
    first = net.parameters()[0].name
    bad[first] = np.zeros((1, 1))
    with pytest.raises(ValueError):
        net.load_state(bad)
    del bad[first]
    with pytest.raises(KeyError):
        net.load_state(bad)
