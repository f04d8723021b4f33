"""The desk-scale 3D encoder-decoder with the dense dilation/pooling block.

Three resolution stages: full, half, quarter.  The bottleneck block mixes
dilated-convolution branches and pyramid-pooling branches with dense
channel concatenation; long connections fuse encoder features into the
decoder; three supervision heads emit full-resolution probability maps.
"""

from dataclasses import dataclass, field

import numpy as np

from ..losses import SupervisionWeights
from .autograd import (Node, add, backward, concat_channels, relu, sigmoid,
                       upsample_nearest, avg_pool_ceil)
from .layers import BatchNorm3d, Conv3d, ConvBnRelu, ConvTranspose3d

LONG_MODES = ("none", "residual", "concat")
BLOCK_STYLES = ("non", "ddsp", "aspp")


@dataclass(frozen=True)
class DdspConfig:
    """Rates and per-branch width of the bottleneck block."""

    dilation_rates: tuple = (1, 2, 3, 4)
    pooling_rates: tuple = (2, 4, 6)
    growth_channels: int = 2

    def __post_init__(self):
        for rates in (self.dilation_rates, self.pooling_rates):
            if any(r <= 0 for r in rates):
                raise ValueError(f"rates must be positive: {rates}")
            if list(rates) != sorted(set(rates)):
                raise ValueError(f"rates must be strictly increasing: {rates}")
        if self.growth_channels <= 0:
            raise ValueError("growth_channels must be positive")

    @property
    def branch_count(self):
        return len(self.dilation_rates) + len(self.pooling_rates)

    def out_channels(self, in_channels):
        return in_channels + self.branch_count * self.growth_channels


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 1
    widths: tuple = (4, 8, 16)  # full, half, quarter resolution stages
    long_mode: str = "residual"
    block_style: str = "ddsp"
    ddsp: DdspConfig = field(default_factory=DdspConfig)
    supervision: SupervisionWeights = field(default_factory=SupervisionWeights)
    fusion_mask: tuple = (True, True, True)

    def __post_init__(self):
        if len(self.widths) != 3:
            raise ValueError("exactly 3 stage widths required")
        if self.long_mode not in LONG_MODES:
            raise ValueError(f"long_mode must be one of {LONG_MODES}")
        if self.block_style not in BLOCK_STYLES:
            raise ValueError(f"block_style must be one of {BLOCK_STYLES}")
        if len(self.fusion_mask) != 3 or not self.fusion_mask[0]:
            raise ValueError("fusion mask needs 3 entries with main enabled")


class DdspBlock:
    """Dilated and pyramid-pooling branches joined by concatenation.

    dense=True feeds each branch the concatenation of the block input and
    all previous branch outputs; dense=False (parallel) feeds every branch
    the input alone.  The output always concatenates the input with all
    branch outputs: channels = C_in + branch_count * growth.
    """

    def __init__(self, name, in_ch, cfg: DdspConfig, dense=True, rng=None):
        self.cfg = cfg
        self.dense = dense
        g = cfg.growth_channels
        self.branches = []
        ch = in_ch
        for i, rate in enumerate(cfg.dilation_rates):
            bin_ch = ch if dense else in_ch
            self.branches.append(
                ("dilate", rate,
                 ConvBnRelu(f"{name}.dil{rate}", bin_ch, g, ksize=3,
                            dilation=rate, rng=rng)))
            ch += g
        for rate in cfg.pooling_rates:
            bin_ch = ch if dense else in_ch
            self.branches.append(
                ("pool", rate,
                 ConvBnRelu(f"{name}.pool{rate}", bin_ch, g, ksize=1,
                            rng=rng)))
            ch += g
        self.out_ch = ch

    def params(self):
        return [p for _, _, layer in self.branches for p in layer.params()]

    def bns(self):
        return [bn for _, _, layer in self.branches for bn in layer.bns()]

    def __call__(self, x):
        spatial = x.data.shape[2:]
        collected = [x]
        for kind, rate, layer in self.branches:
            branch_in = (concat_channels(collected) if self.dense
                         else collected[0]) if len(collected) > 1 else x
            if kind == "dilate":
                out = layer(branch_in)
            else:
                pooled = avg_pool_ceil(branch_in, rate)
                out = upsample_nearest(layer(pooled), rate, spatial)
            collected.append(out)
        return concat_channels(collected)


class _Head:
    """1x1 projection, upsample to full resolution, sigmoid."""

    def __init__(self, name, in_ch, factor, rng=None):
        self.proj = Conv3d(f"{name}.proj", in_ch, 1, ksize=1, rng=rng)
        self.factor = factor

    def params(self):
        return self.proj.params()

    def __call__(self, x, full_spatial):
        logits = self.proj(x)
        if self.factor > 1:
            logits = upsample_nearest(logits, self.factor, full_spatial)
        return sigmoid(logits)


class SegNet:
    """Encoder-decoder with three supervision heads."""

    def __init__(self, cfg: NetConfig = None, seed=0):
        self.cfg = cfg or NetConfig()
        rng = np.random.default_rng(seed)
        w1, w2, w3 = self.cfg.widths
        cin = self.cfg.in_channels
        self.enc1 = ConvBnRelu("enc1", cin, w1, rng=rng)
        self.down1 = ConvBnRelu("down1", w1, w2, stride=2, rng=rng)
        self.enc2 = ConvBnRelu("enc2", w2, w2, rng=rng)
        self.down2 = ConvBnRelu("down2", w2, w3, stride=2, rng=rng)
        if self.cfg.block_style == "non":
            self.block = None
            self.block_proj = None
        else:
            self.block = DdspBlock("block", w3, self.cfg.ddsp,
                                   dense=self.cfg.block_style == "ddsp",
                                   rng=rng)
            self.block_proj = ConvBnRelu("blockproj", self.block.out_ch, w3,
                                         ksize=1, rng=rng)
        self.up2 = ConvTranspose3d("up2", w3, w2)
        self.up2_bn = BatchNorm3d("up2.bn", w2)
        self.merge2 = (Conv3d("merge2", 2 * w2, w2, ksize=1, rng=rng)
                       if self.cfg.long_mode == "concat" else None)
        self.dec2 = ConvBnRelu("dec2", w2, w2, rng=rng)
        self.up1 = ConvTranspose3d("up1", w2, w1)
        self.up1_bn = BatchNorm3d("up1.bn", w1)
        self.merge1 = (Conv3d("merge1", 2 * w1, w1, ksize=1, rng=rng)
                       if self.cfg.long_mode == "concat" else None)
        self.dec1 = ConvBnRelu("dec1", w1, w1, rng=rng)
        self.head_main = _Head("head_main", w1, 1, rng=rng)
        self.head_s2 = _Head("head_s2", w2, 2, rng=rng)
        self.head_s3 = _Head("head_s3", w3, 4, rng=rng)

    # -- parameter plumbing ------------------------------------------------

    def _layers(self):
        layers = [self.enc1, self.down1, self.enc2, self.down2]
        if self.block is not None:
            layers += [self.block, self.block_proj]
        layers += [self.up2, self.up2_bn]
        if self.merge2 is not None:
            layers.append(self.merge2)
        layers += [self.dec2, self.up1, self.up1_bn]
        if self.merge1 is not None:
            layers.append(self.merge1)
        layers += [self.dec1, self.head_main, self.head_s2, self.head_s3]
        return layers

    def parameters(self):
        return [p for layer in self._layers() for p in layer.params()]

    def batchnorms(self):
        bns = []
        for layer in self._layers():
            if isinstance(layer, BatchNorm3d):
                bns.append(layer)
            elif hasattr(layer, "bns"):
                bns.extend(layer.bns())
        return bns

    def set_training(self, training):
        for bn in self.batchnorms():
            bn.training = training

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # -- checkpoint state ---------------------------------------------------

    def state(self):
        """Ordered name -> array mapping of parameters and BN moments."""
        out = {}
        for p in self.parameters():
            out[p.name] = p.data
        for bn in self.batchnorms():
            out.update(bn.state_tensors())
        return out

    def load_state(self, tensors):
        for p in self.parameters():
            if p.name not in tensors:
                raise KeyError(f"checkpoint missing tensor {p.name}")
            if tensors[p.name].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {p.name}")
            p.data = tensors[p.name].astype(p.data.dtype)
            p.velocity = np.zeros_like(p.data)
        for bn in self.batchnorms():
            for name in bn.state_tensors():
                if name in tensors:
                    bn.load_state_tensor(name, tensors[name])

    # -- forward -----------------------------------------------------------

    def _long(self, dec, enc, merge):
        if self.cfg.long_mode == "residual":
            return add(dec, enc)
        if self.cfg.long_mode == "concat":
            return merge(concat_channels([dec, enc]))
        return dec

    def forward(self, x):
        """x: float32 array (B, C, X, Y, Z), spatial dims divisible by 4.

        Returns {"main", "stage2", "stage3"} probability-map Nodes at full
        resolution.
        """
        if any(n % 4 for n in x.shape[2:]):
            raise ValueError("spatial dims must be divisible by 4")
        full = x.shape[2:]
        xin = Node(np.ascontiguousarray(x, dtype=np.float32))
        e1 = self.enc1(xin)
        h = self.down1(e1)
        e2 = self.enc2(h)
        bott = self.down2(e2)
        if self.block is not None:
            bott = self.block_proj(self.block(bott))
        u2 = relu(self.up2_bn(self.up2(bott)))
        f2 = self.dec2(self._long(u2, e2, self.merge2))
        u1 = relu(self.up1_bn(self.up1(f2)))
        f1 = self.dec1(self._long(u1, e1, self.merge1))
        return {
            "main": self.head_main(f1, full),
            "stage2": self.head_s2(f2, full),
            "stage3": self.head_s3(bott, full),
        }

    def backward_heads(self, heads, seed_grads):
        """Backprop the three heads at once; grads land on the Params."""
        seeds = [(heads[k], g) for k, g in seed_grads.items() if g is not None]
        backward(seeds)


def fuse_outputs(head_maps, fusion_mask):
    """Equal-weight average of the enabled heads' probability maps."""
    enabled = [m for m, on in zip(head_maps, fusion_mask) if on]
    if not enabled:
        raise ValueError("fusion mask enables no head")
    return sum(enabled) / len(enabled)
