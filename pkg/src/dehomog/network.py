"""Fully convolutional generator: encoded orientations -> intermediate field.

Architecture: 7x7/32 and 5x5/64 stem convs, four 64-channel residual
blocks, three nearest-neighbor x2 upsampling stages (channel widths
64,64 / 64,32 / 32,32) and a final 3x3 conv with sigmoid, for a total
spatial scale factor of 8.  All convs use replicate padding to match the
replication-padded input.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn

UPSAMPLE_FACTOR = 8

CKPT_MAGIC = b"DHCKPT01"


def _conv(cin, cout, k):
    return nn.Conv2d(cin, cout, k, padding=k // 2, padding_mode="replicate")


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = _conv(channels, channels, 3)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = _conv(channels, channels, 3)
        self.bn2 = nn.BatchNorm2d(channels)

    def forward(self, x):
        y = torch.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return torch.relu(x + y)


class Generator(nn.Module):
    """Maps an N-channel H x W activation stack to a 1 x 8H x 8W field in (0,1)."""

    def __init__(self, in_channels: int = 24):
        super().__init__()
        self.in_channels = in_channels
        self.stem = nn.Sequential(
            _conv(in_channels, 32, 7), nn.BatchNorm2d(32), nn.ReLU(inplace=True),
            _conv(32, 64, 5), nn.BatchNorm2d(64), nn.ReLU(inplace=True),
        )
        self.res = nn.Sequential(*[ResidualBlock(64) for _ in range(4)])
        stages = []
        for cin, cmid, cout in ((64, 64, 64), (64, 64, 32), (32, 32, 32)):
            stages += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                _conv(cin, cmid, 3), nn.BatchNorm2d(cmid), nn.ReLU(inplace=True),
                _conv(cmid, cout, 3), nn.BatchNorm2d(cout), nn.ReLU(inplace=True),
            ]
        self.up = nn.Sequential(*stages)
        self.head = _conv(32, 1, 3)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        y = self.stem(x)
        y = self.res(y)
        y = self.up(y)
        return torch.sigmoid(self.head(y))


def init_weights(net: Generator, seed: int) -> Generator:
    """Kaiming fan-in initialization of convs; batch norms at scale 1, shift 0."""
    gen = torch.Generator().manual_seed(seed)
    for m in net.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            with torch.no_grad():
                m.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=gen)
                m.bias.zero_()
        elif isinstance(m, nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
            m.reset_running_stats()
    return net


def make_generator(in_channels: int = 24, seed: int = 0) -> Generator:
    return init_weights(Generator(in_channels), seed)


def generate_intermediate(net: Generator, encoded: np.ndarray, pad_width: int) -> np.ndarray:
    """Inference: encoded (H+2p, W+2p, N) stack -> intermediate field (8H, 8W).

    The replication padding added by the encoder is consumed here: the
    network output is cropped by 8 * pad_width fine cells per side so the
    intermediate field aligns exactly with the unpadded coarse grid.
    """
    x = torch.from_numpy(np.ascontiguousarray(encoded.transpose(2, 0, 1))[None]).float()
    net.eval()
    with torch.no_grad():
        y = net(x)[0, 0].numpy()
    return crop_padding(y, pad_width)


def crop_padding(field, pad_width: int):
    c = UPSAMPLE_FACTOR * pad_width
    return field[..., c:field.shape[-2] - c, c:field.shape[-1] - c] if c else field


# ---------------------------------------------------------------------------
# Checkpoints: named parameter blobs behind a fixed binary header
# ---------------------------------------------------------------------------

def save_checkpoint(net: Generator, path, meta: dict | None = None) -> None:
    """Serialize all parameters and buffers; round-trips bit-exactly."""
    state = net.state_dict()
    entries = []
    for name, tensor in state.items():
        arr = tensor.detach().numpy()
        entries.append((name, arr))
    meta = dict(meta or {})
    meta.setdefault("in_channels", net.in_channels)
    meta_blob = "\n".join(f"{k}={v}" for k, v in meta.items()).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", len(entries), len(meta_blob)))
        fh.write(meta_blob)
        for name, arr in entries:
            nb = name.encode()
            shape = arr.shape
            fh.write(struct.pack("<HBB", len(nb), {np.dtype("float32"): 1,
                                                   np.dtype("float64"): 2,
                                                   np.dtype("int64"): 3}[arr.dtype],
                                 len(shape)))
            fh.write(nb)
            fh.write(struct.pack(f"<{len(shape)}I", *shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> tuple[Generator, dict]:
    """Rebuild a generator (inference-ready) from a checkpoint file."""
    dtypes = {1: np.float32, 2: np.float64, 3: np.int64}
    with open(Path(path), "rb") as fh:
        if fh.read(8) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        n_entries, meta_len = struct.unpack("<II", fh.read(8))
        meta = {}
        for line in fh.read(meta_len).decode().splitlines():
            k, _, v = line.partition("=")
            meta[k] = v
        state = {}
        for _ in range(n_entries):
            name_len, dcode, ndim = struct.unpack("<HBB", fh.read(4))
            name = fh.read(name_len).decode()
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            dt = np.dtype(dtypes[dcode])
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(fh.read(n * dt.itemsize), dtype=dt).reshape(shape).copy()
            state[name] = torch.from_numpy(arr)
    net = Generator(int(meta.get("in_channels", 24)))
    net.load_state_dict(state)
    net.eval()
    return net, meta
