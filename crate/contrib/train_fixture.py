#!/usr/bin/env python3
"""Train a small CIFAR-style ResNet and export it as test fixtures.

Writes into the fixture directory:

  tiny_relu.ntw       NTW1 weights, canonical tensor names
  tiny_test.bin       held-out images in CIFAR-10 binary batch format
  tiny_reference.json PyTorch logits for the first few held-out images,
                      plus the measured accuracy

With --cifar-dir pointing at an extracted cifar-10-batches-bin directory the
real data is used. Otherwise a seeded synthetic 10-class dataset is generated
(class-specific color, oriented gratings and blobs under heavy noise), which
keeps the fixture reproducible without network access.

The architecture mirrors the Rust implementation exactly: input standardization
inside the forward pass, 3x3 convolutions with padding 1 and no bias, BN in
eval mode with eps 1e-5, post-activation units, 1x1 stride-2 projection
shortcuts on the first unit of stages 2 and 3, global average pooling and a
linear head.
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

MEAN = (0.4914, 0.4822, 0.4465)
STD = (0.2470, 0.2435, 0.2616)


class Unit(nn.Module):
    def __init__(self, cin, cout, stride):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.down = None
        if stride != 1 or cin != cout:
            self.down = nn.Sequential(nn.Conv2d(cin, cout, 1, stride, 0, bias=False), nn.BatchNorm2d(cout))

    def forward(self, x):
        r = self.bn2(self.conv2(F.relu(self.bn1(self.conv1(x)))))
        s = x if self.down is None else self.down(x)
        return F.relu(s + r)


class Net(nn.Module):
    def __init__(self, n, channels):
        super().__init__()
        self.register_buffer("mean", torch.tensor(MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(STD).view(1, 3, 1, 1))
        c0 = channels[0]
        self.stem_conv = nn.Conv2d(3, c0, 3, 1, 1, bias=False)
        self.stem_bn = nn.BatchNorm2d(c0)
        self.stages = nn.ModuleList()
        cin = c0
        for s, c in enumerate(channels):
            units = nn.ModuleList()
            for u in range(n):
                stride = 2 if (s > 0 and u == 0) else 1
                units.append(Unit(cin, c, stride))
                cin = c
            self.stages.append(units)
        self.fc = nn.Linear(cin, 10)

    def forward(self, x):
        x = (x - self.mean) / self.std
        x = F.relu(self.stem_bn(self.stem_conv(x)))
        for units in self.stages:
            for u in units:
                x = u(x)
        return self.fc(x.mean(dim=(2, 3)))


def synthetic(n, seed):
    """Seeded 10-class images in [0, 1], shape (n, 3, 32, 32)."""
    rng = np.random.default_rng(seed)
    palette = np.random.default_rng(1234).uniform(0.2, 0.8, size=(10, 3))
    yy, xx = np.mgrid[0:32, 0:32].astype(np.float64)
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, 3, 32, 32))
    for i, k in enumerate(labels):
        theta = np.pi * (k % 5) / 5 + rng.normal(0, 0.15)
        freq = (2 + (k // 5) * 2) + rng.normal(0, 0.3)
        phase = rng.uniform(0, 2 * np.pi)
        grating = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) / 32 + phase)
        cy, cx = rng.uniform(8, 24, size=2)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rng.uniform(3, 7) ** 2))
        color = palette[k] + rng.normal(0, 0.12, size=3)
        img = color[:, None, None] + 0.18 * grating[None] + 0.25 * blob[None] * rng.choice([-1, 1])
        img += rng.normal(0, 0.2, size=(3, 32, 32))
        images[i] = np.clip(img, 0, 1)
    return images.astype(np.float32), labels.astype(np.int64)


def quantize(images):
    """Round to the 8-bit grid so training sees exactly what the Rust loader sees."""
    return np.round(images * 255).astype(np.uint8)


def load_cifar(directory):
    def read(path):
        raw = np.fromfile(path, dtype=np.uint8).reshape(-1, 3073)
        return raw[:, 1:].reshape(-1, 3, 32, 32), raw[:, 0].astype(np.int64)

    parts = [read(Path(directory) / f"data_batch_{i}.bin") for i in range(1, 6)]
    train = np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    return train, read(Path(directory) / "test_batch.bin")


def write_cifar(path, images_u8, labels):
    records = np.concatenate([labels.astype(np.uint8)[:, None], images_u8.reshape(len(labels), -1)], axis=1)
    path.write_bytes(records.tobytes())


def canonical_state(net, n):
    out = {}

    def bn(prefix, m):
        out[f"{prefix}.gamma"] = m.weight
        out[f"{prefix}.beta"] = m.bias
        out[f"{prefix}.mean"] = m.running_mean
        out[f"{prefix}.var"] = m.running_var

    out["stem.conv.weight"] = net.stem_conv.weight
    bn("stem.bn", net.stem_bn)
    for s, units in enumerate(net.stages, start=1):
        for u, unit in enumerate(units):
            p = f"stage{s}.unit{u}"
            out[f"{p}.conv1.weight"] = unit.conv1.weight
            bn(f"{p}.bn1", unit.bn1)
            out[f"{p}.conv2.weight"] = unit.conv2.weight
            bn(f"{p}.bn2", unit.bn2)
            if unit.down is not None:
                out[f"{p}.down.conv.weight"] = unit.down[0].weight
                bn(f"{p}.down.bn", unit.down[1])
    out["head.fc.weight"] = net.fc.weight
    out["head.fc.bias"] = net.fc.bias
    return {k: v.detach().cpu().float().numpy() for k, v in out.items()}


def write_ntw1(path, tensors):
    buf = bytearray(b"NTW1")
    buf += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        encoded = name.encode()
        buf += struct.pack("<H", len(encoded)) + encoded
        buf += struct.pack("<BB", 0, arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    path.write_bytes(bytes(buf))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "crates/core/fixtures"))
    ap.add_argument("--cifar-dir")
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--channels", default="4,8,16")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--train-size", type=int, default=12000)
    ap.add_argument("--test-size", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--optimizer", choices=["adam", "sgd"], default="sgd")
    ap.add_argument("--lr", type=float)
    # Strong decay leaves many inner units inactive, which is what makes the
    # plateau of singular values at 1 appear at this scale.
    ap.add_argument("--weight-decay", type=float, default=5e-3)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    torch.use_deterministic_algorithms(True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.cifar_dir:
        (xtr8, ytr), (xte8, yte) = load_cifar(args.cifar_dir)
        xte8, yte = xte8[: args.test_size], yte[: args.test_size]
        source = "cifar10"
    else:
        xtr, ytr = synthetic(args.train_size, args.seed)
        xte, yte = synthetic(args.test_size, args.seed + 1)
        xtr8, xte8 = quantize(xtr), quantize(xte)
        source = "synthetic"
    xtr = torch.from_numpy(xtr8.astype(np.float32) / 255)
    xte = torch.from_numpy(xte8.astype(np.float32) / 255)
    ytr, yte_t = torch.from_numpy(ytr), torch.from_numpy(yte)

    channels = [int(c) for c in args.channels.split(",")]
    net = Net(args.n, channels)
    if args.optimizer == "sgd":
        opt = torch.optim.SGD(net.parameters(), lr=args.lr or 0.1, momentum=0.9, weight_decay=args.weight_decay)
    else:
        opt = torch.optim.Adam(net.parameters(), lr=args.lr or 3e-3, weight_decay=args.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, args.epochs)
    for epoch in range(args.epochs):
        net.train()
        perm = torch.randperm(len(ytr))
        total = 0.0
        for i in range(0, len(perm), 128):
            idx = perm[i : i + 128]
            xb = xtr[idx]
            if torch.rand(()) < 0.5:
                xb = xb.flip(3)
            loss = F.cross_entropy(net(xb), ytr[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        sched.step()
        net.eval()
        with torch.no_grad():
            acc = (net(xte).argmax(1) == yte_t).float().mean().item()
        print(f"epoch {epoch} loss {total / len(perm):.4f} test acc {acc:.4f}", flush=True)

    net.eval()
    with torch.no_grad():
        logits = net(xte)
        acc = (logits.argmax(1) == yte_t).float().mean().item()
    write_ntw1(out / "tiny_relu.ntw", canonical_state(net, args.n))
    write_cifar(out / "tiny_test.bin", xte8, yte)
    reference = {
        "source": source,
        "model": f"tiny:{args.n}:{args.channels}",
        "activation": "relu",
        "test_records": int(len(yte)),
        "accuracy": acc,
        "logits": logits[:8].tolist(),
    }
    (out / "tiny_reference.json").write_text(json.dumps(reference, indent=1) + "\n")
    print(f"wrote fixtures to {out} (accuracy {acc:.4f}, source {source})")


if __name__ == "__main__":
    main()
