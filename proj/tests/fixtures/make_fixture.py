#!/usr/bin/env python3
"""Regenerates the in-repo inference fixture.

Trains a small CNN on the scikit-learn digits set (8x8 grayscale, bundled
with sklearn so nothing is downloaded), quantizes it to per-tensor
asymmetric uint8, and writes:

  digits_cnn.axm        model container
  digits_test.img       first 1000 images (uint8 codes, HWC)
  digits_test.lbl       their labels
  digits_test.logits    int32 LE logits of the integer reference, 1000 x 10

The recorded reference accuracy comes from the integer reference in this
script, which is written independently of the C++ engine.

Usage: make_fixture.py [--epochs N] [--seed S] [--out DIR]
"""

import argparse
import hashlib
import json
import pathlib
import struct

import numpy as np
import torch
import torch.nn as tnn
import torch.nn.functional as F
from sklearn.datasets import load_digits

TEST_COUNT = 1000
MIN_ACCURACY = 0.95
SHIFT = 31


class SmallCnn(tnn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = tnn.Conv2d(1, 8, 3, padding=1)
        self.conv2 = tnn.Conv2d(8, 16, 3, padding=1)
        self.conv3 = tnn.Conv2d(16, 16, 3, padding=1)
        self.fc = tnn.Linear(16 * 4 * 4, 10)
        self.drop = tnn.Dropout(0.3)

    def features(self, x):
        a1 = F.relu(self.conv1(x))
        a2 = F.relu(self.conv2(a1))
        p = F.max_pool2d(a2, 2)
        a3 = F.relu(self.conv3(p))
        return a1, a2, a3

    def forward(self, x):
        return self.fc(self.drop(self.features(x)[2].flatten(1)))


def load_split():
    digits = load_digits()
    # 0..16 -> uint8 codes; the input scale is 1/255 so the float net sees code/255.
    codes = np.rint(digits.images * (255.0 / 16.0)).astype(np.uint8)
    labels = digits.target.astype(np.uint8)
    return (codes[TEST_COUNT:], labels[TEST_COUNT:]), (codes[:TEST_COUNT], labels[:TEST_COUNT])


def augment(x, rng):
    """Random small rotation, scale and translation."""
    n = x.shape[0]
    ang = torch.tensor(rng.uniform(-0.2, 0.2, n), dtype=torch.float32)
    sc = torch.tensor(rng.uniform(0.9, 1.1, n), dtype=torch.float32)
    t = torch.tensor(rng.uniform(-0.25, 0.25, (n, 2)), dtype=torch.float32)
    theta = torch.zeros(n, 2, 3)
    theta[:, 0, 0] = sc * torch.cos(ang)
    theta[:, 0, 1] = -sc * torch.sin(ang)
    theta[:, 1, 0] = sc * torch.sin(ang)
    theta[:, 1, 1] = sc * torch.cos(ang)
    theta[:, :, 2] = t
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    return F.grid_sample(x, grid, align_corners=False, padding_mode="zeros")


def train(train_codes, train_labels, epochs, seed):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    x = torch.tensor(train_codes, dtype=torch.float32).unsqueeze(1) / 255.0
    y = torch.tensor(train_labels, dtype=torch.long)
    net = SmallCnn()
    opt = torch.optim.Adam(net.parameters(), lr=3e-3, weight_decay=1e-4)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, max(epochs, 1))
    for _ in range(epochs):
        perm = rng.permutation(len(y))
        for s in range(0, len(y), 32):
            idx = perm[s:s + 32]
            xb = augment(x[idx], rng)
            opt.zero_grad()
            F.cross_entropy(net(xb), y[idx]).backward()
            opt.step()
        sched.step()
    return net


# --- quantization -----------------------------------------------------------

def affine(lo, hi):
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    scale = (hi - lo) / 255.0 if hi > lo else 1.0
    zp = int(np.clip(np.rint(-lo / scale), 0, 255))
    return float(scale), zp


def quantize(values, scale, zp):
    return np.clip(np.rint(values / scale) + zp, 0, 255).astype(np.uint8)


def requant_params(real):
    mult = int(round(real * (1 << SHIFT)))
    if not 0 < mult < (1 << 62):
        raise ValueError(f"requant multiplier out of range: {real}")
    return mult, SHIFT


def round_half_even_div(num, den):
    q = np.floor_divide(num, den)
    r = num - q * den
    up = (2 * r > den) | ((2 * r == den) & (q % 2 == 1))
    return q + up.astype(np.int64)


# --- integer reference (HWC layout, independent of the C++ engine) -----------

def ref_conv(codes, zp_in, layer):
    h, w, c = codes.shape
    kh, kw = layer["kernel"]
    pad = layer["padding"]
    padded = np.full((h + 2 * pad, w + 2 * pad, c), zp_in, dtype=np.int64)
    padded[pad:pad + h, pad:pad + w] = codes
    wts = layer["w"].astype(np.int64) - layer["zw"]          # [out][kh][kw][in]
    out = np.zeros((h, w, wts.shape[0]), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            patch = padded[y:y + kh, x:x + kw] - zp_in
            out[y, x] = np.tensordot(wts, patch, axes=([1, 2, 3], [0, 1, 2]))
    return out + layer["b"].astype(np.int64)


def ref_requant(acc, layer):
    v = round_half_even_div(acc * layer["mult"], 1 << layer["shift"]) + layer["zo"]
    return np.clip(v, 0, 255).astype(np.uint8)


def ref_forward(img, q):
    t = img.reshape(8, 8, 1)
    za = q["input_zp"]
    for name in ("conv1", "conv2", "conv3"):
        layer = q[name]
        t = ref_requant(ref_conv(t, za, layer), layer)
        za = layer["zo"]
        t = np.maximum(t, za)  # relu on codes
        if name == "conv2":
            h, w, c = t.shape
            t = t.reshape(h // 2, 2, w // 2, 2, c).max(axis=(1, 3))
    flat = t.reshape(-1).astype(np.int64) - za
    fc = q["fc"]
    return fc["b"].astype(np.int64) + (fc["w"].astype(np.int64) - fc["zw"]) @ flat


def build_quantized(net, calib_codes):
    x = torch.tensor(calib_codes, dtype=torch.float32).unsqueeze(1) / 255.0
    with torch.no_grad():
        a1, a2, a3 = net.features(x)
    q = {"input_scale": 1.0 / 255.0, "input_zp": 0}
    in_scale = q["input_scale"]
    for name, conv, act in (("conv1", net.conv1, a1), ("conv2", net.conv2, a2), ("conv3", net.conv3, a3)):
        w = conv.weight.detach().numpy()
        sw, zw = affine(float(w.min()), float(w.max()))
        so, zo = affine(0.0, float(act.max()))
        mult, shift = requant_params(sw * in_scale / so)
        q[name] = {
            "w": quantize(w, sw, zw).transpose(0, 2, 3, 1).copy(),
            "sw": sw, "zw": zw,
            "b": np.rint(conv.bias.detach().numpy() / (sw * in_scale)).astype(np.int32),
            "so": so, "zo": zo, "mult": mult, "shift": shift,
            "kernel": [3, 3], "padding": 1,
        }
        in_scale = so
    w = net.fc.weight.detach().numpy()
    # torch flattens CHW; the engine flattens HWC.
    w = w.reshape(10, 16, 4, 4).transpose(0, 2, 3, 1).reshape(10, 256)
    sw, zw = affine(float(w.min()), float(w.max()))
    q["fc"] = {
        "w": quantize(w, sw, zw), "sw": sw, "zw": zw,
        "b": np.rint(net.fc.bias.detach().numpy() / (sw * in_scale)).astype(np.int32),
    }
    return q


# --- container writers ----------------------------------------------------------

def write_model(path, q, accuracy, meta):
    blobs = bytearray()

    def add(arr, dtype, shape):
        raw = arr.astype("<i4").tobytes() if dtype == "int32le" else arr.astype(np.uint8).tobytes()
        ref = {"offset": len(blobs), "length": len(raw), "dtype": dtype, "shape": list(shape)}
        blobs.extend(raw)
        return ref

    layers = []
    for name, cin, cout in (("conv1", 1, 8), ("conv2", 8, 16), ("conv3", 16, 16)):
        L = q[name]
        layers.append({
            "type": "conv2d", "name": name, "kernel": [3, 3], "in_channels": cin, "out_channels": cout,
            "stride": 1, "padding": 1,
            "weights": add(L["w"], "uint8", L["w"].shape), "bias": add(L["b"], "int32le", [cout]),
            "weight_quant": {"scale": L["sw"], "zero_point": L["zw"]},
            "output_quant": {"scale": L["so"], "zero_point": L["zo"]},
            "requant": {"multiplier": L["mult"], "shift": L["shift"]},
        })
        layers.append({"type": "relu", "name": f"relu{name[-1]}"})
        if name == "conv2":
            layers.append({"type": "maxpool", "name": "pool", "size": 2, "stride": 2})
    fc = q["fc"]
    layers.append({"type": "flatten", "name": "flatten"})
    layers.append({
        "type": "dense", "name": "fc", "in_features": 256, "out_features": 10,
        "weights": add(fc["w"], "uint8", fc["w"].shape), "bias": add(fc["b"], "int32le", [10]),
        "weight_quant": {"scale": fc["sw"], "zero_point": fc["zw"]}, "output": "logits",
    })
    manifest = {
        "format": "axcv-model", "version": 1, "name": "digits_cnn",
        "input": {"shape": [8, 8, 1], "scale": q["input_scale"], "zero_point": q["input_zp"]},
        "num_classes": 10, "blob_bytes": len(blobs),
        "checksum": {"algorithm": "sha256", "value": hashlib.sha256(bytes(blobs)).hexdigest()},
        "layers": layers, "reference_accuracy": accuracy, "metadata": meta,
    }
    text = json.dumps(manifest, separators=(",", ":")).encode()
    path.write_bytes(b"AXCVMODL" + struct.pack("<II", 1, len(text)) + text + bytes(blobs))


def write_dataset(img_path, lbl_path, codes, labels):
    n = len(labels)
    img_path.write_bytes(b"AXCVIMGS" + struct.pack("<IIIIII", 1, n, 3, 8, 8, 1) + codes.astype(np.uint8).tobytes())
    lbl_path.write_bytes(b"AXCVLBLS" + struct.pack("<II", 1, n) + labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path(__file__).parent)
    args = ap.parse_args()

    (tr_x, tr_y), (te_x, te_y) = load_split()
    net = train(tr_x, tr_y, args.epochs, args.seed)
    net.eval()
    with torch.no_grad():
        float_acc = (net(torch.tensor(te_x, dtype=torch.float32).unsqueeze(1) / 255.0).argmax(1).numpy() == te_y).mean()

    q = build_quantized(net, tr_x)
    logits = np.stack([ref_forward(img, q) for img in te_x])
    accuracy = float((logits.argmax(1) == te_y).mean())
    print(f"float accuracy {float_acc:.4f}, integer reference accuracy {accuracy:.4f}")
    if accuracy < MIN_ACCURACY:
        raise SystemExit(f"reference accuracy {accuracy:.4f} below {MIN_ACCURACY}; refusing to write fixture")
    if np.abs(logits).max() >= 2**31:
        raise SystemExit("logits exceed int32")

    args.out.mkdir(parents=True, exist_ok=True)
    meta = {"dataset": "sklearn-digits", "train_images": str(len(tr_y)), "test_images": str(len(te_y)),
            "epochs": str(args.epochs), "seed": str(args.seed), "float_accuracy": f"{float_acc:.4f}"}
    write_model(args.out / "digits_cnn.axm", q, accuracy, meta)
    write_dataset(args.out / "digits_test.img", args.out / "digits_test.lbl", te_x.reshape(-1, 8, 8, 1), te_y)
    (args.out / "digits_test.logits").write_bytes(logits.astype("<i4").tobytes())


if __name__ == "__main__":
    main()
