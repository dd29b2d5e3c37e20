"""Small numpy neural nets with hand-written backprop, Adam, and checkpoints.

Everything runs in float64 for bit-reproducible training and clean
finite-difference gradient checks; checkpoints store float32 blobs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation

PKPT_MAGIC = b"PKPT"
PKPT_VERSION = 1


def _init_linear(rng, n_in: int, n_out: int, scale: float = 1.0):
    w = rng.normal(0.0, scale / np.sqrt(n_in), (n_out, n_in))
    return w, np.zeros(n_out)


class MLP:
    """Fully-connected stack with tanh hidden activations and a linear head."""

    def __init__(self, sizes: list[int], rng, prefix: str, out_tanh: bool = False):
        self.sizes = list(sizes)
        self.prefix = prefix
        self.out_tanh = out_tanh
        self.params: dict[str, np.ndarray] = {}
        for i in range(len(sizes) - 1):
            w, b = _init_linear(rng, sizes[i], sizes[i + 1])
            self.params[f"{prefix}.w{i}"] = w
            self.params[f"{prefix}.b{i}"] = b

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray):
        """Returns (output, cache); x is (N, in)."""
        acts = [x]
        h = x
        for i in range(self.n_layers):
            h = h @ self.params[f"{self.prefix}.w{i}"].T + self.params[f"{self.prefix}.b{i}"]
            if i < self.n_layers - 1 or self.out_tanh:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, dout: np.ndarray, acts, grads: dict[str, np.ndarray]):
        """Accumulates parameter grads into ``grads``; returns d(input)."""
        d = dout
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1 or self.out_tanh:
                d = d * (1.0 - acts[i + 1] ** 2)
            x = acts[i]
            gw = d.T @ x
            gb = d.sum(axis=0)
            kw, kb = f"{self.prefix}.w{i}", f"{self.prefix}.b{i}"
            grads[kw] = grads.get(kw, 0.0) + gw
            grads[kb] = grads.get(kb, 0.0) + gb
            d = d @ self.params[kw]
        return d


class Conv2d:
    """Valid-padding strided convolution via im2col."""

    def __init__(self, c_in: int, c_out: int, k: int, stride: int, rng, name: str):
        self.k = k
        self.stride = stride
        self.name = name
        self.params = {
            f"{name}.w": rng.normal(0.0, 1.0 / np.sqrt(c_in * k * k), (c_out, c_in, k, k)),
            f"{name}.b": np.zeros(c_out),
        }

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return (h - self.k) // self.stride + 1, (w - self.k) // self.stride + 1

    def _im2col(self, x: np.ndarray):
        n, c, h, w = x.shape
        ho, wo = self.out_hw(h, w)
        s, k = self.stride, self.k
        cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, i, j] = x[:, :, i:i + s * ho:s, j:j + s * wo:s]
        return cols.reshape(n, c * k * k, ho * wo), (n, c, h, w, ho, wo)

    def forward(self, x: np.ndarray):
        cols, shape = self._im2col(x)
        n, c, h, w, ho, wo = shape
        wmat = self.params[f"{self.name}.w"].reshape(-1, c * self.k * self.k)
        y = np.einsum("fk,nkp->nfp", wmat, cols) + self.params[f"{self.name}.b"][None, :, None]
        return y.reshape(n, -1, ho, wo), (cols, shape)

    def backward(self, dy: np.ndarray, cache, grads: dict[str, np.ndarray]):
        cols, (n, c, h, w, ho, wo) = cache
        f = dy.shape[1]
        dyf = dy.reshape(n, f, ho * wo)
        wmat = self.params[f"{self.name}.w"].reshape(f, -1)
        gw = np.einsum("nfp,nkp->fk", dyf, cols).reshape(self.params[f"{self.name}.w"].shape)
        gb = dyf.sum(axis=(0, 2))
        kw, kb = f"{self.name}.w", f"{self.name}.b"
        grads[kw] = grads.get(kw, 0.0) + gw
        grads[kb] = grads.get(kb, 0.0) + gb
        dcols = np.einsum("fk,nfp->nkp", wmat, dyf).reshape(n, c, self.k, self.k, ho, wo)
        dx = np.zeros((n, c, h, w))
        s, k = self.stride, self.k
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, i, j]
        return dx


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class GRUCell:
    """Minimal gated recurrent unit: h' = (1-z)*n + z*h."""

    def __init__(self, n_in: int, n_hidden: int, rng, name: str):
        self.n_in = n_in
        self.n_hidden = n_hidden
        self.name = name
        self.params = {}
        for gate in ("z", "r", "n"):
            w, b = _init_linear(rng, n_in, n_hidden)
            u, _ = _init_linear(rng, n_hidden, n_hidden)
            self.params[f"{name}.w{gate}"] = w
            self.params[f"{name}.u{gate}"] = u
            self.params[f"{name}.b{gate}"] = b

    def forward(self, x: np.ndarray, h: np.ndarray):
        p = self.params
        nm = self.name
        z = _sigmoid(x @ p[f"{nm}.wz"].T + h @ p[f"{nm}.uz"].T + p[f"{nm}.bz"])
        r = _sigmoid(x @ p[f"{nm}.wr"].T + h @ p[f"{nm}.ur"].T + p[f"{nm}.br"])
        hu = h @ p[f"{nm}.un"].T
        n = np.tanh(x @ p[f"{nm}.wn"].T + r * hu + p[f"{nm}.bn"])
        h_new = (1.0 - z) * n + z * h
        return h_new, (x, h, z, r, n, hu)

    def backward(self, dh_new: np.ndarray, cache, grads: dict[str, np.ndarray]):
        x, h, z, r, n, hu = cache
        p = self.params
        nm = self.name
        dz = dh_new * (h - n)
        dn = dh_new * (1.0 - z)
        dh = dh_new * z
        dn_pre = dn * (1.0 - n ** 2)
        dr = dn_pre * hu
        dhu = dn_pre * r
        dz_pre = dz * z * (1.0 - z)
        dr_pre = dr * r * (1.0 - r)

        def acc(key, val):
            grads[key] = grads.get(key, 0.0) + val

        acc(f"{nm}.wz", dz_pre.T @ x)
        acc(f"{nm}.uz", dz_pre.T @ h)
        acc(f"{nm}.bz", dz_pre.sum(axis=0))
        acc(f"{nm}.wr", dr_pre.T @ x)
        acc(f"{nm}.ur", dr_pre.T @ h)
        acc(f"{nm}.br", dr_pre.sum(axis=0))
        acc(f"{nm}.wn", dn_pre.T @ x)
        acc(f"{nm}.un", dhu.T @ h)
        acc(f"{nm}.bn", dn_pre.sum(axis=0))

        dx = dz_pre @ p[f"{nm}.wz"] + dr_pre @ p[f"{nm}.wr"] + dn_pre @ p[f"{nm}.wn"]
        dh = dh + dz_pre @ p[f"{nm}.uz"] + dr_pre @ p[f"{nm}.ur"] + dhu @ p[f"{nm}.un"]
        return dx, dh


class Adam:
    """Adam over a named parameter dict; iteration order is sorted for determinism."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], max_grad_norm: float = 0.0):
        if self.lr == 0.0:
            return
        keys = sorted(k for k in grads if k in self.params)
        if max_grad_norm > 0.0:
            total = 0.0
            for k in keys:
                total += float(np.sum(np.asarray(grads[k]) ** 2))
            norm = np.sqrt(total)
            scale = max_grad_norm / norm if norm > max_grad_norm else 1.0
        else:
            scale = 1.0
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k in keys:
            g = np.asarray(grads[k]) * scale
            if not np.isfinite(g).all():
                raise ContractViolation(f"non-finite gradient for {k}")
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mhat = self.m[k] / b1c
            vhat = self.v[k] / b2c
            self.params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# diagonal Gaussian policy head
# ---------------------------------------------------------------------------

LOG_STD_MIN, LOG_STD_MAX = -4.0, 1.0


def gaussian_sample(mean: np.ndarray, log_std: np.ndarray, rng) -> np.ndarray:
    return mean + np.exp(log_std)[None, :] * rng.standard_normal(mean.shape)


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, a: np.ndarray) -> np.ndarray:
    var = np.exp(2.0 * log_std)[None, :]
    q = (a - mean) ** 2 / var
    return -0.5 * (q + 2.0 * log_std[None, :] + np.log(2.0 * np.pi)).sum(axis=1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float((log_std + 0.5 * np.log(2.0 * np.pi * np.e)).sum())


def gaussian_log_prob_grads(mean, log_std, a):
    """d(logp)/d(mean) per sample and d(logp)/d(log_std) per sample."""
    var = np.exp(2.0 * log_std)[None, :]
    diff = a - mean
    dmean = diff / var
    dlog_std = diff ** 2 / var - 1.0
    return dmean, dlog_std


# ---------------------------------------------------------------------------
# checkpoint I/O (PKPT)
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: dict[str, np.ndarray], header: dict) -> None:
    """Named float32 tensor blobs after a JSON header; tensors sorted by name."""
    names = sorted(params)
    header = dict(header)
    header["tensors"] = {k: list(params[k].shape) for k in names}
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(PKPT_MAGIC)
        f.write(struct.pack("<H", PKPT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for k in names:
            t = np.ascontiguousarray(params[k], dtype="<f4")
            enc = k.encode()
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(t.tobytes(order="C"))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        if f.read(4) != PKPT_MAGIC:
            raise ConfigurationError(f"{path}: not a PKPT checkpoint")
        (version,) = struct.unpack("<H", f.read(2))
        if version != PKPT_VERSION:
            raise ConfigurationError(f"{path}: unsupported PKPT version {version}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        params: dict[str, np.ndarray] = {}
        for name, shape in sorted(header.get("tensors", {}).items()):
            (nlen,) = struct.unpack("<H", f.read(2))
            key = f.read(nlen).decode()
            if key != name:
                raise ConfigurationError(f"{path}: tensor order corrupt ({key} != {name})")
            (ndim,) = struct.unpack("<B", f.read(1))
            dims = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            if list(dims) != list(shape):
                raise ConfigurationError(f"{path}: shape mismatch for {name}")
            count = int(np.prod(dims)) if ndim else 1
            data = np.frombuffer(f.read(4 * count), dtype="<f4")
            params[name] = data.reshape(dims).astype(np.float64)
    return params, header
