"""Vector-valued ReLU RNNs and input-output Jacobian spectral norms.

The Jacobian of u -> f^t(u) at u0 is D_{t-1} W ... D_1 W D_0 W where D_s is the
0/1 ReLU activity mask at step s.  It is never formed: power iteration on
J^T J uses forward sweeps (J v) and transposed sweeps (J^T w) over the masks.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ContractError
from .netgen import InitScheme, make_rng

POWER_MAX_STEPS = 200
POWER_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class VectorRnn:
    W: np.ndarray
    bias: np.ndarray
    clip: bool = False
    activation: str = "relu"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1] or b.shape != (W.shape[0],):
            raise ContractError("W must be d x d and bias length d")
        if self.activation != "relu":
            raise ContractError("only relu is supported")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "bias", b)

    @property
    def d(self) -> int:
        return self.W.shape[0]


def sample_vector_rnn(
    d: int,
    sigma: float,
    seed: int,
    scheme: str = "he-normal",
    bias_std: float = 0.0,
    clip: bool = False,
) -> VectorRnn:
    """W_ij ~ N(0, sigma^2 / fan) with fan = d (He) or 2d (Glorot)."""
    init = InitScheme(scheme, sigma2=float(sigma) ** 2, bias_rule="zero")
    rng = make_rng(seed)
    W = init.sample_weights(rng, (d, d), fan_in=d, fan_out=d)
    bias = rng.normal(0.0, bias_std, size=d) if bias_std > 0 else np.zeros(d)
    return VectorRnn(W, bias, clip=clip)


def _act(z, clip):
    out = np.maximum(z, 0.0)
    return np.minimum(out, 1.0) if clip else out


def iterate_state(rnn: VectorRnn, u0, t: int) -> np.ndarray:
    """States u_0..u_t stacked as a (t + 1, d) array."""
    if t < 1:
        raise ContractError("t must be >= 1")
    out = np.empty((t + 1, rnn.d))
    out[0] = u = np.asarray(u0, dtype=np.float64)
    for s in range(t):
        u = _act(rnn.W @ u + rnn.bias, rnn.clip)
        out[s + 1] = u
    return out


@dataclass(frozen=True)
class JacobianResult:
    spectral_norm: float
    iterations_t: int
    power_iteration_steps: int
    converged: bool


def _masks(W, bias, u0, t, clip):
    """Activity masks for a batch: W (n, d, d), u0 (n, d) -> (t, n, d)."""
    u = u0
    masks = np.empty((t,) + u0.shape)
    for s in range(t):
        z = np.einsum("nij,nj->ni", W, u) + bias
        # derivative at exactly zero pre-activation is taken as 0
        m = z > 0.0
        if clip:
            m &= z < 1.0
        masks[s] = m
        u = _act(z, clip)
    return masks


def _jv(W, masks, v):
    for m in masks:
        v = m * np.einsum("nij,nj->ni", W, v)
    return v


def _jtw(W, masks, w):
    for m in masks[::-1]:
        w = np.einsum("nji,nj->ni", W, m * w)
    return w


def _power_batch(W, masks, rng, max_steps=POWER_MAX_STEPS, rtol=POWER_RTOL):
    n, d = masks.shape[1], masks.shape[2]
    v = rng.normal(size=(n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    est = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    # work on the unconverged trials only; compact when half of them finish
    active = np.arange(n)
    Wa, ma, va, prev = W, masks, v, est.copy()
    for step in range(1, max_steps + 1):
        jv = _jv(Wa, ma, va)
        new = np.linalg.norm(jv, axis=1)
        w = _jtw(Wa, ma, jv)
        nw = np.linalg.norm(w, axis=1)
        zero = nw == 0.0
        finished = (np.abs(new - prev) <= rtol * np.maximum(new, np.finfo(float).tiny)) | zero
        live = ~done[active]
        est[active[live]] = new[live]
        steps[active[live]] = step
        done[active[live & finished]] = True
        if done.all():
            break
        prev = new
        va = np.where(zero[:, None], va, w / np.where(zero, 1.0, nw)[:, None])
        keep = ~done[active]
        if keep.sum() <= active.size // 2:
            active, Wa, ma, va, prev = active[keep], Wa[keep], ma[:, keep], va[keep], prev[keep]
    return est, steps, done


def jacobian_spectral_norm(rnn: VectorRnn, u0, t: int, seed: int = 0, max_steps: int = POWER_MAX_STEPS) -> JacobianResult:
    """Largest singular value of d f^t / du at u0, by matrix-free power iteration."""
    if t < 1:
        raise ContractError("t must be >= 1")
    W = rnn.W[None]
    u = np.asarray(u0, dtype=np.float64)[None]
    masks = _masks(W, rnn.bias[None], u, t, rnn.clip)
    est, steps, done = _power_batch(W, masks, make_rng(seed), max_steps)
    return JacobianResult(float(est[0]), t, int(steps[0]), bool(done[0]))


def jacobian_norms(rnns, u0s, t: int, seed: int = 0, max_steps: int = POWER_MAX_STEPS):
    """Batched spectral norms for many (rnn, u0) pairs; returns (norms, converged)."""
    W = np.stack([r.W for r in rnns])
    b = np.stack([r.bias for r in rnns])
    clip = rnns[0].clip
    masks = _masks(W, b, np.asarray(u0s, dtype=np.float64), t, clip)
    est, _, done = _power_batch(W, masks, make_rng(seed), max_steps)
    return est, done


def jacobian_fd(rnn: VectorRnn, u0, t: int, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of f^t (small d only)."""
    u0 = np.asarray(u0, dtype=np.float64)
    J = np.empty((rnn.d, rnn.d))
    for j in range(rnn.d):
        e = np.zeros(rnn.d)
        e[j] = h
        J[:, j] = (iterate_state(rnn, u0 + e, t)[-1] - iterate_state(rnn, u0 - e, t)[-1]) / (2 * h)
    return J


def jacobian_apply(rnn: VectorRnn, u0, t: int, v) -> np.ndarray:
    """J v via the masked product (no finite differences)."""
    masks = _masks(rnn.W[None], rnn.bias[None], np.asarray(u0, dtype=np.float64)[None], t, rnn.clip)
    return _jv(rnn.W[None], masks, np.asarray(v, dtype=np.float64)[None])[0]


# ------------------------------------------------------------------ IDX input


class IdxFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class IdxImages:
    vectors: np.ndarray
    shape: tuple
    projection: dict


IDX_UBYTE_IMAGES = 0x00000803


def load_idx(path, d: Optional[int] = None, projection: str = "truncate", seed: int = 0) -> IdxImages:
    """Read an IDX image file (optionally gzipped) into vectors in [0, 1].

    With ``d`` set, each flattened image is reduced to ``d`` coordinates:
    the first ``d`` pixels (``truncate``) or a seeded random subset
    (``random``; the chosen indices go into ``projection``).
    """
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < 4:
        raise IdxFormatError("file too short for IDX magic", len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != IDX_UBYTE_IMAGES:
        raise IdxFormatError(f"bad magic 0x{magic:08x}, expected 0x{IDX_UBYTE_IMAGES:08x}", 0)
    if len(raw) < 16:
        raise IdxFormatError("truncated dimension header", len(raw))
    n, rows, cols = struct.unpack(">III", raw[4:16])
    need = 16 + n * rows * cols
    if len(raw) != need:
        raise IdxFormatError(f"expected {need} bytes for {n}x{rows}x{cols} images, found {len(raw)}", min(len(raw), need))
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows * cols)
    vectors = pixels.astype(np.float64) / 255.0
    meta = {"method": "none"}
    if d is not None:
        p = rows * cols
        if not 1 <= d <= p:
            raise ContractError(f"d must be in [1, {p}]")
        if projection == "truncate":
            idx = np.arange(d)
        elif projection == "random":
            idx = np.sort(make_rng(seed).choice(p, size=d, replace=False))
        else:
            raise ContractError(f"unknown projection {projection!r}")
        vectors = vectors[:, idx]
        meta = {"method": projection, "seed": seed, "indices": idx.tolist()}
    return IdxImages(vectors, (n, rows, cols), meta)


def write_idx(path, images) -> None:
    """Write uint8 images (n, rows, cols) in IDX format; used for fixtures."""
    arr = np.asarray(images, dtype=np.uint8)
    n, rows, cols = arr.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_UBYTE_IMAGES, n, rows, cols) + arr.tobytes())
