"""Two-encoder embedding model with a gated fusion head.

Encoder 1 is a four-stage hierarchical transformer: stages 1-2 mix tokens with
learnable frequency-domain filters (FFT -> complex filter -> inverse FFT),
stages 3-4 with single-head self-attention. Encoder 2 is a three-stage
conv-stem transformer whose attention heads cascade: head j attends over its
channel segment plus the output of head j-1, with a depthwise conv applied to
every Q over the token grid. Each encoder emits a 96-d embedding via global
average pooling; the fusion gate produces per-channel coefficients for both
and the concatenated, re-normalized result is the 192-d embedding.

Weights live in a flat name -> float32 array mapping (the WeightStore). The
single source of truth for names and shapes is weight_spec(cfg); the forward
pass, the initializer, the parameter counter, and container validation all
derive from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import F32, ShapeError

Store = dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    image: int = 224
    patch: int = 16                       # encoder-2 total stem downsample
    n_classes: int = 3
    embed_dim: int = 96                   # per-encoder output width
    fused_dim: int = 192

    enc1_stem_patch: int = 4
    enc1_dims: tuple = (64, 128, 320, 96)
    # depths/ratios below were calibrated once against the published budget
    # (see scripts/calibrate_budget.py) and then frozen
    enc1_depths: tuple = (2, 2, 2, 2)
    enc1_mlp_ratios: tuple = (4, 8, 1, 1)

    enc2_stem_channels: tuple = (16, 32, 64)
    enc2_dims: tuple = (192, 288, 96)
    enc2_heads: tuple = (3, 3, 4)
    enc2_depths: tuple = (1, 1, 1)
    enc2_ffn_ratios: tuple = (3, 7, 8)

    def __post_init__(self):
        if self.enc1_dims[-1] != self.embed_dim or self.enc2_dims[-1] != self.embed_dim:
            raise ValueError("last stage width of each encoder must equal embed_dim")
        if self.fused_dim != 2 * self.embed_dim:
            raise ValueError("fused_dim must be twice embed_dim")
        if len(self.enc1_depths) != len(self.enc1_dims) or len(self.enc1_mlp_ratios) != len(self.enc1_dims):
            raise ValueError("enc1 depths/ratios must match the number of stages")
        for d, h in zip(self.enc2_dims, self.enc2_heads):
            if d % h:
                raise ValueError(f"enc2 width {d} not divisible by head count {h}")
        if self.image % self.enc1_stem_patch:
            raise ValueError("image size must be divisible by the enc1 stem patch")
        if self.image % self.patch:
            raise ValueError("image size must be divisible by the enc2 patch")
        if any(d != 1 for d in self.enc2_depths):
            raise ValueError("enc2 stages are one token layer deep")


def enc1_grids(cfg: ModelConfig) -> list[int]:
    g = cfg.image // cfg.enc1_stem_patch
    out = []
    for _ in cfg.enc1_dims:
        out.append(g)
        g = (g + (g % 2) * 2 - 2) // 2 + 1   # 2x2 stride-2 merge, ceil on odd
    return out


def enc2_grids(cfg: ModelConfig) -> list[int]:
    g = cfg.image // cfg.patch
    out = []
    for _ in cfg.enc2_dims:
        out.append(g)
        g = (g + (g % 2) * 2 - 2) // 2 + 1
    return out


def _mlp_hidden(d: int, ratio) -> int:
    return int(round(d * ratio))


# ---------------------------------------------------------------------------
# weight inventory

def weight_spec(cfg: ModelConfig) -> dict[str, tuple]:
    """Every tensor name the forward pass reads, with its shape, in a fixed order."""
    s: dict[str, tuple] = {}
    p = cfg.enc1_stem_patch
    s["enc1.stem.w"] = (p, p, 3, cfg.enc1_dims[0])
    s["enc1.stem.b"] = (cfg.enc1_dims[0],)
    grids = enc1_grids(cfg)
    for st, (d, depth, ratio) in enumerate(zip(cfg.enc1_dims, cfg.enc1_depths, cfg.enc1_mlp_ratios)):
        g = grids[st]
        hid = _mlp_hidden(d, ratio)
        for b in range(depth):
            pre = f"enc1.stage{st}.block{b}"
            s[pre + ".norm1.g"] = (d,)
            s[pre + ".norm1.b"] = (d,)
            if st < 2:
                s[pre + ".filter.re"] = (g, g, d)
                s[pre + ".filter.im"] = (g, g, d)
            else:
                s[pre + ".attn.wq"] = (d, d)
                s[pre + ".attn.wk"] = (d, d)
                s[pre + ".attn.wv"] = (d, d)
            s[pre + ".norm2.g"] = (d,)
            s[pre + ".norm2.b"] = (d,)
            s[pre + ".mlp.w1"] = (d, hid)
            s[pre + ".mlp.b1"] = (hid,)
            s[pre + ".mlp.dw"] = (3, 3, hid)
            s[pre + ".mlp.dwb"] = (hid,)
            s[pre + ".mlp.w2"] = (hid, d)
            s[pre + ".mlp.b2"] = (d,)
        if st < len(cfg.enc1_dims) - 1:
            s[f"enc1.merge{st}.w"] = (2, 2, d, cfg.enc1_dims[st + 1])
            s[f"enc1.merge{st}.b"] = (cfg.enc1_dims[st + 1],)

    chans = list(cfg.enc2_stem_channels) + [cfg.enc2_dims[0]]
    cin = 3
    for i, cout in enumerate(chans):
        pre = f"enc2.stem.conv{i}"
        s[pre + ".w"] = (3, 3, cin, cout)
        s[pre + ".b"] = (cout,)
        for suffix, _ in (("g", 1), ("b", 0), ("m", 0), ("v", 1)):
            s[pre + f".bn.{suffix}"] = (cout,)
        cin = cout
    for st, (d, heads, ratio) in enumerate(zip(cfg.enc2_dims, cfg.enc2_heads, cfg.enc2_ffn_ratios)):
        seg = d // heads
        hid = _mlp_hidden(d, ratio)
        for pos in (0, 1):
            pre = f"enc2.stage{st}.sm{pos}"
            s[pre + ".dw"] = (3, 3, d)
            s[pre + ".dwb"] = (d,)
            for suffix in ("g", "b", "m", "v"):
                s[pre + f".bn.{suffix}"] = (d,)
            s[pre + ".ffn.w1"] = (d, hid)
            s[pre + ".ffn.b1"] = (hid,)
            s[pre + ".ffn.w2"] = (hid, d)
            s[pre + ".ffn.b2"] = (d,)
            if pos == 0:
                apre = f"enc2.stage{st}.attn"
                for j in range(heads):
                    s[apre + f".head{j}.wq"] = (seg, seg)
                    s[apre + f".head{j}.wk"] = (seg, seg)
                    s[apre + f".head{j}.wv"] = (seg, seg)
                    s[apre + f".head{j}.qdw"] = (3, 3, seg)
                    s[apre + f".head{j}.qdwb"] = (seg,)
                s[apre + ".wp"] = (d, d)
        if st < len(cfg.enc2_dims) - 1:
            s[f"enc2.merge{st}.w"] = (2, 2, d, cfg.enc2_dims[st + 1])
            s[f"enc2.merge{st}.b"] = (cfg.enc2_dims[st + 1],)

    e = cfg.embed_dim
    s["fuse.norm1.g"] = (e,)
    s["fuse.norm1.b"] = (e,)
    s["fuse.norm2.g"] = (e,)
    s["fuse.norm2.b"] = (e,)
    s["gate.W"] = (cfg.fused_dim, cfg.fused_dim)
    s["fuse.out.g"] = (cfg.fused_dim,)
    s["fuse.out.b"] = (cfg.fused_dim,)
    s["head.W"] = (cfg.fused_dim, cfg.n_classes)
    s["head.b"] = (cfg.n_classes,)
    return s


def validate_weights(cfg: ModelConfig, store: Store) -> None:
    spec = weight_spec(cfg)
    for name, shape in spec.items():
        if name not in store:
            raise ShapeError(f"missing tensor '{name}'")
        got = tuple(store[name].shape)
        if got != shape:
            raise ShapeError(f"tensor '{name}' has shape {got}, expected {shape}")
    extra = [n for n in store if n not in spec]
    if extra:
        raise ShapeError(f"unexpected tensor(s): {', '.join(sorted(extra)[:5])}")


def init_weights(cfg: ModelConfig, seed: int = 0) -> Store:
    """Deterministic initializer: truncated normal (std 0.02, clipped at 2 std)
    for projections and convs, zeros for biases, identity for norms and BN
    statistics, unit pass-through (1+0i) for the spectral filters."""
    rng = np.random.default_rng(seed)
    store: Store = {}
    for name, shape in weight_spec(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        parent = name.rsplit(".", 2)[-2] if name.count(".") >= 2 else ""
        if leaf in ("b", "b1", "b2", "dwb", "qdwb") and parent != "bn":
            arr = np.zeros(shape, dtype=F32)
        elif parent in ("norm1", "norm2", "bn", "out") or name.startswith("fuse."):
            arr = np.ones(shape, dtype=F32) if leaf in ("g", "v") else np.zeros(shape, dtype=F32)
        elif leaf == "re" and ".filter." in name:
            arr = np.ones(shape, dtype=F32)
        elif leaf == "im" and ".filter." in name:
            arr = np.zeros(shape, dtype=F32)
        else:
            arr = rng.standard_normal(shape, dtype=F32)
            np.clip(arr, -2.0, 2.0, out=arr)
            arr *= F32(0.02)
        store[name] = arr
    return store


# ---------------------------------------------------------------------------
# blocks

def spectral_block(x: np.ndarray, flt: np.ndarray,
                   norm1: tuple, norm2: tuple,
                   w1, b1, dw_k, dw_b, w2, b2) -> np.ndarray:
    """Frequency-filter token mixer.

    y = x + ifft2(K * fft2(LN1(x)));  out = x + MLP(LN2(y))

    Both residuals branch from the block input: the filtered branch enriches
    what the MLP sees, so a zero filter leaves out = x + MLP(LN2(x)), and a
    unit filter with zero MLP weights is the exact identity.
    """
    if x.shape != flt.shape:
        raise ShapeError(f"spectral_block: filter shape {flt.shape} vs tokens {x.shape}")
    spec = T.fft2(T.layer_norm(x, *norm1))
    np.multiply(spec, flt, out=spec)
    y = T.ifft2(spec)
    y += x
    z = _conv_mlp(T.layer_norm(y, *norm2), w1, b1, dw_k, dw_b, w2, b2)
    z += x
    return z


def _conv_mlp(z, w1, b1, dw_k, dw_b, w2, b2):
    # every intermediate here is freshly allocated, so the adds fold in place
    z = T.matmul(z, w1)
    z += b1
    z = T.gelu(T.depthwise_conv2d(z, dw_k, dw_b))
    z = T.matmul(z, w2)
    z += b2
    return z


def attention_block(x: np.ndarray, wq, wk, wv, norm1: tuple, norm2: tuple,
                    w1, b1, dw_k, dw_b, w2, b2) -> np.ndarray:
    """Pre-norm single-head attention block on an (h, w, d) token grid."""
    gh, gw, d = x.shape
    z = T.layer_norm(x, *norm1).reshape(gh * gw, d)
    att = T.attention(z, wq, wk, wv).reshape(gh, gw, d)
    att += x
    z = _conv_mlp(T.layer_norm(att, *norm2), w1, b1, dw_k, dw_b, w2, b2)
    z += att
    return z


def spatial_mixer(x: np.ndarray, dw_k, dw_b, bn: tuple, ffn: tuple) -> np.ndarray:
    """Depthwise conv + inference BN, then a ReLU FFN, each residual-added."""
    g, b, m, v = bn
    y = T.batch_norm_infer(T.depthwise_conv2d(x, dw_k, dw_b), m, v, g, b)
    y += x
    w1, b1, w2, b2 = ffn
    h = T.matmul(y, w1)
    h += b1
    z = T.matmul(T.relu(h), w2)
    z += b2
    z += y
    return z


def waterfall_attention(x: np.ndarray, gh: int, gw: int, heads: int,
                        wq: list, wk: list, wv: list,
                        qdw: list, qdwb: list, wp: np.ndarray) -> np.ndarray:
    """Cascaded multi-head attention over (n, d) tokens on a (gh, gw) grid.

    The channel axis is split into `heads` equal segments; head j attends over
    its segment plus the previous head's output, and every Q passes through a
    depthwise 3x3 conv over the token grid before the score product.
    """
    n, d = x.shape
    if n != gh * gw:
        raise ShapeError(f"waterfall_attention: {n} tokens vs {gh}x{gw} grid")
    if d % heads:
        raise ShapeError("waterfall_attention: width not divisible by heads")
    seg = d // heads
    outs = []
    prev = None
    for j in range(heads):
        inp = x[:, j * seg:(j + 1) * seg]
        if prev is not None:
            inp = inp + prev
        q = T.matmul(inp, wq[j]).reshape(gh, gw, seg)
        q = T.depthwise_conv2d(q, qdw[j], qdwb[j]).reshape(n, seg)
        k = T.matmul(inp, wk[j])
        v = T.matmul(inp, wv[j])
        scores = (q @ k.T) / F32(np.sqrt(seg))
        prev = T.softmax_rows(scores) @ v
        outs.append(prev)
    return T.matmul(T.concat_lastdim(*outs), wp)


def gated_fuse(z1: np.ndarray, z2: np.ndarray, gate_w: np.ndarray,
               norm1: tuple, norm2: tuple, out_norm: tuple) -> np.ndarray:
    """Per-channel gated fusion of the two embeddings into one vector.

    Runs in float64: it touches a few hundred values once per forward pass,
    and the gate matvec loses ~4 ulp at float32, which matters at the 1e-6
    contract this op carries.
    """
    if z1.shape != z2.shape:
        raise ShapeError("gated_fuse: embedding shapes differ")
    e = z1.shape[0]
    if gate_w.shape != (2 * e, 2 * e):
        raise ShapeError(f"gated_fuse: gate must be {(2*e, 2*e)}, got {gate_w.shape}")
    zn1 = T.layer_norm(z1[None], *norm1)[0].astype(np.float64)
    zn2 = T.layer_norm(z2[None], *norm2)[0].astype(np.float64)
    pre = gate_w.astype(np.float64) @ np.concatenate([zn1, zn2])
    alpha = np.clip(np.where(pre > 0, pre, np.expm1(pre)), -1.0, 1.0)
    fused = np.concatenate([alpha[:e] * zn1, alpha[e:] * zn2]).astype(F32)
    return T.layer_norm(fused[None], *out_norm)[0]


def classify(e: np.ndarray, head_w: np.ndarray, head_b: np.ndarray) -> np.ndarray:
    logits = T.matmul(e[None], head_w) + head_b
    return T.softmax_rows(logits)[0]


# ---------------------------------------------------------------------------
# encoders

def _norm(store: Store, pre: str):
    return store[pre + ".g"], store[pre + ".b"]


def encoder1_forward(img: np.ndarray, store: Store, cfg: ModelConfig) -> np.ndarray:
    x = T.conv2d(img, store["enc1.stem.w"], store["enc1.stem.b"], stride=cfg.enc1_stem_patch)
    for st, depth in enumerate(cfg.enc1_depths):
        for b in range(depth):
            pre = f"enc1.stage{st}.block{b}"
            mlp = (store[pre + ".mlp.w1"], store[pre + ".mlp.b1"],
                   store[pre + ".mlp.dw"], store[pre + ".mlp.dwb"],
                   store[pre + ".mlp.w2"], store[pre + ".mlp.b2"])
            if st < 2:
                flt = np.empty(store[pre + ".filter.re"].shape, dtype=np.complex64)
                flt.real = store[pre + ".filter.re"]
                flt.imag = store[pre + ".filter.im"]
                x = spectral_block(x, flt,
                                   _norm(store, pre + ".norm1"), _norm(store, pre + ".norm2"),
                                   *mlp)
            else:
                x = attention_block(x, store[pre + ".attn.wq"], store[pre + ".attn.wk"],
                                    store[pre + ".attn.wv"],
                                    _norm(store, pre + ".norm1"), _norm(store, pre + ".norm2"),
                                    *mlp)
        if st < len(cfg.enc1_depths) - 1:
            pad = 1 if x.shape[0] % 2 else 0
            x = T.conv2d(x, store[f"enc1.merge{st}.w"], store[f"enc1.merge{st}.b"],
                         stride=2, padding=pad)
    return np.mean(x, axis=(0, 1), dtype=np.float64).astype(F32)


def encoder2_forward(img: np.ndarray, store: Store, cfg: ModelConfig) -> np.ndarray:
    x = img
    n_stem = len(cfg.enc2_stem_channels) + 1
    for i in range(n_stem):
        pre = f"enc2.stem.conv{i}"
        x = T.conv2d(x, store[pre + ".w"], store[pre + ".b"], stride=2, padding=1)
        x = T.batch_norm_infer(x, store[pre + ".bn.m"], store[pre + ".bn.v"],
                               store[pre + ".bn.g"], store[pre + ".bn.b"])
        if i < n_stem - 1:
            x = T.relu(x)
    for st, (d, heads) in enumerate(zip(cfg.enc2_dims, cfg.enc2_heads)):
        for pos in (0, 1):
            pre = f"enc2.stage{st}.sm{pos}"
            x = spatial_mixer(x, store[pre + ".dw"], store[pre + ".dwb"],
                              (store[pre + ".bn.g"], store[pre + ".bn.b"],
                               store[pre + ".bn.m"], store[pre + ".bn.v"]),
                              (store[pre + ".ffn.w1"], store[pre + ".ffn.b1"],
                               store[pre + ".ffn.w2"], store[pre + ".ffn.b2"]))
            if pos == 0:
                gh, gw, _ = x.shape
                apre = f"enc2.stage{st}.attn"
                att = waterfall_attention(
                    x.reshape(gh * gw, d), gh, gw, heads,
                    [store[apre + f".head{j}.wq"] for j in range(heads)],
                    [store[apre + f".head{j}.wk"] for j in range(heads)],
                    [store[apre + f".head{j}.wv"] for j in range(heads)],
                    [store[apre + f".head{j}.qdw"] for j in range(heads)],
                    [store[apre + f".head{j}.qdwb"] for j in range(heads)],
                    store[apre + ".wp"])
                x = x + att.reshape(gh, gw, d)
        if st < len(cfg.enc2_dims) - 1:
            pad = 1 if x.shape[0] % 2 else 0
            x = T.conv2d(x, store[f"enc2.merge{st}.w"], store[f"enc2.merge{st}.b"],
                         stride=2, padding=pad)
    return np.mean(x, axis=(0, 1), dtype=np.float64).astype(F32)


def embed(img: np.ndarray, store: Store, cfg: ModelConfig) -> dict:
    """Full forward pass on one (image, image, 3) float array in [0, 1].

    Returns z1, z2 (96-d each), the fused 192-d embedding, and class probs.
    """
    img = np.asarray(img, dtype=F32)
    if img.shape != (cfg.image, cfg.image, 3):
        raise ShapeError(f"embed: image must be {(cfg.image, cfg.image, 3)}, got {img.shape}")
    # per-pixel normalization over the channel axis, no affine
    x = T.layer_norm(img, axis=-1)
    z1 = encoder1_forward(x, store, cfg)
    z2 = encoder2_forward(x, store, cfg)
    fused = gated_fuse(z1, z2, store["gate.W"],
                       _norm(store, "fuse.norm1"), _norm(store, "fuse.norm2"),
                       _norm(store, "fuse.out"))
    probs = classify(fused, store["head.W"], store["head.b"])
    return {"z1": z1, "z2": z2, "fused": fused, "probs": probs}
