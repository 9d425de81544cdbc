"""Analytic parameter and FLOP accounting for the embedding model.

Counting convention (documented, applied consistently):

- one multiply-accumulate = 2 FLOPs
- dense conv: 2 * k^2 * Hout * Wout * Cin * Cout
- depthwise conv: 2 * k^2 * Hout * Wout * C
- matmul (m,k)@(k,n): 2*m*n*k
- FFT: 5 * N * log2(N) per 1-D transform, per channel (both directions of a
  2-D transform count h + w transforms per channel)
- attention: 2 * n^2 * d for the score product and 2 * n^2 * d for the
  weighted sum, per head of width d
- elementwise work (activations, norms, softmax, bias adds, the spectral
  filter product) is excluded

Parameter counts are the exact element counts of the WeightStore implied by
the config; count_params(cfg) therefore agrees integer-for-integer with any
store the forward pass accepts.
"""

from __future__ import annotations

import math

from .model import ModelConfig, weight_spec, enc1_grids, enc2_grids, _mlp_hidden

# published budget for the default configuration; audits report deltas
REFERENCE_BUDGET = {
    "params": {"enc1": 2.90e6, "enc2": 4.13e6, "total": 7.34e6},
    "flops": {"enc1": 2.36e9, "enc2": 0.68e9, "total": 3.04e9},
}


def _group(name: str) -> str:
    if name.startswith("enc1."):
        return "enc1"
    if name.startswith("enc2."):
        return "enc2"
    return "fusion"


def count_params(cfg: ModelConfig) -> dict[str, int]:
    out = {"enc1": 0, "enc2": 0, "fusion": 0}
    for name, shape in weight_spec(cfg).items():
        n = 1
        for d in shape:
            n *= d
        out[_group(name)] += n
    out["total"] = out["enc1"] + out["enc2"] + out["fusion"]
    return out


def _fft2_flops(g: int, d: int) -> float:
    one = 5.0 * g * math.log2(g)        # one length-g transform
    return d * (2 * g * one)            # g rows + g cols, per channel


def _conv_flops(gout: int, k: int, cin: int, cout: int) -> float:
    return 2.0 * k * k * gout * gout * cin * cout


def _matmul_flops(m: int, k: int, n: int) -> float:
    return 2.0 * m * k * n


def count_flops(cfg: ModelConfig, image: int | None = None) -> tuple[dict, list]:
    """Returns ({enc1, enc2, fusion, total}, per-layer rows (name, flops))."""
    image = image or cfg.image
    rows: list[tuple[str, float]] = []
    scale = image / cfg.image

    def grid_list(base):
        return [max(1, int(round(g * scale))) for g in base]

    g1 = grid_list(enc1_grids(cfg))
    g2 = grid_list(enc2_grids(cfg))

    enc1 = 0.0
    g = image // cfg.enc1_stem_patch
    f = _conv_flops(g, cfg.enc1_stem_patch, 3, cfg.enc1_dims[0])
    rows.append(("enc1.stem", f)); enc1 += f
    for st, (d, depth, ratio) in enumerate(zip(cfg.enc1_dims, cfg.enc1_depths, cfg.enc1_mlp_ratios)):
        g = g1[st]
        n = g * g
        hid = _mlp_hidden(d, ratio)
        mlp = _matmul_flops(n, d, hid) + 2.0 * 9 * n * hid + _matmul_flops(n, hid, d)
        for b in range(depth):
            if st < 2:
                f = 2 * _fft2_flops(g, d) + mlp
            else:
                f = 3 * _matmul_flops(n, d, d) + 2 * (2.0 * n * n * d) + mlp
            rows.append((f"enc1.stage{st}.block{b}", f)); enc1 += f
        if st < len(cfg.enc1_dims) - 1:
            f = _conv_flops(g1[st + 1], 2, d, cfg.enc1_dims[st + 1])
            rows.append((f"enc1.merge{st}", f)); enc1 += f

    enc2 = 0.0
    chans = [3] + list(cfg.enc2_stem_channels) + [cfg.enc2_dims[0]]
    g = image
    for i in range(len(chans) - 1):
        g = (g + 2 - 3) // 2 + 1
        f = _conv_flops(g, 3, chans[i], chans[i + 1])
        rows.append((f"enc2.stem.conv{i}", f)); enc2 += f
    for st, (d, heads, ratio) in enumerate(zip(cfg.enc2_dims, cfg.enc2_heads, cfg.enc2_ffn_ratios)):
        g = g2[st]
        n = g * g
        seg = d // heads
        hid = _mlp_hidden(d, ratio)
        sm = 2.0 * 9 * n * d + _matmul_flops(n, d, hid) + _matmul_flops(n, hid, d)
        rows.append((f"enc2.stage{st}.sm0", sm)); enc2 += sm
        att = heads * (3 * _matmul_flops(n, seg, seg) + 2.0 * 9 * n * seg
                       + 2 * (2.0 * n * n * seg)) + _matmul_flops(n, d, d)
        rows.append((f"enc2.stage{st}.attn", att)); enc2 += att
        rows.append((f"enc2.stage{st}.sm1", sm)); enc2 += sm
        if st < len(cfg.enc2_dims) - 1:
            f = _conv_flops(g2[st + 1], 2, d, cfg.enc2_dims[st + 1])
            rows.append((f"enc2.merge{st}", f)); enc2 += f

    fusion = _matmul_flops(1, cfg.fused_dim, cfg.fused_dim) + _matmul_flops(1, cfg.fused_dim, cfg.n_classes)
    rows.append(("fuse+head", fusion))

    totals = {"enc1": enc1, "enc2": enc2, "fusion": fusion,
              "total": enc1 + enc2 + fusion}
    return totals, rows


def audit_report(cfg: ModelConfig, fmt: str = "text") -> str:
    """Per-layer params/FLOPs report with deltas against the published budget."""
    spec = weight_spec(cfg)
    params = count_params(cfg)
    flops, frows = count_flops(cfg)

    # parameters grouped by layer prefix (everything before the weight leaf)
    layer_params: dict[str, int] = {}
    for name, shape in spec.items():
        n = 1
        for d in shape:
            n *= d
        for row_name, _ in frows:
            if name.startswith(row_name + "."):
                layer_params[row_name] = layer_params.get(row_name, 0) + n
                break
        else:
            layer_params["fuse+head"] = layer_params.get("fuse+head", 0) + n

    tgt_p = REFERENCE_BUDGET["params"]
    tgt_f = REFERENCE_BUDGET["flops"]

    if fmt == "csv":
        lines = ["kind,name,shape,params,flops"]
        for name, shape in spec.items():
            n = 1
            for d in shape:
                n *= d
            lines.append(f"tensor,{name},{'x'.join(str(d) for d in shape)},{n},")
        for row_name, f in frows:
            lines.append(f"layer,{row_name},,{layer_params.get(row_name, 0)},{f:.0f}")
        for k in ("enc1", "enc2", "fusion", "total"):
            lines.append(f"total,{k},,{params[k]},{flops[k]:.0f}")
        for k in ("enc1", "enc2", "total"):
            lines.append(f"target,{k},,{tgt_p[k]:.0f},{tgt_f[k]:.0f}")
        return "\n".join(lines) + "\n"

    w = max(len(n) for n, _ in frows) + 2
    lines = [f"{'layer':<{w}}{'params':>12}{'MFLOPs':>12}",
             "-" * (w + 24)]
    for row_name, f in frows:
        lines.append(f"{row_name:<{w}}{layer_params.get(row_name, 0):>12,}{f / 1e6:>12.2f}")
    lines.append("-" * (w + 24))
    for k in ("enc1", "enc2", "fusion", "total"):
        lines.append(f"{k:<{w}}{params[k]:>12,}{flops[k] / 1e6:>12.2f}")
    lines.append("")
    lines.append(f"{'vs budget':<{w}}{'params':>16}{'flops':>18}")
    for k in ("enc1", "enc2", "total"):
        dp = 100.0 * (params[k] - tgt_p[k]) / tgt_p[k]
        df = 100.0 * (flops[k] - tgt_f[k]) / tgt_f[k]
        lines.append(f"{k:<{w}}{tgt_p[k] / 1e6:>8.2f}M{dp:>+7.1f}%{tgt_f[k] / 1e9:>9.2f}G{df:>+7.1f}%")
    return "\n".join(lines) + "\n"
