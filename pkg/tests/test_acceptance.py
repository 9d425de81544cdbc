"""Acceptance gate: one test per published criterion, at stated tolerances.

Budget windows, the 1000-pass shape contract, kernel oracle equivalence,
signal/filter behavior, training-math values, CLI determinism, and fusion
dimensions. Each test is a single pass/fail line under pytest -v.
"""

import ctypes
import math
import time

import numpy as np
import pytest

import biomoe.model as M
import biomoe.tensor as T
from biomoe.budget import REFERENCE_BUDGET, audit_report, count_flops, count_params
from biomoe.cli import main
from biomoe.container import write_container
from biomoe.fusion import FusionMethod, fuse, plan_all_scalogram, plan_table6_best
from biomoe.images import write_png
from biomoe.model import ModelConfig, gated_fuse, waterfall_attention, weight_spec
from biomoe.representations import StftConfig, recurrence_matrix, scale_frequencies, \
    cwt_scalogram, stft
from biomoe.signals import FilterKind, FilterSpec, Modality, Signal, apply_filter, \
    default_filter
from biomoe.tensor import F32
from biomoe.trainmath import LossVariant, ScheduleConfig, cosine_lr, dropout_rate, \
    macro_metrics, multitask_loss, smoothing_eps
from oracles import attention_loop, dft2_loop, dwconv_loops, elu_ref, hardtanh_ref, \
    layer_norm_ref


def _rnd(rng, *shape, scale=1.0):
    return ((rng.random(shape) - 0.5) * 2 * scale).astype(F32)


# --------------------------------------------------------------------------
# criterion 1: budget reproduction (params/FLOPs windows, audit under 1 s)

def test_budget_reproduction_within_published_windows():
    cfg = ModelConfig()
    params = count_params(cfg)
    flops, _ = count_flops(cfg)
    tp, tf = REFERENCE_BUDGET["params"], REFERENCE_BUDGET["flops"]

    assert abs(params["total"] - tp["total"]) / tp["total"] <= 0.10, \
        f"total params {params['total']} outside +-10% of {tp['total']:.0f}"
    assert abs(params["enc1"] - tp["enc1"]) / tp["enc1"] <= 0.15
    assert abs(params["enc2"] - tp["enc2"]) / tp["enc2"] <= 0.15
    assert abs(flops["total"] - tf["total"]) / tf["total"] <= 0.15, \
        f"total FLOPs {flops['total']:.3g} outside +-15% of {tf['total']:.3g}"
    assert abs(flops["enc1"] - tf["enc1"]) / tf["enc1"] <= 0.20
    assert abs(flops["enc2"] - tf["enc2"]) / tf["enc2"] <= 0.20

    t0 = time.perf_counter()
    text = audit_report(cfg, "text")
    csv = audit_report(cfg, "csv")
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0, f"audit took {elapsed:.2f}s"
    assert "7.34" in text and text.count("\n") > 10
    assert csv.startswith("kind,name,shape,params,flops")


# --------------------------------------------------------------------------
# criterion 2: 1000 random-weight passes, 96/96/192 finite, under 2 minutes

def test_shape_contract_1000_random_weight_passes():
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(ctypes.c_int(-3), ctypes.c_int(512 * 1024 * 1024))
    except OSError:
        pass

    cfg = ModelConfig()
    spec = weight_spec(cfg)
    sizes = {name: int(np.prod(shape)) for name, shape in spec.items()}
    total = sum(sizes.values())
    flat = np.empty(total, dtype=np.float32)
    store, off = {}, 0
    for name, shape in spec.items():
        store[name] = flat[off:off + sizes[name]].reshape(shape)
        off += sizes[name]
    # running variances must stay nonnegative for batch-norm inference
    var_views = [store[n] for n in spec if n.endswith(".bn.v")]

    img = np.zeros((cfg.image, cfg.image, 3), dtype=np.float32)
    bits = np.random.SFC64(0xB10ED)
    n_half = (total + 1) // 2
    scale = np.float32(0.08 / 2.0**32)
    half = np.float32(0.04)

    t0 = time.perf_counter()
    for _ in range(1000):
        u = bits.random_raw(n_half).view(np.uint32)[:total]
        flat[:] = u                      # u32 -> f32; uniform over [0, 2^32)
        np.multiply(flat, scale, out=flat)
        np.subtract(flat, half, out=flat)
        for v in var_views:
            np.abs(v, out=v)
        out = M.embed(img, store, cfg)
        assert out["z1"].shape == (96,)
        assert out["z2"].shape == (96,)
        assert out["fused"].shape == (192,)
        assert np.isfinite(out["z1"]).all()
        assert np.isfinite(out["z2"]).all()
        assert np.isfinite(out["fused"]).all()
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"1000 passes took {elapsed:.1f}s, limit 120s"


# --------------------------------------------------------------------------
# criterion 3: kernel oracle suite, >=50 random instances each

def test_kernel_oracles_50_instances_each():
    rng = np.random.default_rng(31337)

    for i in range(50):                                   # FFT vs naive DFT
        h, w = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        d = int(rng.integers(1, 4))
        x = _rnd(rng, h, w, d)
        ref = dft2_loop(x)
        got = T.fft2(x)
        rel = np.abs(got - ref).max() / max(np.abs(ref).max(), 1e-30)
        assert rel < 1e-5, f"fft2 instance {i}: rel {rel:.2g}"
        back = T.ifft2(ref.astype(np.complex64))
        rel2 = np.abs(back - x).max() / max(np.abs(x).max(), 1e-30)
        assert rel2 < 1e-5, f"ifft2 instance {i}: rel {rel2:.2g}"

    for i in range(50):                       # depthwise conv vs loop nest
        h, w = int(rng.integers(3, 9)), int(rng.integers(3, 9))
        c = int(rng.integers(1, 5))
        x = _rnd(rng, h, w, c)
        k = _rnd(rng, 3, 3, c)
        b = _rnd(rng, c, scale=0.2)
        got = T.depthwise_conv2d(x, k, b)
        ref = dwconv_loops(x, k, b)
        assert np.abs(got - ref).max() < 1e-6, f"dwconv instance {i}"

    for i in range(50):                      # attention vs softmax oracle
        n, d = int(rng.integers(2, 10)), int(rng.integers(2, 9))
        x = _rnd(rng, n, d)
        wq, wk, wv = (_rnd(rng, d, d, scale=0.5) for _ in range(3))
        got = T.attention(x, wq, wk, wv)
        ref = attention_loop(x, wq, wk, wv)
        assert np.abs(got - ref).max() < 1e-5, f"attention instance {i}"

    for i in range(50):                  # waterfall h=1 == plain attention
        gh, gw = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        d = int(rng.integers(2, 5)) * 2
        x = _rnd(rng, gh * gw, d)
        wq, wk, wv = (_rnd(rng, d, d, scale=0.5) for _ in range(3))
        wp = _rnd(rng, d, d, scale=0.5)
        ident = np.zeros((3, 3, d), dtype=F32)
        ident[1, 1, :] = 1.0
        got = waterfall_attention(x, gh, gw, 1, [wq], [wk], [wv],
                                  [ident], [np.zeros(d, dtype=F32)], wp)
        ref = T.matmul(T.attention(x, wq, wk, wv), wp)
        assert np.abs(got - ref).max() < 1e-6, f"waterfall instance {i}"

    for i in range(50):                 # gated fusion vs scripted oracle
        e = int(rng.integers(2, 8)) * 8
        z1, z2 = _rnd(rng, e), _rnd(rng, e)
        gate = _rnd(rng, 2 * e, 2 * e, scale=0.3)
        g1, b1 = _rnd(rng, e, scale=0.5) + 1, _rnd(rng, e, scale=0.1)
        g2, b2 = _rnd(rng, e, scale=0.5) + 1, _rnd(rng, e, scale=0.1)
        go, bo = _rnd(rng, 2 * e, scale=0.5) + 1, _rnd(rng, 2 * e, scale=0.1)
        got = gated_fuse(z1, z2, gate, (g1, b1), (g2, b2), (go, bo))
        zn1 = layer_norm_ref(z1, g1, b1)
        zn2 = layer_norm_ref(z2, g2, b2)
        alpha = hardtanh_ref(elu_ref(gate.astype(np.float64) @ np.concatenate([zn1, zn2])))
        ref = layer_norm_ref(np.concatenate([alpha[:e] * zn1, alpha[e:] * zn2]), go, bo)
        assert np.abs(got - ref).max() < 1e-6, f"gated fusion instance {i}"


# --------------------------------------------------------------------------
# criterion 4: signal suite

def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def test_signal_suite():
    fs = 32.0
    t = np.arange(int(fs * 120)) / fs
    spec = default_filter(Modality.BVP)

    tone = Signal(np.sin(2 * math.pi * 0.8 * t), fs, Modality.BVP)
    passed = apply_filter(tone, spec)
    trim = slice(100, -100)   # settle edges before comparing energy
    ratio = _rms(passed.samples[trim]) / _rms(tone.samples[trim])
    assert ratio >= 0.9, f"0.8 Hz passband ratio {ratio:.3f} < 0.9"

    noise = Signal(np.sin(2 * math.pi * 10.0 * t), fs, Modality.BVP)
    rejected = apply_filter(noise, spec)
    ratio = _rms(rejected.samples[trim]) / _rms(noise.samples[trim])
    assert ratio <= 0.1, f"10 Hz stopband ratio {ratio:.3f} > 0.1"

    rec = recurrence_matrix(Signal(np.sin(2 * math.pi * 1.3 * t[:512]), fs), size=96)
    assert np.array_equal(rec, rec.T), "recurrence matrix not exactly symmetric"
    assert np.all(np.diag(rec) == 0.0), "recurrence diagonal not zero"

    sine = Signal(np.sin(2 * math.pi * 1.0 * t), fs)
    scal = cwt_scalogram(sine)
    freqs = scale_frequencies(sine)
    ridge = freqs[int(np.argmax(scal.sum(axis=1)))]
    step = int(np.argmin(np.abs(freqs - 1.0)))
    lo = freqs[max(0, step - 1)]
    hi = freqs[min(len(freqs) - 1, step + 1)]
    assert lo <= ridge <= hi, f"1 Hz ridge landed at {ridge:.3f} Hz"

    fs2 = 100.0
    t2 = np.arange(1000) / fs2
    spec5 = stft(Signal(np.sin(2 * math.pi * 5.0 * t2), fs2), StftConfig())
    peaks = np.abs(spec5).argmax(axis=1)
    assert (peaks == 13).all(), f"5 Hz peak bins {set(peaks.tolist())}, expected all 13"


# --------------------------------------------------------------------------
# criterion 5: training-math suite

def test_training_math_suite():
    total, grad = multitask_loss([2.0], [-0.693147], LossVariant.AS_WRITTEN)
    assert round(total, 6) == 0.306853, f"loss value {total:.6f}"
    h = 1e-5
    fd = (multitask_loss([2.0], [-0.693147 + h])[0]
          - multitask_loss([2.0], [-0.693147 - h])[0]) / (2 * h)
    assert abs(grad[0] - fd) / abs(fd) < 1e-5, f"gradient {grad[0]} vs fd {fd}"

    cfg = ScheduleConfig(T=200)
    assert dropout_rate(0, cfg) == cfg.p_start
    assert dropout_rate(cfg.T, cfg) == cfg.p_end
    assert smoothing_eps(0, cfg) == cfg.eps_start
    assert smoothing_eps(cfg.T, cfg) == cfg.eps_end

    cfg = ScheduleConfig(T=1000)
    w, cs = cfg.warmup, cfg.T - cfg.cooldown
    assert abs(cosine_lr(w, cfg) - cfg.base_lr * (w / w)) < 1e-9 * cfg.base_lr
    assert abs(cosine_lr(cs, cfg) - cfg.lr_floor * (cfg.T - cs) / cfg.cooldown) \
        < 1e-9 * cfg.base_lr

    m = macro_metrics([[1, 1], [0, 2]])
    assert round(m["accuracy"], 6) == 0.75
    assert round(m["precision"], 6) == 0.833333
    assert round(m["f1"], 6) == 0.733333


# --------------------------------------------------------------------------
# criterion 6: CLI determinism, byte-identical reruns of every command

@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    ws = tmp_path_factory.mktemp("accept")
    fs, seconds = 32.0, 60.0
    t = np.arange(int(fs * seconds)) / fs
    x = np.sin(2 * math.pi * 1.0 * t) + 0.2 * np.sin(2 * math.pi * 4.0 * t)
    (ws / "rec.csv").write_text("\n".join(f"{v:.9f}" for v in x) + "\n")
    rng = np.random.default_rng(17)
    write_png(ws / "img.png", rng.integers(0, 256, (224, 224, 3), dtype=np.uint8))
    write_container(ws / "w.tbme", M.init_weights(ModelConfig(), seed=3))
    (ws / "labels.csv").write_text("r0,0\nr1,0\nr2,1\nr3,1\n")
    (ws / "preds").mkdir()
    for i, c in enumerate([0, 1, 1, 1]):
        (ws / "preds" / f"r{i}.txt").write_text(f"{c}\n")
    return ws


def _capture(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    assert code == 0, f"{argv} exited {code}: {out.err}"
    return out.out


def test_cli_determinism_byte_identical(workspace, capsys):
    ws = workspace

    render_bytes = []
    for sub in ("r1", "r2"):
        _capture(capsys, ["render", str(ws / "rec.csv"), "--modality", "bvp",
                          "--rate", "32", "--out", str(ws / sub)])
        files = sorted((ws / sub).iterdir())
        assert len(files) == 6
        render_bytes.append(b"".join(p.read_bytes() for p in files))
    assert render_bytes[0] == render_bytes[1], "render PNGs differ between runs"

    embeds = [_capture(capsys, ["embed", str(ws / "img.png"),
                                "--weights", str(ws / "w.tbme"), "--seed", "5"])
              for _ in range(2)]
    assert embeds[0] == embeds[1] and len(embeds[0].strip().splitlines()) == 192

    inits = [_capture(capsys, ["embed", str(ws / "img.png"),
                               "--init", "random", "--seed", "9"])
             for _ in range(2)]
    assert inits[0] == inits[1]

    audits = [_capture(capsys, ["audit", "--format", fmt])
              for fmt in ("text", "text", "csv", "csv")]
    assert audits[0] == audits[1] and audits[2] == audits[3]

    evals = [_capture(capsys, ["eval", "--pred-dir", str(ws / "preds"),
                               "--labels", str(ws / "labels.csv")])
             for _ in range(2)]
    assert evals[0] == evals[1]
    assert evals[0] == "accuracy: 75.00\nprecision: 83.33\nf1: 73.33\n"

    scheds = []
    for name in ("s1.csv", "s2.csv"):
        _capture(capsys, ["schedule", "--steps", "250", "--out", str(ws / name)])
        scheds.append((ws / name).read_bytes())
    assert scheds[0] == scheds[1]

    augs = []
    for name in ("a1.png", "a2.png"):
        _capture(capsys, ["augment", str(ws / "img.png"), "--seed", "4",
                          "--index", "2", "--epoch", "6", "--out", str(ws / name)])
        augs.append((ws / name).read_bytes())
    assert augs[0] == augs[1]


# --------------------------------------------------------------------------
# criterion 7: fusion arithmetic

def test_fusion_arithmetic_dimensions():
    plan6 = plan_table6_best()
    assert len(plan6.inputs) == 6 and plan6.method is FusionMethod.CONCAT
    vec6 = fuse([np.ones(192, np.float32)] * 6, plan6.method)
    assert vec6.shape == (1152,), f"best plan fused dim {vec6.shape}"

    plan4 = plan_all_scalogram()
    assert len(plan4.inputs) == 4
    vec4 = fuse([np.ones(192, np.float32)] * 4, plan4.method)
    assert vec4.shape == (768,), f"all-scalogram fused dim {vec4.shape}"

    added = fuse([np.full(192, 0.5, np.float32)] * 3, FusionMethod.ADD)
    assert added.shape == (192,), f"ADD fused dim {added.shape}"
