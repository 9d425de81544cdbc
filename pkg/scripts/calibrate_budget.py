"""Sweep MLP/FFN width ratios and report which land inside the budget windows.

The structural defaults (stage dims, depths, heads, stem) are fixed by the
architecture; the free calibration knobs are the per-stage MLP width ratios.
This script scans a small neighbourhood around the shipped defaults and
prints parameter/FLOP totals with their distance to the published budget, so
the frozen defaults in ModelConfig can be re-derived at any time.

Run: python3 scripts/calibrate_budget.py
"""

from dataclasses import replace
from itertools import product

from biomoe.model import ModelConfig
from biomoe.budget import count_params, count_flops, REFERENCE_BUDGET

# acceptance windows: total params 10%, per-encoder params 15%,
# total flops 15%, per-encoder flops 20%
WINDOWS = {
    ("params", "enc1"): 0.15, ("params", "enc2"): 0.15, ("params", "total"): 0.10,
    ("flops", "enc1"): 0.20, ("flops", "enc2"): 0.20, ("flops", "total"): 0.15,
}


def evaluate(cfg):
    p = count_params(cfg)
    f, _ = count_flops(cfg)
    vals = {("params", k): p[k] for k in ("enc1", "enc2", "total")}
    vals |= {("flops", k): f[k] for k in ("enc1", "enc2", "total")}
    worst = 1.0
    ok = True
    for key, tol in WINDOWS.items():
        tgt = REFERENCE_BUDGET[key[0]][key[1]]
        lo, hi = tgt * (1 - tol), tgt * (1 + tol)
        v = vals[key]
        if not (lo <= v <= hi):
            ok = False
        worst = min(worst, min(v - lo, hi - v) / (hi - lo))
    return vals, ok, worst


def main():
    base = ModelConfig()
    print(f"defaults: enc1 ratios {base.enc1_mlp_ratios}, enc2 ratios {base.enc2_ffn_ratios}")
    rows = []
    for r0, r3, q0 in product((3, 4, 5, 6), (1, 2), (2, 3, 4)):
        cfg = replace(base,
                      enc1_mlp_ratios=(r0, 8, 1, r3),
                      enc2_ffn_ratios=(q0, 7, 8))
        vals, ok, worst = evaluate(cfg)
        rows.append((worst, ok, (r0, 8, 1, r3), (q0, 7, 8), vals))

    rows.sort(key=lambda r: -r[0])
    print(f"{'enc1 ratios':<14}{'enc2 ratios':<12}{'ok':<4}{'margin':<8}"
          f"{'P1':>7}{'P2':>7}{'Pt':>7}{'F1':>7}{'F2':>7}{'Ft':>7}")
    for worst, ok, r1, r2, vals in rows:
        print(f"{str(r1):<14}{str(r2):<12}{'Y' if ok else 'n':<4}{worst:<8.3f}"
              f"{vals[('params','enc1')]/1e6:>7.2f}{vals[('params','enc2')]/1e6:>7.2f}"
              f"{vals[('params','total')]/1e6:>7.2f}{vals[('flops','enc1')]/1e9:>7.2f}"
              f"{vals[('flops','enc2')]/1e9:>7.2f}{vals[('flops','total')]/1e9:>7.2f}")

    vals, ok, worst = evaluate(base)
    print(f"\nshipped defaults: {'PASS' if ok else 'FAIL'} "
          f"(worst window margin {worst * 100:.1f}% of window width)")


if __name__ == "__main__":
    main()
