"""Compare the compiled and numpy recurrent kernels on training-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from homeorl.nn import _kernels_py

try:
    from homeorl.nn import _kernels_ext
except ImportError:  # extension not built
    _kernels_ext = None

# (label, T, B, H): sequence length, streams per minibatch, LSTM width
SHAPES = [
    ("foodshare", 32, 4, 16),
    ("grid", 100, 4, 32),
    ("field2d", 1024, 16, 64),
]


def make_inputs(T, B, H, rng):
    xproj = rng.standard_normal((T, B, 4 * H))
    w_hh = rng.standard_normal((H, 4 * H)) / np.sqrt(H)
    h0, c0 = rng.standard_normal((B, H)), rng.standard_normal((B, H))
    keep = (rng.random((T, B)) > 0.01).astype(np.float64)
    dhs = rng.standard_normal((T, B, H))
    rewards, values = rng.standard_normal((T, B)), rng.standard_normal((T, B))
    return xproj, w_hh, h0, c0, keep, dhs, rewards, values


def bench(mod, inputs, repeat):
    xproj, w_hh, h0, c0, keep, dhs, rewards, values = inputs
    fwd = mod.lstm_forward(xproj, w_hh, h0, c0, keep)
    dones = 1.0 - keep
    last = values[-1]
    timings = {
        "forward": lambda: mod.lstm_forward(xproj, w_hh, h0, c0, keep),
        "backward": lambda: mod.lstm_backward(dhs, fwd[1], fwd[2], fwd[3], fwd[4], keep, w_hh),
        "gae": lambda: mod.gae(rewards, values, dones, last, 0.99, 0.95),
    }
    out = {}
    for name, fn in timings.items():
        n, _ = timeit.Timer(fn).autorange()
        out[name] = min(timeit.repeat(fn, number=n, repeat=repeat)) / n
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'shape':<22}{'kernel':<10}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for label, T, B, H in SHAPES:
        inputs = make_inputs(T, B, H, rng)
        py = bench(_kernels_py, inputs, args.repeat)
        ext = bench(_kernels_ext, inputs, args.repeat) if _kernels_ext else None
        for kernel in py:
            a = py[kernel] * 1e3
            b = ext[kernel] * 1e3 if ext else float("nan")
            print(f"{f'{label} T{T} B{B} H{H}':<22}{kernel:<10}{a:>10.3f}{b:>11.3f}{a / b:>8.1f}x")
    if _kernels_ext is None:
        print("compiled extension not available; only numpy timings are meaningful")


if __name__ == "__main__":
    main()
