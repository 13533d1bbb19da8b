"""Compare the compiled and pure-numpy convolution backends.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Times the grouped-conv forward/backward kernels on the two shapes the
model actually runs (the pointwise channel-mixing conv and the depthwise
temporal conv), plus one full training step of the default synthetic-data
configuration under each backend.
"""
import argparse
import os
import time

import numpy as np

from dbconf import kernels


def time_fn(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    cases = [
        ("pointwise  (B32 C22 T1000 -> F40 K1)",
         rng.standard_normal((32, 22, 1000)),
         rng.standard_normal((40, 22, 1)), 1, 1),
        ("depthwise  (B32 F40 T1024 K25 g40)",
         rng.standard_normal((32, 40, 1024)),
         rng.standard_normal((40, 1, 25)), 1, 40),
    ]
    backends = kernels.get_backends()
    header = f"{'kernel':42s}" + "".join(f"{name:>12s}" for name, _ in backends)
    print(header)
    print("-" * len(header))
    for label, x, w, stride, groups in cases:
        row = f"{label:42s}"
        y = backends[0][1].conv1d_forward(x, w, stride, groups)
        gy = rng.standard_normal(y.shape)
        for direction in ("forward", "backward_x", "backward_w"):
            vals = []
            for name, mod in backends:
                if direction == "forward":
                    fn = lambda m=mod: m.conv1d_forward(x, w, stride, groups)
                elif direction == "backward_x":
                    fn = lambda m=mod: m.conv1d_backward_x(
                        gy, w, stride, groups, x.shape[-1])
                else:
                    fn = lambda m=mod: m.conv1d_backward_w(
                        gy, x, stride, groups, w.shape[-1])
                vals.append(time_fn(fn, repeats))
            print(f"{label + ' ' + direction:42s}"
                  + "".join(f"{v * 1e3:10.2f}ms" for v in vals))
        print()


def bench_training_step(repeats):
    from dbconf.autodiff import cross_entropy
    from dbconf.model import Model, synth_model_config
    from dbconf.optim import AdamState, adam_step, zero_grads
    from dbconf.rng import DROPOUT, make_rng

    rng = np.random.default_rng(1)
    x = rng.standard_normal((32, 8, 512))
    y = rng.integers(0, 2, 32)

    print(f"{'one training step (B32 C8 T512)':42s}"
          f"{'seconds':>12s}")
    print("-" * 54)
    for name, mod in kernels.get_backends():
        kernels.conv1d_forward = mod.conv1d_forward
        kernels.conv1d_backward_x = mod.conv1d_backward_x
        kernels.conv1d_backward_w = mod.conv1d_backward_w
        model = Model(synth_model_config(), seed=0)
        state = AdamState(model.params)

        def step():
            logits, _ = model.forward(x, training=True,
                                      rng=make_rng(0, DROPOUT, 0))
            loss = cross_entropy(logits, y)
            zero_grads(model.params)
            loss.backward()
            adam_step(model.params, state)

        step()  # warm up
        print(f"{name:42s}{time_fn(step, repeats):12.3f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}\n")
    bench_kernels(args.repeats)
    bench_training_step(args.repeats)
