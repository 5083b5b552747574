"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best-of-``repeat`` time per call for both backends
and the speedup. Outputs are checked for agreement before timing.
"""
import argparse
import sys
import timeit

import numpy as np

from ota_assign import _backend


def cases(rng):
    xy = rng.uniform(0, 1, size=(300, 2))
    boxes = np.concatenate([xy, xy + rng.uniform(0.01, 0.3, size=(300, 2))], axis=1)
    gts = boxes[:20] + rng.normal(0, 0.01, size=(20, 4)).clip(-0.005, 0.005)
    order = np.argsort(-rng.uniform(size=300), kind="stable")
    lsap_cost = rng.uniform(size=(40, 300))
    ot_cost = np.ascontiguousarray(rng.uniform(0, 4, size=(21, 300)))
    a = np.concatenate([np.full(20, 5.0), [200.0]])
    b = np.ones(300)

    small_cost = np.ascontiguousarray(rng.uniform(0, 4, size=(6, 100)))
    small_a = np.array([3.0, 4, 2, 5, 3, 83])

    def sinkhorn(k):
        f, g = np.zeros(21), np.zeros(300)
        return k.sinkhorn_log(ot_cost, a, b, 0.1, f, g, 200, 0.0)[0], f, g

    def sinkhorn_small(k):
        f, g = np.zeros(6), np.zeros(100)
        return k.sinkhorn_log(small_cost, small_a, np.ones(100), 0.1, f, g, 200, 0.0)[0], f, g

    return [
        ("pairwise_iou 20x300", lambda k: k.pairwise_iou(gts, boxes)),
        ("nms 300 boxes @0.7", lambda k: np.asarray(k.nms_ordered(boxes, order, 0.7))),
        ("lsap 40x300", lambda k: np.asarray(k.lsap(lsap_cost))),
        ("sinkhorn 21x300, 200 iters", sinkhorn),
        ("sinkhorn 6x100, 200 iters", sinkhorn_small),
    ]


def agree(x, y):
    if isinstance(x, tuple):
        return all(agree(u, v) for u, v in zip(x, y))
    return np.allclose(np.asarray(x), np.asarray(y), rtol=1e-9, atol=1e-9)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _backend.compiled is None:
        print("compiled extension not available; build it with `pip install -e .`", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<30}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for name, fn in cases(rng):
        if not agree(fn(_backend.pure), fn(_backend.compiled)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        times = []
        for k in (_backend.pure, _backend.compiled):
            number = 1 if k is _backend.pure else 20
            best = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat)) / number
            times.append(best * 1e3)
        print(f"{name:<30}{times[0]:>12.3f}{times[1]:>14.3f}{times[0] / times[1]:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
