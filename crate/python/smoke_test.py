"""Smoke test for the pyalkit extension.

Build and install first:
    pip install --no-build-isolation ./crates/python
or  maturin develop -m crates/python/Cargo.toml
"""

import math
import sys

import pyalkit


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def main():
    counts = pyalkit.longtail_counts(10, 500, 10.0)
    check(counts[0] == 500 and counts[-1] == 50, f"longtail_counts {counts}")

    x, y = pyalkit.synth(4, 8, 80, 4.0, class_separation=4.0, seed=1)
    check(len(x) == len(y) == sum(pyalkit.longtail_counts(4, 80, 4.0)), "synth shapes")

    n = len(y)
    val = list(range(0, n, 10))
    labeled = [i for i in range(1, n, 5) if i % 10 != 0]
    head = pyalkit.train(x, y, labeled, val, 4, epochs=40, seed=0)
    acc = head.accuracy(x, y)
    check(acc > 0.6, f"train accuracy {acc:.3f}")

    ddb = head.ddb(x)
    preds = head.predict(x)
    col = [head.dcsdb(x, c) for c in range(4)]
    check(all(d >= 0 for d in ddb), "ddb non-negative")
    check(all(math.isclose(ddb[i], col[preds[i]][i]) for i in range(n)), "dcsdb at prediction equals ddb")

    hand = pyalkit.Head([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]], [0.0, 0.0, 0.0])
    check(abs(hand.dcsdb([[3.0, 1.0]], 1)[0] - math.sqrt(2)) < 1e-12, "hand dcsdb sqrt(2)")

    taken = set(labeled) | set(val)
    for name in ["random", "margin", "coreset", "badge", "mase", "base", "balancing"]:
        picks = pyalkit.select(name, x, y, labeled, val, head, 12, seed=3)
        ok = len(picks) == len(set(picks)) == 12 and not (set(picks) & taken)
        check(ok, f"select {name}")

    check(abs(pyalkit.imbalance_ratio([10, 5, 2]) - 5.0) < 1e-12, "imbalance_ratio")
    check(abs(pyalkit.entropy([1, 1]) - math.log(2)) < 1e-12, "entropy")

    config = """
[data]
kind = "synth"
num_classes = 3
feature_dim = 4
max_per_class = 60
imbalance_ratio = 2.0
class_separation = 4.0
noise_sigma = 1.0
seed = 0
test_per_class = 10

[pool]
val_frac = 0.1
initial_size = 9
budget = 6
rounds = 2

[train]
epochs = 10
early_stop_patience = 10
batch_size = 16
learning_rate = 0.1
weight_decay = 0.0
momentum = 0.9
schedule = { kind = "cosine", t_max = 10 }

[strategy]
name = ["random", "base"]

[run]
seeds = [0, 1]
"""
    runs = pyalkit.run_experiment(config)
    check(len(runs) == 4 and all(len(r) == 3 for r in runs), "run_experiment shape")
    check([r["labeled"] for r in runs[0]] == [9, 15, 21], "labeled grows by budget")

    try:
        pyalkit.run_experiment(config, overrides=["pool.budget=1000"])
    except pyalkit.ConfigError as e:
        check("E_CONFIG" in str(e), "capacity error is ConfigError")
    else:
        check(False, "capacity error raised")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
