"""Smoke test for the mirror_td_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/mirror_td_py-*.whl
"""

import math
import tempfile
from pathlib import Path

import mirror_td_py as mt


def close(a, b, tol):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    assert mt.soft_threshold([2.0, -0.3, -1.0], 0.5) == [1.5, 0.0, -0.5]

    link = mt.Mirror("pnorm 3")
    w = [0.5, -2.0, 0.0, 1.25]
    assert close(link.grad_conjugate(link.grad(w)), w, 1e-12)

    values = mt.solve_exact("chain 3", 0.5)
    assert close(values, [1.0, 2.0, 2.0], 1e-9), values

    exact = mt.solve_exact("chain 5", 0.9, policy="constant 1")
    learner = mt.Learner(5, learner="td", alpha="constant 0.1")
    basis = [[1.0 if i == s else 0.0 for i in range(5)] for s in range(5)]
    for _ in range(2000):
        for s in range(5):
            nxt = min(s + 1, 4)
            reward = 1.0 if nxt == 4 else 0.0
            learner.td(basis[s], basis[nxt], reward)
    err = max(abs(a - b) for a, b in zip(learner.weights, exact))
    assert err <= 1e-2, (learner.weights, exact)

    restored = mt.Learner.from_snapshot(learner.snapshot())
    assert restored.weights == learner.weights

    try:
        mt.Learner(3, learner="nope")
    except ValueError:
        pass
    else:
        raise AssertionError("bad learner name accepted")

    with tempfile.TemporaryDirectory() as tmp:
        rows = mt.run_experiment(
            "env = chain 5\nlearner = sparse_mirror\nbeta = 0.001\nepisodes = 5\nmax_steps = 20\ntrials = 2\n",
            out=tmp,
        )
        assert len(rows) == 10
        assert all(math.isfinite(r["bellman_error"]) for r in rows)
        assert (Path(tmp) / "runs.csv").exists()

    assert all(passed for _, _, _, passed in mt.check("contraction"))
    print("smoke test ok")


if __name__ == "__main__":
    main()
