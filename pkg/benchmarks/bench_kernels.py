"""Compare the compiled and pure-Python kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Times the expected shortfall value/gradient kernel, a full ERC solve and a
short filtering backtest with each backend.
"""
import argparse
import time

import numpy as np

from skewparity import _backend, _kernels_py, budgeting, risk
from skewparity.backtest import BacktestConfig, JumpParams, run_backtest
from skewparity.budgeting import solve_erc
from skewparity.mixture import MixtureModel, simulate_returns, to_period

try:
    from skewparity import _kernels as compiled
except ImportError:
    compiled = None

RHO = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.4], [0.2, 0.4, 1.0]])
EXAMPLE2 = MixtureModel.from_volatilities(
    0.25, [0.03, 0.08, 0.12], [0.08, 0.20, 0.30], RHO,
    [-0.15, -0.40, 0.0], [0.15, 0.20, 0.10],
    [[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]],
)
WEEKLY = MixtureModel.from_volatilities(
    0.005, [0.0538, 0.0789, 0.1010], [0.0417, 0.1564, 0.0291],
    [[1.0, -0.368, -0.2517], [-0.368, 1.0, 0.5743], [-0.2517, 0.5743, 1.0]],
    [0.0, -0.012, -0.0223], [0.0, 0.0676, 0.0257],
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.6045], [0.0, 0.6045, 1.0]],
)


def use(k):
    for mod in (risk, budgeting, _backend):
        mod.kernels = k


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def gradient_loop():
    x = np.array([0.4, 0.3, 0.3])
    for _ in range(2000):
        risk.es_gradient(EXAMPLE2, x, 0.95)


def erc():
    solve_erc(EXAMPLE2, 0.95, "mes")


def backtest():
    p = to_period(WEEKLY, 1 / 52)
    panel = simulate_returns(p, 260, seed=0, dt=1 / 52)
    run_backtest(panel, BacktestConfig(measure="mes", estimator="filtering"), JumpParams.from_model(p))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels_py)]
    if compiled is not None:
        backends.insert(0, ("compiled", compiled))
    else:
        print("compiled kernels not built; timing the Python fallback only")
    cases = [("es_gradient x2000", gradient_loop), ("ERC mixture ES", erc), ("filtering backtest", backtest)]
    results = {}
    for name, k in backends:
        use(k)
        results[name] = [best_of(fn, args.repeat) for _, fn in cases]
    print(f"{'case':<22}" + "".join(f"{n:>12}" for n, _ in backends) + ("     speedup" if compiled else ""))
    for i, (case, _) in enumerate(cases):
        line = f"{case:<22}" + "".join(f"{results[n][i]:>11.4f}s" for n, _ in backends)
        if compiled is not None:
            line += f"{results['python'][i] / results['compiled'][i]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
