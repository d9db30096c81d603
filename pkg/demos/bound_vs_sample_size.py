"""Closed- vs open-loop identification accuracy against the theoretical bound.

For a second-order Box-Jenkins system under unit feedback, the asymptotic
covariance calculator gives the achievable mean-squared error of the plant
parameters.  This script runs a small Monte Carlo campaign at a few sample
sizes and prints the realized MSE next to bound/N, for both loop
configurations.
"""

import numpy as np

from wnsf import (
    BjModel,
    LoopConfig,
    McExperiment,
    ModelOrders,
    Polynomial,
    RationalFilter,
    SpectrumModel,
    WnsfOptions,
    compute_mcr,
    run_monte_carlo,
)

SYSTEM = BjModel(
    L=Polynomial([0.0, 1.0, 0.1]),
    F=Polynomial([1.0, -0.5, 0.75]),
    C=Polynomial([1.0, 0.7]),
    D=Polynomial([1.0, -0.9]),
)
CONTROLLER = RationalFilter(Polynomial([1.0]))
ORDERS = ModelOrders(2, 2, 1, 1)
RUNS = 50


def main():
    for loop_kind in ("closed", "open"):
        cfg0 = LoopConfig(system=SYSTEM, controller=CONTROLLER, N=1000,
                          seed=0, loop_kind=loop_kind)
        trace = compute_mcr(SpectrumModel.from_loop_config(cfg0)).dyn_block_trace
        print(f"\n{loop_kind} loop — bound trace {trace:.4f}")
        print(f"{'N':>8} {'bound/N':>12} {'mean MSE':>12} {'ratio':>8}")
        for N in (1000, 10000):
            exp = McExperiment(
                loop=LoopConfig(system=SYSTEM, controller=CONTROLLER, N=N,
                                seed=0, loop_kind=loop_kind),
                orders=ORDERS,
                options=WnsfOptions(n_grid=(50,), known_zero_ic=True),
                base_seed=0,
            )
            result = run_monte_carlo(exp, RUNS, parallelism=4)
            mse = result.aggregate()["mse"]["mean"]
            print(f"{N:>8} {trace / N:>12.3e} {mse:>12.3e} "
                  f"{mse / (trace / N):>8.2f}")


if __name__ == "__main__":
    main()
