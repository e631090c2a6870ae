"""Shared test helpers."""

import numpy as np

from isccsim.network import SensingMode
from isccsim.workload import WorkloadProblem


def random_problem(rng: np.random.Generator) -> WorkloadProblem:
    """A random solver instance, VS or WS-coupled with equal probability.

    WS sigma is derived from a target full-bandwidth sensing cap of at most
    300 samples, which keeps the oracle's 400-point bandwidth lattice within
    one sample of the continuous optimum.
    """
    mode = SensingMode.VS if rng.random() < 0.5 else SensingMode.WS
    t_gen = float(rng.uniform(0.5, 3.0))
    base = dict(
        t_gen=t_gen,
        t_cons=float(rng.uniform(0.5, 4.0)),
        bandwidth_hz=float(rng.uniform(1e5, 5e6)),
        compute_cps=float(rng.uniform(1e7, 1e9)),
        eta=float(rng.uniform(0.5, 8.0)),
        s_dl=float(rng.uniform(1e4, 5e6)),
        s_ul=float(rng.uniform(1e4, 5e6)),
        kappa=float(rng.uniform(1e5, 1e7)),
        w_cap=float(rng.integers(0, 301)),
    )
    if mode is SensingMode.VS:
        return WorkloadProblem(
            mode=SensingMode.VS, tau_s=float(rng.uniform(0.005, 0.1)), **base
        )
    rho = float(rng.uniform(0.5, 4.0))
    full_band_cap = float(rng.uniform(1.0, 300.0))
    sigma = base["bandwidth_hz"] * rho * t_gen / full_band_cap
    return WorkloadProblem(
        mode=SensingMode.WS, sigma=sigma, rho=rho, coupled=True, **base
    )
