import numpy as np
import pytest

from herdmarket import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile (or load from disk cache) the jitted kernels before any timed test
    exps = np.full(8, 0.1)
    acts = np.full(8, 0.5)
    sigs = np.zeros(8)
    dests = np.full(8, 0.5)
    times = np.empty(8)
    copt = np.empty(8, dtype=np.int64)
    kernels.pure_chain(2, 2, 0.0, 4, 0.2, 0.5, 0.05, exps, acts, dests, times, copt)
    occ = np.zeros(5)
    kernels.pure_occupation(2, 2, 0.0, 4, 0.2, 0.5, 0, 0, exps, acts, dests, occ)
    prices = np.empty(8)
    cpess = np.empty(8, dtype=np.int64)
    kinds = np.empty(8, dtype=np.int8)
    kernels.extended_chain(
        2, 2, 2, 0.0, 50.0, 6, 0.12, 0.2, 1.2, 1.0, 1.0 / 3.0, 1.0, 1.0, 50.0,
        1.0, 1.0, 0.02, exps, acts, sigs, dests, times, prices, cpess, copt, kinds,
    )
    xs = np.empty(3)
    vs = np.empty(3)
    kernels.extended_sde_em(
        48.0, 0.0, 0.01, 2, 8.0, 0.12, 0.2, 1.2, 4.0, 0.2, 1.0, 1.0, 50.0,
        1.6, np.zeros(2), 1, xs, vs,
    )
