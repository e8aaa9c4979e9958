"""Shared generators and independent oracles for the test suite.

The oracles here deliberately use different algorithms than the library
(power iteration instead of a linear solve, explicit path enumeration
instead of the forward recursion) so agreement is evidence, not tautology.
"""

import itertools

import numpy as np

from influencemodel import InfluenceModel
from influencemodel.chain import projection_index
from influencemodel.model import StateCodec


def stochastic_rows(rng, rows: int, cols: int, min_entry: float = 0.02) -> np.ndarray:
    """Random row-stochastic matrix with every entry >= min_entry / (1 + cols*min_entry)."""
    X = rng.dirichlet(np.ones(cols), size=rows)
    return (X + min_entry) / (1.0 + cols * min_entry)


def random_model(rng, n=None, m=None, shared=None, min_entry=0.02, max_states=64):
    """Random valid influence model, entries bounded away from zero.

    The positivity bound makes the master chain strictly positive, so the
    generated models all have a single recurrent class and a strictly
    positive stationary distribution.
    """
    if m is not None:
        m = tuple(int(v) for v in m)
        n = len(m)
    else:
        if n is None:
            n = int(rng.integers(1, 4))
        while True:
            m = tuple(int(rng.integers(2, 5)) for _ in range(n))
            if int(np.prod(m)) <= max_states:
                break
    if shared is None:
        shared = len(set(m)) == 1 and bool(rng.integers(0, 2))
    D = stochastic_rows(rng, n, n, min_entry)
    if shared:
        return InfluenceModel(D=D, m=m, A_shared=stochastic_rows(rng, m[0], m[0], min_entry))
    pairs = {
        (j, i): stochastic_rows(rng, m[j], m[i], min_entry)
        for j in range(n)
        for i in range(n)
    }
    return InfluenceModel(D=D, m=m, A_pairs=pairs)


def power_iteration_stationary(G: np.ndarray, iters: int = 200000, tol: float = 1e-14) -> np.ndarray:
    """Stationary distribution by repeated multiplication (oracle)."""
    N = G.shape[0]
    pi = np.full(N, 1.0 / N)
    for _ in range(iters):
        new = pi @ G
        new = new / new.sum()
        if np.max(np.abs(new - pi)) < tol:
            return new
        pi = new
    raise RuntimeError("power iteration did not converge")


def brute_force_observed_log_prob(G, init, m, observed, values) -> float:
    """log P(observed path) by explicit enumeration of hidden joint paths."""
    m = tuple(m)
    proj = projection_index(m, observed)
    sub = StateCodec(tuple(m[i] for i in sorted(observed)))
    syms = sub.encode_rows(np.asarray(values, dtype=np.int64))
    fibers = [np.flatnonzero(proj == s) for s in syms]
    total = 0.0
    for path in itertools.product(*fibers):
        p = float(init[path[0]])
        for a, b in zip(path, path[1:]):
            p *= G[a, b]
            if p == 0.0:
                break
        total += p
    return float(np.log(total)) if total > 0.0 else -float("inf")


def fiber_conjugate(G, init, m, observed, blocks):
    """Conjugate (G, init) by a fiber-block-diagonal P with unit row sums.

    Blocks are indexed by observed symbol.  P commutes with every fiber
    indicator, so the transformed pair assigns the same probability to
    every observation sequence as the original (exactly, in real
    arithmetic).  The result is a valid chain only if it stays nonnegative;
    callers assert that.
    """
    proj = projection_index(m, observed)
    N = G.shape[0]
    P = np.zeros((N, N))
    for k, B in enumerate(blocks):
        idx = np.flatnonzero(proj == k)
        B = np.asarray(B, dtype=float)
        if B.shape != (len(idx), len(idx)):
            raise ValueError("block shape does not match fiber size")
        if np.max(np.abs(B.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("block rows must sum to 1")
        P[np.ix_(idx, idx)] = B
    Pinv = np.linalg.inv(P)
    return Pinv @ G @ P, init @ P
