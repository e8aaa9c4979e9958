"""Master Markov chain of an influence model and observation analysis.

The joint status vector of all sites evolves as an ordinary Markov chain
on the product state space.  Because sites update independently given the
current joint state, each row of the master transition matrix G is the
Kronecker product of the per-site next-status distributions:

    G[s, s'] = prod_i P(next status of i is s'_i | joint state s)

This module builds G, decomposes its state space into communicating
classes, solves for stationary distributions, and quantifies what partial
observation does to the process: the restriction of the chain to a subset
of sites is in general *not* a Markov chain, and the functions here
measure that failure directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .model import (
    InfluenceModel,
    StateCodec,
    check_state,
    require_valid,
)

# An entry of G counts as a positive transition iff it exceeds this.
SUPPORT_TOL = 1e-12

# Default cap on the product state space size.
DEFAULT_STATE_CAP = 2**20

# Default cap on markovianity_gap history length.
DEFAULT_HORIZON_CAP = 12


class CapExceededError(RuntimeError):
    """A requested computation exceeds a configured size cap."""


class AmbiguousStationaryError(ValueError):
    """The chain has several recurrent classes and none was selected."""


@dataclass(frozen=True)
class MasterChain:
    """Master transition matrix over the joint state space.

    G is (N, N) row-stochastic with N = prod(m); row/column indices follow
    the site-1-most-significant codec from StateCodec.
    """

    G: np.ndarray
    m: tuple[int, ...]

    def __post_init__(self):
        G = np.array(self.G, dtype=float, copy=True)
        G.flags.writeable = False
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        codec = StateCodec(self.m)
        if G.shape != (codec.n_states, codec.n_states):
            raise ValueError(
                f"G has shape {G.shape}, expected square of size {codec.n_states}"
            )

    @property
    def codec(self) -> StateCodec:
        return StateCodec(self.m)

    @property
    def n_states(self) -> int:
        return self.codec.n_states


def build_master_chain(
    model: InfluenceModel, state_cap: int = DEFAULT_STATE_CAP
) -> MasterChain:
    """Construct the master chain of an influence model.

    Each row s of G is assembled as the Kronecker product (site 1 most
    significant) of the n per-site mixture rows sum_j D[i, j] *
    A[(j, i)][s_j - 1, :].  Raises InvalidModelError for an invalid model
    and CapExceededError when prod(m) exceeds state_cap.
    """
    require_valid(model)
    codec = StateCodec(model.m)
    N = codec.n_states
    if N > state_cap:
        raise CapExceededError(
            f"joint state space has {N} states, exceeding the cap {state_cap}"
        )
    grid = codec.status_grid()

    # marg[i] holds, for every joint state, the next-status distribution of
    # site i: marg[i][s, :] = sum_j D[i, j] * A[(j, i)][grid[s, j] - 1, :].
    marg = []
    for i in range(model.n):
        rows = np.zeros((N, model.m[i]))
        for j in range(model.n):
            w = model.D[i, j]
            if w == 0.0:
                continue
            rows += w * model.local_matrix(j, i)[grid[:, j] - 1]
        marg.append(rows)

    G = marg[0]
    for i in range(1, model.n):
        G = (G[:, :, None] * marg[i][:, None, :]).reshape(N, -1)
    return MasterChain(G=G, m=model.m)


@dataclass(frozen=True)
class ClassDecomposition:
    """Communicating classes of a chain, each flagged recurrent or not.

    classes are tuples of state indices, ordered by smallest member;
    recurrent[k] is True iff classes[k] is closed (no transition leaves
    it).  absorbing lists the states s with 1 - G[s, s] <= SUPPORT_TOL.
    """

    classes: tuple[tuple[int, ...], ...]
    recurrent: tuple[bool, ...]
    absorbing: tuple[int, ...]

    @property
    def recurrent_classes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(c for c, r in zip(self.classes, self.recurrent) if r)


def communicating_classes(chain: MasterChain) -> ClassDecomposition:
    """Decompose the state space into communicating classes.

    Uses the strongly connected components of the support digraph, where
    an edge s -> s' exists iff G[s, s'] > SUPPORT_TOL.  A class is
    recurrent iff it is closed under that digraph.
    """
    adj = sparse.csr_matrix(chain.G > SUPPORT_TOL)
    n_comp, labels = csgraph.connected_components(
        adj, directed=True, connection="strong"
    )
    members: list[list[int]] = [[] for _ in range(n_comp)]
    for s, lab in enumerate(labels):
        members[lab].append(s)
    order = sorted(range(n_comp), key=lambda k: members[k][0])

    classes = []
    recurrent = []
    dense = chain.G > SUPPORT_TOL
    for k in order:
        idx = members[k]
        classes.append(tuple(idx))
        outside = np.ones(chain.n_states, dtype=bool)
        outside[idx] = False
        recurrent.append(not dense[np.ix_(idx, np.flatnonzero(outside))].any())

    absorbing = tuple(
        int(s)
        for s in range(chain.n_states)
        if 1.0 - chain.G[s, s] <= SUPPORT_TOL
    )
    return ClassDecomposition(
        classes=tuple(classes), recurrent=tuple(recurrent), absorbing=absorbing
    )


def single_recurrent_class(chain: MasterChain) -> bool:
    """True iff every state lies in one single recurrent class."""
    dec = communicating_classes(chain)
    return len(dec.classes) == 1 and dec.recurrent[0]


@dataclass(frozen=True)
class StationaryDistribution:
    """A stationary distribution together with its supporting class."""

    pi: np.ndarray
    class_index: int

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float, copy=True)
        pi.flags.writeable = False
        object.__setattr__(self, "pi", pi)


def stationary_distribution(
    chain: MasterChain, class_index: int | None = None
) -> StationaryDistribution:
    """Stationary distribution supported on one recurrent class.

    Solves pi G = pi, sum(pi) = 1 restricted to the selected class by a
    direct linear solve (the first balance equation is replaced by the
    normalization).  When the chain has a unique recurrent class it is
    picked automatically; with several, class_index (position in the
    ClassDecomposition) must name one, else AmbiguousStationaryError.
    """
    dec = communicating_classes(chain)
    rec = [k for k, r in enumerate(dec.recurrent) if r]
    if class_index is None:
        if len(rec) != 1:
            raise AmbiguousStationaryError(
                f"chain has {len(rec)} recurrent classes; pass class_index "
                f"to select one of {rec}"
            )
        class_index = rec[0]
    if class_index not in rec:
        raise ValueError(f"class {class_index} is not recurrent")

    idx = list(dec.classes[class_index])
    Gc = chain.G[np.ix_(idx, idx)]
    k = len(idx)
    M = Gc.T - np.eye(k)
    M[0, :] = 1.0
    rhs = np.zeros(k)
    rhs[0] = 1.0
    pi_c = np.linalg.solve(M, rhs)

    # Clip solver dust; the result must still be a fixed point.
    pi_c = np.clip(pi_c, 0.0, None)
    pi_c /= pi_c.sum()
    if np.max(np.abs(pi_c @ Gc - pi_c)) > 1e-10:
        raise RuntimeError("stationary solve did not reach a fixed point")

    pi = np.zeros(chain.n_states)
    pi[idx] = pi_c
    return StationaryDistribution(pi=pi, class_index=class_index)


def _check_init(chain: MasterChain, init: np.ndarray) -> np.ndarray:
    init = np.asarray(init, dtype=float)
    if init.shape != (chain.n_states,):
        raise ValueError(
            f"init has shape {init.shape}, expected ({chain.n_states},)"
        )
    if (init < -1e-12).any():
        raise ValueError("init has negative entries")
    if abs(init.sum() - 1.0) > 1e-9:
        raise ValueError(f"init sums to {init.sum():.10g}, expected 1")
    return np.clip(init, 0.0, None)


def check_observed(m: Sequence[int], observed: Sequence[int]) -> tuple[int, ...]:
    """Validate a set of observed sites; returns them sorted ascending."""
    obs = sorted({int(v) for v in observed})
    if not obs:
        raise ValueError("observed site set is empty")
    if obs[0] < 0 or obs[-1] >= len(m):
        raise ValueError(f"observed sites {obs} outside 0..{len(m) - 1}")
    return tuple(obs)


def projection_index(m: Sequence[int], observed: Sequence[int]) -> np.ndarray:
    """Map each joint state index to the index of its observed part.

    Returns an (N,) array whose entry s is the codec index of the observed
    sub-tuple of state s under StateCodec over the observed sites.
    """
    observed = check_observed(m, observed)
    codec = StateCodec(tuple(m))
    sub = StateCodec(tuple(m[i] for i in observed))
    grid = codec.status_grid()
    return (grid[:, observed] - 1) @ np.asarray(sub.strides, dtype=np.int64)


def _path_values(path) -> np.ndarray:
    values = getattr(path, "values", path)
    return np.asarray(values, dtype=np.int64)


def observed_path_log_probability(
    chain: MasterChain,
    init: np.ndarray,
    observed: Sequence[int],
    path,
) -> float:
    """Log probability of an observed status path under the chain.

    `path` is a sequence of status tuples over the observed sites (or an
    object with a .values array), time-ordered.  Evaluated by the forward
    recursion over the joint chain with per-step normalization; returns
    -inf for a path of probability zero.
    """
    observed = check_observed(chain.m, observed)
    init = _check_init(chain, init)
    values = _path_values(path)
    if values.ndim != 2 or values.shape[1] != len(observed):
        raise ValueError(
            f"path values must be (L, {len(observed)}) status tuples"
        )
    if values.shape[0] == 0:
        return 0.0
    sub = StateCodec(tuple(chain.m[i] for i in observed))
    symbols = sub.encode_rows(values)
    proj = projection_index(chain.m, observed)

    logp = 0.0
    alpha = init * (proj == symbols[0])
    total = alpha.sum()
    if total <= 0.0:
        return -np.inf
    logp += np.log(total)
    alpha = alpha / total
    for sym in symbols[1:]:
        alpha = (alpha @ chain.G) * (proj == sym)
        total = alpha.sum()
        if total <= 0.0:
            return -np.inf
        logp += np.log(total)
        alpha = alpha / total
    return float(logp)


def observed_path_probability(
    chain: MasterChain,
    init: np.ndarray,
    observed: Sequence[int],
    path,
) -> float:
    """Probability of an observed status path; exp of the log version."""
    logp = observed_path_log_probability(chain, init, observed, path)
    return float(np.exp(logp))


def conditional_observed_probability(
    chain: MasterChain,
    init: np.ndarray,
    observed: Sequence[int],
    history,
    next_value: Sequence[int],
) -> float:
    """P(next observation | observed history) under the joint chain.

    Computed as the ratio of the extended-path probability to the history
    probability, both via the forward recursion.  Raises ValueError when
    the history itself has probability zero.
    """
    values = _path_values(history)
    log_hist = observed_path_log_probability(chain, init, observed, values)
    if log_hist == -np.inf:
        raise ValueError("observed history has probability zero under init")
    nxt = np.asarray(tuple(int(v) for v in next_value), dtype=np.int64)
    ext = np.vstack([values, nxt[None, :]])
    log_ext = observed_path_log_probability(chain, init, observed, ext)
    return float(np.exp(log_ext - log_hist))


def markovianity_gap(
    chain: MasterChain,
    init: np.ndarray,
    observed: Sequence[int],
    horizon: int,
    horizon_cap: int = DEFAULT_HORIZON_CAP,
) -> float:
    """Worst-case violation of the Markov property by the observed process.

    Enumerates every positive-probability observation history of length
    2..horizon and returns

        max |P(next = b | full history) - P(next = b | last observation)|

    where the one-step conditional on the right is taken at the matching
    time (marginal init @ G^t).  A value of 0 (up to numerical noise)
    means the observed process is consistent with a time-inhomogeneous
    Markov chain on the observed statuses over this horizon; the observed
    part of an influence model generically is not, and the gap is a
    certificate.  Observing all sites gives 0 within 1e-12.
    """
    observed = check_observed(chain.m, observed)
    init = _check_init(chain, init)
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    if horizon > horizon_cap:
        raise CapExceededError(
            f"horizon {horizon} exceeds the cap {horizon_cap}"
        )
    proj = projection_index(chain.m, observed)
    K = int(proj.max()) + 1
    masks = [proj == a for a in range(K)]
    N = chain.n_states

    # Time-t marginals and the time-matched one-step observed conditionals
    # last_step[t][a, b] = P(o_{t+1} = b | o_t = a).
    mu = np.empty((horizon, N))
    mu[0] = init
    for t in range(1, horizon):
        mu[t] = mu[t - 1] @ chain.G
    last_step = np.full((horizon, K, K), np.nan)
    for t in range(horizon):
        for a in range(K):
            w = mu[t] * masks[a]
            tot = w.sum()
            if tot <= 0.0:
                continue
            nxt = w @ chain.G
            last_step[t, a] = [nxt[masks[b]].sum() / tot for b in range(K)]

    # Depth-first walk over histories.  Each stack entry carries the
    # normalized filtering distribution given the history so far, the
    # history length t (observations at times 0..t-1), and the last symbol.
    gap = 0.0
    stack: list[tuple[int, int, np.ndarray]] = []
    for a in range(K):
        alpha = init * masks[a]
        tot = alpha.sum()
        if tot > 0.0:
            stack.append((1, a, alpha / tot))
    while stack:
        t, last, alpha = stack.pop()
        step = alpha @ chain.G
        for b in range(K):
            p_full = step[masks[b]].sum()
            if t >= 2:
                gap = max(gap, abs(p_full - last_step[t - 1, last, b]))
            if t < horizon and p_full > 0.0:
                child = step * masks[b]
                stack.append((t + 1, b, child / p_full))
    return float(gap)


def lumped_one_step_chain(
    chain: MasterChain,
    init: np.ndarray,
    observed: Sequence[int],
) -> np.ndarray:
    """One-step transition matrix of the observed statuses at time 0.

    Entry (a, b) is P(observed part at time 1 = b | observed part at
    time 0 = a) under init.  This matrix is NOT the generator of the
    observed process in general: the observed process is typically not
    Markov, so iterating this matrix does not give multi-step observation
    probabilities.  Requires every observed status to have positive
    probability under init.
    """
    observed = check_observed(chain.m, observed)
    init = _check_init(chain, init)
    proj = projection_index(chain.m, observed)
    K = int(proj.max()) + 1
    L = np.empty((K, K))
    sub = StateCodec(tuple(chain.m[i] for i in observed))
    for a in range(K):
        w = init * (proj == a)
        tot = w.sum()
        if tot <= 0.0:
            raise ValueError(
                f"observed status {sub.decode(a)} has probability zero under init"
            )
        nxt = w @ chain.G
        for b in range(K):
            L[a, b] = nxt[proj == b].sum() / tot
    if np.max(np.abs(L.sum(axis=1) - 1.0)) > 1e-9:
        raise RuntimeError("lumped rows failed to sum to 1")
    return L
