"""Trajectory sampling and observation handling for influence models.

Sampling works directly on the factored model: each site draws its next
status from its quasi-linear mixture row, so no joint-space table is ever
materialized and the cost per step is O(n^2 * max(m)) independent of the
joint state space size.

Reproducibility contract: the generator is numpy's default PCG64 seeded
with the given seed.  Draw order is fixed: when the initial state is a
distribution over joint states, one uniform is consumed first to pick the
start state by inverse CDF; then each step consumes one uniform per site
in ascending site order.  Statuses are selected as the first status whose
cumulative mixture probability reaches the uniform.  The same seed gives
the same trajectory on every run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .model import (
    InfluenceModel,
    StateCodec,
    check_state,
    model_fingerprint,
    require_valid,
)
from .chain import check_observed

_CHUNK = 1 << 16


@dataclass(frozen=True)
class Trajectory:
    """Sampled joint-status path: states[k] is the joint state at time k.

    states is a (T+1, n) int array of 1-based statuses.  seed and
    fingerprint record how the trajectory was produced.
    """

    states: np.ndarray
    m: tuple[int, ...]
    seed: int | None = None
    fingerprint: str | None = None

    def __post_init__(self):
        states = np.array(self.states, dtype=np.int64, copy=True)
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        if states.ndim != 2 or states.shape[1] != len(self.m):
            raise ValueError(f"states must be (T+1, {len(self.m)})")
        mvec = np.asarray(self.m, dtype=np.int64)
        if (states < 1).any() or (states > mvec).any():
            raise ValueError("trajectory contains out-of-range statuses")
        states.flags.writeable = False
        object.__setattr__(self, "states", states)

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n(self) -> int:
        return len(self.m)


@dataclass(frozen=True)
class ObservationSequence:
    """Statuses of a subset of sites over time.

    observed holds the 0-based site indices, ascending; values is the
    (L, len(observed)) array of their 1-based statuses.  m optionally
    records the full model's status counts.
    """

    observed: tuple[int, ...]
    values: np.ndarray
    m: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "observed", tuple(int(v) for v in self.observed))
        values = np.array(self.values, dtype=np.int64, copy=True)
        if values.ndim != 2 or values.shape[1] != len(self.observed):
            raise ValueError(f"values must be (L, {len(self.observed)})")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.m is not None:
            object.__setattr__(self, "m", tuple(int(v) for v in self.m))

    @property
    def L(self) -> int:
        return self.values.shape[0]


@njit(cache=True)
def _advance(D, A, mvec, s, U, out):
    # One synchronous update per row of U: site i draws from the mixture
    # sum_j D[i, j] * A[j, i, s_j, :], consuming U[k, i]; all sites read
    # the pre-step statuses, then s is overwritten in place.
    steps, n = U.shape
    for k in range(steps):
        for i in range(n):
            u = U[k, i]
            mi = mvec[i]
            cum = 0.0
            pick = mi - 1
            for b in range(mi):
                p = 0.0
                for j in range(n):
                    w = D[i, j]
                    if w != 0.0:
                        p += w * A[j, i, s[j], b]
                cum += p
                if cum >= u:
                    pick = b
                    break
            out[k, i] = pick
        for i in range(n):
            s[i] = out[k, i]


def _pack_local(model: InfluenceModel) -> np.ndarray:
    n = model.n
    mmax = max(model.m)
    A = np.zeros((n, n, mmax, mmax))
    for i in range(n):
        for j in range(n):
            if model.D[i, j] != 0.0 and model.has_local_matrix(j, i):
                mat = model.local_matrix(j, i)
                A[j, i, : model.m[j], : model.m[i]] = mat
    return A


def _draw_initial(model: InfluenceModel, init, rng) -> np.ndarray:
    # Float arrays are distributions over joint states; anything else is
    # a joint state of 1-based statuses.
    if np.asarray(init).dtype.kind == "f":
        codec = StateCodec(model.m)
        dist = np.asarray(init, dtype=float)
        if dist.shape != (codec.n_states,):
            raise ValueError(
                f"init distribution has shape {dist.shape}, "
                f"expected ({codec.n_states},)"
            )
        if (dist < -1e-12).any() or abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError("init distribution must be nonnegative and sum to 1")
        cum = np.cumsum(np.clip(dist, 0.0, None))
        u = rng.random()
        start = int(min(np.searchsorted(cum, u, side="left"), codec.n_states - 1))
        state = codec.decode(start)
    else:
        state = check_state(model, init)
    return np.asarray(state, dtype=np.int64) - 1


def sample_trajectory(
    model: InfluenceModel,
    T: int,
    init,
    seed: int,
) -> Trajectory:
    """Sample T synchronous steps of the influence model.

    Arguments:
        model: the influence model to simulate.
        T: number of steps; the result holds T+1 joint states.
        init: either a joint state (1-based status tuple) or a float
            distribution over joint states (length prod(m)), from which
            the start state is drawn by inverse CDF.
        seed: seed for numpy's default PCG64 generator.

    Returns a Trajectory carrying the seed and the model fingerprint.
    """
    require_valid(model)
    if T < 0:
        raise ValueError("T must be nonnegative")
    rng = np.random.default_rng(seed)
    s = _draw_initial(model, init, rng)

    n = model.n
    D = np.ascontiguousarray(model.D)
    A = _pack_local(model)
    mvec = np.asarray(model.m, dtype=np.int64)

    states = np.empty((T + 1, n), dtype=np.int64)
    states[0] = s + 1
    done = 0
    while done < T:
        steps = min(_CHUNK, T - done)
        U = rng.random((steps, n))
        out = np.empty((steps, n), dtype=np.int64)
        _advance(D, A, mvec, s, U, out)
        states[done + 1 : done + 1 + steps] = out + 1
        done += steps
    return Trajectory(
        states=states, m=model.m, seed=seed, fingerprint=model_fingerprint(model)
    )


def project_observations(traj: Trajectory, observed: Sequence[int]) -> ObservationSequence:
    """Restrict a trajectory to the given sites (0-based indices)."""
    obs = check_observed(traj.m, observed)
    return ObservationSequence(
        observed=obs, values=traj.states[:, obs], m=traj.m
    )


def empirical_transition_counts(traj: Trajectory) -> np.ndarray:
    """(N, N) matrix of observed one-step joint-state transitions."""
    codec = StateCodec(traj.m)
    N = codec.n_states
    idx = codec.encode_rows(traj.states)
    flat = np.bincount(idx[:-1] * N + idx[1:], minlength=N * N)
    return flat.reshape(N, N)
