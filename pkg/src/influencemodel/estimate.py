"""Estimation and identification for influence models.

Four estimators with different data requirements:

* estimate_G_counting: fully observed trajectory -> master matrix by
  transition counting.  Consistent only where the chain actually visits;
  the recurrence flag records whether asymptotic coverage is justified.
* recover_influence_params: master matrix -> (D, A) by multi-start
  projected-gradient least squares on the quasi-linear parameterization.
* direct_em_full_obs: fully observed trajectory -> (D, A) directly by EM
  over the latent influencing-neighbor choice, skipping the master matrix.
* baum_welch_poim: partially observed trajectory -> master matrix and
  initial distribution by EM over the hidden joint chain, with the
  emission map fixed to the deterministic site projection.

permutation_match quantifies how close an estimated master matrix is to
a reference one up to relabeling of the hidden states that is invisible
to the observer (permutations within projection fibers).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .chain import MasterChain, projection_index, single_recurrent_class
from .model import InfluenceModel, ModelStructure, StateCodec
from .simulate import ObservationSequence, Trajectory, empirical_transition_counts

MAX_PERMUTATIONS = math.factorial(10)


@dataclass(frozen=True)
class FitConfig:
    """Settings for the projected-gradient recovery.

    tol is the relative-improvement stopping threshold; restarts are
    independent Dirichlet(1) initializations and the best final objective
    wins, ties broken by restart index.
    """

    restarts: int = 16
    max_iters: int = 2000
    tol: float = 1e-14
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")


@dataclass(frozen=True)
class EMConfig:
    """Settings for the EM estimators.

    Iteration stops when the relative log-likelihood improvement drops
    below tol or after max_iters.  smoothing is added to every M-step
    numerator before normalization (a Dirichlet MAP touch) so no
    parameter ever reaches exactly zero; rows with no evidence fall back
    to uniform.
    """

    restarts: int = 10
    max_iters: int = 500
    tol: float = 1e-9
    seed: int = 0
    smoothing: float = 1e-8

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError("smoothing must be in [0, 1)")


# ---------------------------------------------------------------------------
# Counting estimation of the master matrix.


@dataclass(frozen=True)
class FullObsEstimate:
    """Counting estimate of the master matrix.

    Rows of G_hat are NaN for source states with no observed departure;
    visited flags the rows that were estimated.  recurrence_ok reports
    whether counting is asymptotically consistent for the whole matrix:
    judged on the true chain when one is supplied (single recurrent class
    covering every state), otherwise on the strong connectivity of the
    empirical support, which a finite sample can only suggest; the basis
    field says which was used.
    """

    G_hat: np.ndarray
    counts: np.ndarray
    visited: np.ndarray
    recurrence_ok: bool
    recurrence_basis: str

    def __post_init__(self):
        for name in ("G_hat", "counts", "visited"):
            arr = np.array(getattr(self, name), copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def estimate_G_counting(
    traj: Trajectory, true_chain: MasterChain | None = None
) -> FullObsEstimate:
    """Maximum-likelihood master matrix from a fully observed trajectory.

    Row s of G_hat is the empirical distribution of successors of joint
    state s.  Unvisited rows stay NaN rather than being invented.
    """
    counts = empirical_transition_counts(traj)
    row = counts.sum(axis=1)
    visited = row > 0
    N = counts.shape[0]
    G_hat = np.full((N, N), np.nan)
    G_hat[visited] = counts[visited] / row[visited, None]

    if true_chain is not None:
        if tuple(true_chain.m) != tuple(traj.m):
            raise ValueError("true_chain status counts differ from trajectory")
        ok = single_recurrent_class(true_chain)
        basis = "true-chain"
    else:
        from scipy import sparse
        from scipy.sparse import csgraph

        sub = counts[np.ix_(visited, visited)] > 0
        if sub.shape[0] == 0:
            ok = False
        else:
            n_comp, _ = csgraph.connected_components(
                sparse.csr_matrix(sub), directed=True, connection="strong"
            )
            ok = n_comp == 1
        basis = "count-support"
    return FullObsEstimate(
        G_hat=G_hat,
        counts=counts,
        visited=visited,
        recurrence_ok=bool(ok),
        recurrence_basis=basis,
    )


# ---------------------------------------------------------------------------
# Recovery of (D, A) from a master matrix.


@dataclass(frozen=True)
class InfluenceParamEstimate:
    """Fitted influence-model parameters plus optimizer diagnostics.

    objective is the squared Frobenius residual for the least-squares
    recovery and the negative log-likelihood for EM.  restart_objectives
    lists every restart's final objective; optimum_dispersion is the
    largest max-norm parameter distance between the best restart and any
    restart whose objective ties it (within 1e-8).  A large dispersion at
    a tied optimum means the data does not identify the parameters.
    """

    model: InfluenceModel
    objective: float
    iterations: int
    converged: bool
    restart_objectives: tuple[float, ...]
    optimum_dispersion: float
    log_likelihood_trace: tuple[float, ...] | None = None

    @property
    def D_hat(self) -> np.ndarray:
        return self.model.D

    @property
    def A_hat(self):
        if self.model.A_shared is not None:
            return self.model.A_shared
        return dict(self.model.A_pairs)


def _project_simplex_rows(X: np.ndarray) -> np.ndarray:
    # Euclidean projection of each row onto the probability simplex,
    # by the sort-and-threshold rule.
    V = -np.sort(-X, axis=1)
    css = (np.cumsum(V, axis=1) - 1.0) / np.arange(1, X.shape[1] + 1)
    rho = np.count_nonzero(V > css, axis=1)
    theta = css[np.arange(X.shape[0]), rho - 1]
    return np.maximum(X - theta[:, None], 0.0)


def _as_target_matrix(G_hat) -> np.ndarray:
    if isinstance(G_hat, MasterChain):
        return np.asarray(G_hat.G, dtype=float)
    if isinstance(G_hat, FullObsEstimate):
        return np.asarray(G_hat.G_hat, dtype=float)
    return np.asarray(G_hat, dtype=float)


class _RecoverProblem:
    """Least-squares fit of (D, A) to a target master matrix.

    Parameters travel as a flat vector: the rows of D, then the rows of
    the shared A, or of every A[(j, i)] in sorted pair order.  NaN rows
    of the target (unvisited states) are excluded from the residual.
    """

    def __init__(self, target: np.ndarray, structure: ModelStructure):
        self.structure = structure
        m = structure.m
        n = structure.n
        codec = StateCodec(m)
        N = codec.n_states
        if target.shape != (N, N):
            raise ValueError(f"target has shape {target.shape}, expected ({N}, {N})")
        rows_ok = np.isfinite(target).all(axis=1)
        if not rows_ok.any():
            raise ValueError("target matrix has no finite rows to fit")
        self.target = target[rows_ok]
        grid = codec.status_grid() - 1
        self.src = grid[rows_ok]
        self.col = grid
        self.n = n
        self.m = m
        self.V = self.src.shape[0]
        self.N = N
        # One-hot encodings of the column statuses (for gradient pooling)
        # and of the source statuses (for local-matrix gradients).
        self.col_onehot = [
            np.equal(self.col[:, i][:, None], np.arange(m[i])[None, :]).astype(float)
            for i in range(n)
        ]
        self.src_onehot = [
            np.equal(self.src[:, j][:, None], np.arange(m[j])[None, :]).astype(float)
            for j in range(n)
        ]
        if structure.shared_A:
            self.pairs = None
            self.sizes = [(n, n), (m[0], m[0])]
        else:
            self.pairs = [(j, i) for j in range(n) for i in range(n)]
            self.sizes = [(n, n)] + [(m[j], m[i]) for (j, i) in self.pairs]
        self.dim = sum(r * c for r, c in self.sizes)

    def unpack(self, x: np.ndarray) -> list[np.ndarray]:
        mats = []
        k = 0
        for r, c in self.sizes:
            mats.append(x[k : k + r * c].reshape(r, c))
            k += r * c
        return mats

    def pack(self, mats: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.ravel(mat) for mat in mats])

    def local(self, mats: list[np.ndarray], j: int, i: int) -> np.ndarray:
        if self.pairs is None:
            return mats[1]
        return mats[1 + self.pairs.index((j, i))]

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.pack([_project_simplex_rows(mat) for mat in self.unpack(x)])

    def random_start(self, rng: np.random.Generator) -> np.ndarray:
        mats = [rng.dirichlet(np.ones(c), size=r) for r, c in self.sizes]
        return self.pack(mats)

    def model(self, x: np.ndarray) -> InfluenceModel:
        mats = self.unpack(x)
        if self.pairs is None:
            return InfluenceModel(D=mats[0], m=self.m, A_shared=mats[1])
        A_pairs = {p: mats[1 + k] for k, p in enumerate(self.pairs)}
        return InfluenceModel(D=mats[0], m=self.m, A_pairs=A_pairs)

    def _site_factors(self, mats: list[np.ndarray]):
        D = mats[0]
        P = []
        for i in range(self.n):
            rows = np.zeros((self.V, self.m[i]))
            for j in range(self.n):
                rows += D[i, j] * self.local(mats, j, i)[self.src[:, j]]
            P.append(rows)
        F = [P[i][:, self.col[:, i]] for i in range(self.n)]
        return P, F

    def value(self, x: np.ndarray) -> float:
        _, F = self._site_factors(self.unpack(x))
        Gm = F[0].copy()
        for i in range(1, self.n):
            Gm *= F[i]
        R = Gm - self.target
        return float((R * R).sum())

    def value_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        mats = self.unpack(x)
        D = mats[0]
        P, F = self._site_factors(mats)

        lefts = [np.ones((self.V, self.N))]
        for i in range(self.n - 1):
            lefts.append(lefts[-1] * F[i])
        Gm = lefts[-1] * F[self.n - 1]
        R = Gm - self.target
        f = float((R * R).sum())

        grad_D = np.zeros((self.n, self.n))
        if self.pairs is None:
            grad_A = [np.zeros_like(mats[1])]
        else:
            grad_A = [np.zeros_like(mat) for mat in mats[1:]]

        right = np.ones((self.V, self.N))
        for i in range(self.n - 1, -1, -1):
            W = 2.0 * R * (lefts[i] * right)
            gP = W @ self.col_onehot[i]
            for j in range(self.n):
                Aji = self.local(mats, j, i)[self.src[:, j]]
                grad_D[i, j] = float((gP * Aji).sum())
                gA = D[i, j] * (self.src_onehot[j].T @ gP)
                if self.pairs is None:
                    grad_A[0] += gA
                else:
                    grad_A[self.pairs.index((j, i))] += gA
            right *= F[i]
        return f, self.pack([grad_D] + grad_A)


def _projected_gradient(
    problem: _RecoverProblem, x0: np.ndarray, config: FitConfig
) -> tuple[np.ndarray, float, int, bool]:
    x = problem.project(x0)
    f, g = problem.value_grad(x)
    t = 1.0
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        # Backtracking from the Barzilai-Borwein step until sufficient
        # decrease; a step that cannot decrease means stationarity.
        accepted = False
        for _ in range(40):
            xn = problem.project(x - t * g)
            d = x - xn
            dn2 = float((d * d).sum())
            if dn2 == 0.0:
                break
            fn = problem.value(xn)
            if fn <= f - 1e-4 / max(t, 1e-300) * dn2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = True
            break
        fn_, gn = problem.value_grad(xn)
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        if sy > 0:
            t = min(max(float(s @ s) / sy, 1e-12), 1e8)
        else:
            t = min(t * 2.0, 1e8)
        drop = f - fn_
        x, f, g = xn, fn_, gn
        if f <= 1e-30 or drop <= config.tol * max(f, 1e-300):
            converged = True
            break
        if float(np.max(np.abs(s))) <= 1e-15:
            converged = True
            break
    return x, f, it, converged


def recover_influence_params(
    G_hat,
    structure: ModelStructure,
    config: FitConfig = FitConfig(),
) -> InfluenceParamEstimate:
    """Fit (D, A) to a master matrix by projected-gradient least squares.

    Minimizes the squared Frobenius distance between the quasi-linear
    master matrix of the parameters and the target, over row-stochastic
    D and local matrices.  G_hat may be a MasterChain, a FullObsEstimate
    (NaN rows are excluded from the fit), or a plain matrix.  Runs
    config.restarts independent Dirichlet starts; a spread of parameter
    values among restarts that tie the best objective (the
    optimum_dispersion field) flags an unidentifiable fit.
    """
    target = _as_target_matrix(G_hat)
    problem = _RecoverProblem(target, structure)
    rng = np.random.default_rng(config.seed)

    results = []
    for _ in range(config.restarts):
        x0 = problem.random_start(rng)
        results.append(_projected_gradient(problem, x0, config))

    objectives = tuple(float(r[1]) for r in results)
    best = int(np.argmin(objectives))
    x_best, f_best, iters, converged = results[best]

    near = [
        r[0] for r in results if r[1] <= f_best + 1e-8
    ]
    dispersion = 0.0
    for xr in near:
        dispersion = max(dispersion, float(np.max(np.abs(xr - x_best))))

    return InfluenceParamEstimate(
        model=problem.model(x_best),
        objective=float(f_best),
        iterations=iters,
        converged=converged,
        restart_objectives=objectives,
        optimum_dispersion=dispersion,
    )


# ---------------------------------------------------------------------------
# Direct EM on a fully observed trajectory.


def _normalize_rows(num: np.ndarray, eps: float) -> np.ndarray:
    # Row-normalize M-step numerators with additive smoothing.  Adding
    # eps before normalizing is the M-step of a Dirichlet(1 + eps) MAP
    # fit, so iteration stays (regularized-) monotone while no parameter
    # ever reaches exactly zero.  Rows with no evidence become uniform.
    out = np.array(num, dtype=float) + eps
    rs = out.sum(axis=1)
    empty = rs <= 0
    if empty.any():
        out[empty] = 1.0
        rs = out.sum(axis=1)
    return out / rs[:, None]


def direct_em_full_obs(
    traj: Trajectory,
    structure: ModelStructure,
    config: EMConfig = EMConfig(),
) -> InfluenceParamEstimate:
    """Fit (D, A) to a fully observed trajectory by EM.

    The latent variable is which neighbor j supplied site i's transition
    at each step; responsibilities are proportional to
    D[i, j] * A[(j, i)][s_j, next_i].  Transitions are pooled into
    per-site sufficient statistics (source joint state, next status)
    before iterating, so the per-iteration cost is independent of the
    trajectory length.  The objective reported is the negative final
    log-likelihood of the transitions given the start state; the trace
    of the best restart is attached and is nondecreasing (EM ascent, up
    to the smoothing perturbation and rounding).
    """
    if tuple(structure.m) != tuple(traj.m):
        raise ValueError("structure status counts differ from trajectory")
    n = structure.n
    m = structure.m
    codec = StateCodec(m)
    N = codec.n_states
    if traj.T < 1:
        raise ValueError("trajectory has no transitions")

    idx_src = codec.encode_rows(traj.states[:-1])
    C = []
    for i in range(n):
        nxt = traj.states[1:, i] - 1
        C.append(
            np.bincount(idx_src * m[i] + nxt, minlength=N * m[i])
            .reshape(N, m[i])
            .astype(float)
        )
    visited = C[0].sum(axis=1) > 0
    C = [Ci[visited] for Ci in C]
    grid = codec.status_grid() - 1
    S = grid[visited]
    V = S.shape[0]
    src_onehot = [
        np.equal(S[:, j][:, None], np.arange(m[j])[None, :]).astype(float)
        for j in range(n)
    ]
    pairs = None if structure.shared_A else [(j, i) for j in range(n) for i in range(n)]

    def em_run(seed_rng: np.random.Generator):
        D = seed_rng.dirichlet(np.ones(n), size=n)
        if pairs is None:
            A = [seed_rng.dirichlet(np.ones(m[0]), size=m[0])]
        else:
            A = [seed_rng.dirichlet(np.ones(mi), size=mj) for (mj, mi) in
                 ((m[j], m[i]) for (j, i) in pairs)]

        def local(j, i):
            return A[0] if pairs is None else A[pairs.index((j, i))]

        trace = []
        converged = False
        for _ in range(config.max_iters):
            ll = 0.0
            D_num = np.zeros((n, n))
            A_num = [np.zeros_like(mat) for mat in A]
            for i in range(n):
                W = np.empty((V, m[i], n))
                for j in range(n):
                    W[:, :, j] = D[i, j] * local(j, i)[S[:, j]]
                mix = W.sum(axis=2)
                obs = C[i] > 0
                if (mix[obs] <= 0.0).any():
                    raise RuntimeError(
                        "zero-probability transition under current parameters"
                    )
                ll += float((C[i][obs] * np.log(mix[obs])).sum())
                WC = C[i][:, :, None] * np.divide(
                    W, mix[:, :, None], out=np.zeros_like(W), where=mix[:, :, None] > 0
                )
                D_num[i] = WC.sum(axis=(0, 1))
                for j in range(n):
                    gA = src_onehot[j].T @ WC[:, :, j]
                    if pairs is None:
                        A_num[0] += gA
                    else:
                        A_num[pairs.index((j, i))] += gA
            trace.append(ll)
            if len(trace) > 1 and trace[-1] - trace[-2] <= config.tol * (
                1.0 + abs(trace[-1])
            ):
                converged = True
                break
            D = _normalize_rows(D_num, config.smoothing)
            A = [
                _normalize_rows(num, config.smoothing) for num in A_num
            ]
        return D, A, trace, converged

    rng = np.random.default_rng(config.seed)
    runs = [em_run(rng) for _ in range(config.restarts)]
    finals = [r[2][-1] for r in runs]
    best = int(np.argmax(finals))
    D, A, trace, converged = runs[best]

    if pairs is None:
        fitted = InfluenceModel(D=D, m=m, A_shared=A[0])
    else:
        fitted = InfluenceModel(D=D, m=m, A_pairs=dict(zip(pairs, A)))

    def flat(run):
        return np.concatenate([np.ravel(run[0])] + [np.ravel(mat) for mat in run[1]])

    best_ll = finals[best]
    dispersion = 0.0
    for r, fl in zip(runs, finals):
        if fl >= best_ll - 1e-8:
            dispersion = max(dispersion, float(np.max(np.abs(flat(r) - flat(runs[best])))))

    return InfluenceParamEstimate(
        model=fitted,
        objective=float(-best_ll),
        iterations=len(trace),
        converged=converged,
        restart_objectives=tuple(float(-v) for v in finals),
        optimum_dispersion=dispersion,
        log_likelihood_trace=tuple(float(v) for v in trace),
    )


# ---------------------------------------------------------------------------
# Partially observed estimation: forward likelihood and Baum-Welch.


def forward_log_likelihood(
    obs: ObservationSequence,
    G: np.ndarray | MasterChain,
    init: np.ndarray,
    m: Sequence[int] | None = None,
) -> float:
    """Log-likelihood of an observation sequence under a joint chain.

    `G` may be a MasterChain (which carries the status counts) or a bare
    transition matrix, in which case `m` must come from the argument or
    from the observation sequence itself.

    Pure log-domain forward recursion (logsumexp) over the hidden joint
    states, with emissions fixed to the deterministic projection onto the
    observed sites.  Returns -inf for an impossible sequence.  This is
    deliberately a different algorithm from the scaled linear forward in
    the chain analysis; the two serve as mutual cross-checks.
    """
    if isinstance(G, MasterChain):
        if m is not None and tuple(m) != G.m:
            raise ValueError("m disagrees with the chain's status counts")
        m = G.m
        G = G.G
    m = tuple(m) if m is not None else obs.m
    if m is None:
        raise ValueError("status counts m are needed (not carried by obs)")
    codec = StateCodec(m)
    N = codec.n_states
    G = np.asarray(G, dtype=float)
    init = np.asarray(init, dtype=float)
    if G.shape != (N, N) or init.shape != (N,):
        raise ValueError("G/init shapes do not match the status counts")
    proj = projection_index(m, obs.observed)
    sub = StateCodec(tuple(m[i] for i in obs.observed))
    sym = sub.encode_rows(obs.values)
    if len(sym) == 0:
        return 0.0

    with np.errstate(divide="ignore"):
        logG = np.log(G)
        la = np.where(proj == sym[0], np.log(init), -np.inf)
    if np.all(np.isinf(la)):
        return -float("inf")
    for t in range(1, len(sym)):
        la = logsumexp(la[:, None] + logG, axis=0)
        la[proj != sym[t]] = -np.inf
        if np.all(np.isinf(la)):
            return -float("inf")
    return float(logsumexp(la))


@dataclass(frozen=True)
class HMMEstimate:
    """Baum-Welch estimate of the joint chain from partial observations.

    G_hat and init_hat are the best restart's parameters; the trace is
    that restart's per-iteration log-likelihood.  restart_final_lls and
    restart_iterations record every restart (best = argmax, ties to the
    lower index).  Hidden states are identified only up to permutations
    that fix the observed projection; compare via permutation_match.
    """

    G_hat: np.ndarray
    init_hat: np.ndarray
    m: tuple[int, ...]
    observed: tuple[int, ...]
    log_likelihood_trace: tuple[float, ...]
    restart_final_lls: tuple[float, ...]
    restart_iterations: tuple[int, ...]
    best_restart: int
    converged: bool

    def __post_init__(self):
        for name in ("G_hat", "init_hat"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@njit(cache=True)
def _bw_estep(G, init, fiber, fiber_len, sym):
    # Scaled forward-backward with deterministic projection emissions.
    # fiber[k, :fiber_len[k]] lists the hidden states emitting symbol k;
    # alpha/beta are supported on the current symbol's fiber only, so
    # every loop runs over fibers instead of the full state space.
    # Returns the expected transition counts, the time-0 posterior, and
    # the log-likelihood; ll = -inf signals an impossible sequence.
    L = sym.shape[0]
    N = G.shape[0]
    alpha = np.zeros((L, N))
    c = np.zeros(L)
    f0 = sym[0]
    for a in range(fiber_len[f0]):
        s = fiber[f0, a]
        alpha[0, s] = init[s]
    c[0] = alpha[0].sum()
    if c[0] <= 0.0:
        return np.zeros((N, N)), np.zeros(N), -np.inf
    alpha[0] /= c[0]
    for t in range(1, L):
        fprev = sym[t - 1]
        fcur = sym[t]
        tot = 0.0
        for b in range(fiber_len[fcur]):
            s2 = fiber[fcur, b]
            acc = 0.0
            for a in range(fiber_len[fprev]):
                s = fiber[fprev, a]
                acc += alpha[t - 1, s] * G[s, s2]
            alpha[t, s2] = acc
            tot += acc
        if tot <= 0.0:
            return np.zeros((N, N)), np.zeros(N), -np.inf
        c[t] = tot
        for b in range(fiber_len[fcur]):
            s2 = fiber[fcur, b]
            alpha[t, s2] /= tot

    xi = np.zeros((N, N))
    beta = np.ones(N)
    nb = np.zeros(N)
    for t in range(L - 2, -1, -1):
        fcur = sym[t]
        fnext = sym[t + 1]
        for a in range(fiber_len[fcur]):
            s = fiber[fcur, a]
            acc = 0.0
            als = alpha[t, s]
            for b in range(fiber_len[fnext]):
                s2 = fiber[fnext, b]
                w = G[s, s2] * beta[s2]
                xi[s, s2] += als * w / c[t + 1]
                acc += w
            nb[s] = acc / c[t + 1]
        for a in range(fiber_len[fcur]):
            s = fiber[fcur, a]
            beta[s] = nb[s]

    gamma0 = alpha[0] * beta
    tot = gamma0.sum()
    if tot > 0.0:
        gamma0 /= tot
    # Compensated sum: the monotonicity of the trace is checked at 1e-10
    # and a naive sum of 10^5 logs carries more rounding than that.
    ll = 0.0
    comp = 0.0
    for t in range(L):
        term = np.log(c[t]) - comp
        tmp = ll + term
        comp = (tmp - ll) - term
        ll = tmp
    return xi, gamma0, ll


def baum_welch_poim(
    obs: ObservationSequence,
    structure: ModelStructure,
    config: EMConfig = EMConfig(),
) -> HMMEstimate:
    """Estimate the joint chain from partial observations by Baum-Welch.

    The hidden chain lives on the full joint state space of `structure`;
    the emission map is fixed to the deterministic projection onto
    obs.observed and is never re-estimated.  Only G and the initial
    distribution are updated.  Runs config.restarts Dirichlet-random
    restarts and keeps the best final log-likelihood.
    """
    m = tuple(structure.m)
    codec = StateCodec(m)
    N = codec.n_states
    proj = projection_index(m, obs.observed).astype(np.int64)
    sub = StateCodec(tuple(m[i] for i in obs.observed))
    sym = sub.encode_rows(obs.values).astype(np.int64)
    if len(sym) < 2:
        raise ValueError("observation sequence needs at least 2 steps")
    K = sub.n_states
    fiber_len = np.bincount(proj, minlength=K).astype(np.int64)
    fiber = np.zeros((K, int(fiber_len.max())), dtype=np.int64)
    for k in range(K):
        fiber[k, : fiber_len[k]] = np.flatnonzero(proj == k)

    rng = np.random.default_rng(config.seed)
    traces: list[list[float]] = []
    params: list[tuple[np.ndarray, np.ndarray]] = []
    iters: list[int] = []
    conv: list[bool] = []

    for _ in range(config.restarts):
        G = rng.dirichlet(np.ones(N), size=N)
        init = rng.dirichlet(np.ones(N))
        trace: list[float] = []
        converged = False
        for _ in range(config.max_iters):
            xi, gamma0, ll = _bw_estep(G, init, fiber, fiber_len, sym)
            if ll == -np.inf:
                raise RuntimeError("observation sequence impossible under iterate")
            trace.append(float(ll))
            if len(trace) > 1 and trace[-1] - trace[-2] <= config.tol * (
                1.0 + abs(trace[-1])
            ):
                converged = True
                break
            G = _normalize_rows(xi, config.smoothing)
            init = _normalize_rows(gamma0[None, :], config.smoothing)[0]
        traces.append(trace)
        params.append((G, init))
        iters.append(len(trace))
        conv.append(converged)

    finals = [t[-1] for t in traces]
    best = int(np.argmax(finals))
    G_best, init_best = params[best]
    return HMMEstimate(
        G_hat=G_best,
        init_hat=init_best,
        m=m,
        observed=tuple(obs.observed),
        log_likelihood_trace=tuple(traces[best]),
        restart_final_lls=tuple(float(v) for v in finals),
        restart_iterations=tuple(iters),
        best_restart=best,
        converged=conv[best],
    )


# ---------------------------------------------------------------------------
# Permutation matching of hidden states.


@dataclass(frozen=True)
class PermutationMatchReport:
    """Best relabeling of estimated hidden states against a reference.

    permutation maps each reference state index to the estimated state
    placed there: relabeled[a, b] = G_est[perm[a], perm[b]].  Only
    permutations fixing the observed projection are admissible (hidden
    relabelings invisible to the observer).  residual is the relabeled
    difference matrix for the best permutation.
    """

    permutation: tuple[int, ...]
    max_abs_error: float
    residual: np.ndarray

    def __post_init__(self):
        arr = np.array(self.residual, dtype=float, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "residual", arr)


def permutation_match(
    G_est: np.ndarray,
    G_ref: np.ndarray,
    m: Sequence[int],
    observed: Sequence[int],
) -> PermutationMatchReport:
    """Search relabelings of hidden states for the closest match.

    Tries every permutation of states that preserves the projection onto
    the observed sites (the product of per-fiber permutations) and
    returns the one minimizing the max-abs difference to G_ref.  Refuses
    searches larger than 10! candidates.
    """
    m = tuple(m)
    G_est = np.asarray(G_est, dtype=float)
    G_ref = np.asarray(G_ref, dtype=float)
    N = StateCodec(m).n_states
    if G_est.shape != (N, N) or G_ref.shape != (N, N):
        raise ValueError("matrix shapes do not match the status counts")
    proj = projection_index(m, observed)
    fibers = [np.flatnonzero(proj == a) for a in range(int(proj.max()) + 1)]

    total = 1
    for f in fibers:
        total *= math.factorial(len(f))
        if total > MAX_PERMUTATIONS:
            raise ValueError(
                f"permutation search space exceeds {MAX_PERMUTATIONS}"
            )

    best_perm = None
    best_err = np.inf
    best_res = None
    for combo in itertools.product(*(itertools.permutations(f) for f in fibers)):
        perm = np.empty(N, dtype=np.int64)
        for fiber, assigned in zip(fibers, combo):
            perm[fiber] = assigned
        res = G_est[np.ix_(perm, perm)] - G_ref
        err = float(np.max(np.abs(res)))
        if err < best_err:
            best_err = err
            best_perm = tuple(int(v) for v in perm)
            best_res = res
    return PermutationMatchReport(
        permutation=best_perm, max_abs_error=best_err, residual=best_res
    )
