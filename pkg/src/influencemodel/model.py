"""Core influence-model structure and the quasi-linear site dynamics.

An influence model couples n sites through a row-stochastic network matrix
D and a family of local transition matrices.  Site i holds one of m_i
statuses (labeled 1..m_i).  Entry D[i, j] is the weight with which site j's
current status influences site i's next status, and A[(j, i)] is the
m_j x m_i row-stochastic matrix mapping site j's status to a distribution
over site i's next status.  The one-step update for site i is the mixture

    P(next status of i | joint state s) = sum_j D[i, j] * A[(j, i)][s_j - 1, :]

which is linear in each row of D and in each local matrix.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

# Tolerance for row-stochasticity checks.  Rows that miss 1 by more than
# this are validation failures; nothing is ever silently renormalized.
ROW_SUM_TOL = 1e-9


class InvalidModelError(ValueError):
    """An operation received a model that fails validation.

    Carries the full ValidationReport so callers can inspect every
    violated invariant rather than just the first.
    """

    def __init__(self, report: "ValidationReport"):
        self.report = report
        lines = "; ".join(report.violations)
        super().__init__(f"invalid influence model: {lines}")


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_model: ok, or the list of violated invariants."""

    ok: bool
    violations: tuple[str, ...] = ()


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class InfluenceModel:
    """Network matrix, per-site status counts, and local transition matrices.

    Arguments:
        D: (n, n) network matrix; D[i, j] is the influence of site j on
            site i.  Rows must be nonnegative and sum to 1.
        m: per-site status counts, length n.
        A_shared: single (m, m) local matrix used for every ordered pair
            of sites (homogeneous shorthand; requires all m_i equal).
        A_pairs: mapping (j, i) -> (m_j, m_i) local matrix, site indices
            0-based.  A pair may be omitted only when D[i, j] == 0.

    Exactly one of A_shared / A_pairs must be given.  Arrays are copied
    and frozen; instances are immutable and safe to share across threads.
    """

    D: np.ndarray
    m: tuple[int, ...]
    A_shared: np.ndarray | None = None
    A_pairs: Mapping[tuple[int, int], np.ndarray] | None = None

    def __post_init__(self):
        object.__setattr__(self, "D", _readonly(np.atleast_2d(self.D)))
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        if (self.A_shared is None) == (self.A_pairs is None):
            raise ValueError("exactly one of A_shared / A_pairs must be given")
        if self.A_shared is not None:
            object.__setattr__(self, "A_shared", _readonly(self.A_shared))
        else:
            pairs = {
                (int(j), int(i)): _readonly(mat) for (j, i), mat in self.A_pairs.items()
            }
            object.__setattr__(self, "A_pairs", pairs)

    @property
    def n(self) -> int:
        return len(self.m)

    @classmethod
    def homogeneous(cls, D: np.ndarray, A: np.ndarray) -> "InfluenceModel":
        """Model where every ordered pair of sites shares the matrix A."""
        D = np.atleast_2d(np.asarray(D, dtype=float))
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = D.shape[0]
        return cls(D=D, m=(A.shape[0],) * n, A_shared=A)

    def has_local_matrix(self, j: int, i: int) -> bool:
        if self.A_shared is not None:
            return True
        return (j, i) in self.A_pairs

    def local_matrix(self, j: int, i: int) -> np.ndarray:
        """Local matrix for the ordered pair (j influences i), 0-based."""
        if self.A_shared is not None:
            return self.A_shared
        try:
            return self.A_pairs[(j, i)]
        except KeyError:
            raise ValueError(
                f"no local transition matrix for pair (site {j + 1} -> site {i + 1})"
            ) from None


def validate_model(model: InfluenceModel) -> ValidationReport:
    """Check every structural invariant of an influence model.

    Returns a report that is either ok or carries one message per violated
    invariant, with 1-based row/site indices and the deviation magnitude.
    Checks: D square of size n, entrywise >= 0, rows summing to 1 within
    ROW_SUM_TOL; each m_i >= 2 (>= 1 when n == 1); every local matrix of
    shape (m_j, m_i), entrywise >= 0, rows summing to 1 within ROW_SUM_TOL;
    and a local matrix present for every pair with D[i, j] > 0.
    """
    bad: list[str] = []
    n = model.n
    D = model.D

    if D.shape != (n, n):
        bad.append(f"D has shape {D.shape}, expected ({n}, {n})")
        return ValidationReport(ok=False, violations=tuple(bad))

    for i in range(n):
        for j in range(n):
            if D[i, j] < 0:
                bad.append(f"D entry ({i + 1},{j + 1}) is negative ({D[i, j]:.6g})")
        s = D[i].sum()
        if abs(s - 1.0) > ROW_SUM_TOL:
            bad.append(f"row {i + 1} of D sums to {s:.10g}")

    for i, mi in enumerate(model.m):
        floor = 1 if n == 1 else 2
        if mi < floor:
            bad.append(f"status count m_{i + 1} = {mi} is below {floor}")

    def check_local(mat: np.ndarray, name: str, mj: int, mi: int) -> None:
        if mat.shape != (mj, mi):
            bad.append(f"{name} has shape {mat.shape}, expected ({mj}, {mi})")
            return
        if (mat < 0).any():
            r, c = np.argwhere(mat < 0)[0]
            bad.append(f"{name} entry ({r + 1},{c + 1}) is negative ({mat[r, c]:.6g})")
        for r in range(mj):
            s = mat[r].sum()
            if abs(s - 1.0) > ROW_SUM_TOL:
                bad.append(f"row {r + 1} of {name} sums to {s:.10g}")

    if model.A_shared is not None:
        if len(set(model.m)) > 1:
            bad.append("shared local matrix requires all status counts equal")
        else:
            check_local(model.A_shared, "shared A", model.m[0], model.m[0])
    else:
        for (j, i), mat in sorted(model.A_pairs.items()):
            if not (0 <= j < n and 0 <= i < n):
                bad.append(f"local matrix pair ({j}, {i}) is out of range")
                continue
            check_local(mat, f"A[{j + 1}->{i + 1}]", model.m[j], model.m[i])
        for i in range(n):
            for j in range(n):
                if D[i, j] > 0 and (j, i) not in model.A_pairs:
                    bad.append(
                        f"missing local matrix for pair (site {j + 1} -> site {i + 1})"
                        f" with D({i + 1},{j + 1}) > 0"
                    )

    return ValidationReport(ok=not bad, violations=tuple(bad))


def require_valid(model: InfluenceModel) -> None:
    """Raise InvalidModelError unless the model passes validation."""
    report = validate_model(model)
    if not report.ok:
        raise InvalidModelError(report)


def check_state(model: InfluenceModel, state: Sequence[int]) -> tuple[int, ...]:
    """Validate a joint state (1-based statuses) and return it as a tuple."""
    state = tuple(int(v) for v in state)
    if len(state) != model.n:
        raise ValueError(f"state has {len(state)} sites, model has {model.n}")
    for i, (v, mi) in enumerate(zip(state, model.m)):
        if not 1 <= v <= mi:
            raise ValueError(f"status {v} of site {i + 1} is outside 1..{mi}")
    return state


def next_status_distribution(
    model: InfluenceModel, state: Sequence[int], site: int
) -> np.ndarray:
    """Distribution of one site's next status given the joint state.

    Computes sum_j D[site, j] * A[(j, site)][s_j - 1, :], the quasi-linear
    mixture of the influencing sites' local rows.  `state` uses 1-based
    statuses; `site` is 0-based.
    """
    require_valid(model)
    state = check_state(model, state)
    if not 0 <= site < model.n:
        raise IndexError(f"site index {site} out of range for {model.n} sites")
    dist = np.zeros(model.m[site])
    for j in range(model.n):
        w = model.D[site, j]
        if w == 0.0:
            continue
        dist += w * model.local_matrix(j, site)[state[j] - 1]
    return dist


@dataclass(frozen=True)
class StateCodec:
    """Bijection between joint states and flat indices 0..N-1.

    The ordering is lexicographic with site 1 most significant: for
    m = (2, 2) the joint states map (1,1) -> 0, (1,2) -> 1, (2,1) -> 2,
    (2,2) -> 3.  Statuses are 1-based; indices are 0-based.
    """

    m: tuple[int, ...]
    strides: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        strides = []
        acc = 1
        for mi in reversed(self.m):
            strides.append(acc)
            acc *= mi
        object.__setattr__(self, "strides", tuple(reversed(strides)))

    @property
    def n_states(self) -> int:
        return int(np.prod(self.m, dtype=np.int64)) if self.m else 1

    def encode(self, state: Sequence[int]) -> int:
        idx = 0
        for v, mi, st in zip(state, self.m, self.strides):
            if not 1 <= v <= mi:
                raise ValueError(f"status {v} outside 1..{mi}")
            idx += (int(v) - 1) * st
        if len(state) != len(self.m):
            raise ValueError(f"state has {len(state)} sites, expected {len(self.m)}")
        return idx

    def decode(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.n_states:
            raise ValueError(f"index {index} outside 0..{self.n_states - 1}")
        out = []
        for mi, st in zip(self.m, self.strides):
            out.append(index // st % mi + 1)
        return tuple(out)

    def encode_rows(self, states: np.ndarray) -> np.ndarray:
        """Encode an (L, n) array of 1-based statuses to flat indices."""
        states = np.asarray(states, dtype=np.int64)
        if states.ndim != 2 or states.shape[1] != len(self.m):
            raise ValueError(f"expected (L, {len(self.m)}) status array")
        lo = (states < 1).any()
        hi = (states > np.asarray(self.m, dtype=np.int64)).any()
        if lo or hi:
            raise ValueError("status outside the valid range for some site")
        return (states - 1) @ np.asarray(self.strides, dtype=np.int64)

    def status_grid(self) -> np.ndarray:
        """(N, n) array of 1-based statuses, row k decoding index k."""
        n = len(self.m)
        grid = np.empty((self.n_states, n), dtype=np.int64)
        for i, (mi, st) in enumerate(zip(self.m, self.strides)):
            grid[:, i] = np.arange(self.n_states) // st % mi + 1
        return grid


def joint_index(state: Sequence[int], m: Sequence[int]) -> int:
    """Flat index of a joint state under the site-1-most-significant codec."""
    return StateCodec(tuple(m)).encode(state)


def joint_state(index: int, m: Sequence[int]) -> tuple[int, ...]:
    """Joint state decoding a flat index; inverse of joint_index."""
    return StateCodec(tuple(m)).decode(index)


def model_fingerprint(model: InfluenceModel) -> str:
    """Short stable hash of the model content, for provenance fields."""
    doc: dict = {"m": list(model.m), "D": model.D.tolist()}
    if model.A_shared is not None:
        doc["A_shared"] = model.A_shared.tolist()
    else:
        doc["A_pairs"] = [
            [j, i, mat.tolist()] for (j, i), mat in sorted(model.A_pairs.items())
        ]
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ModelStructure:
    """Shape of a model to be estimated: status counts and A sharing.

    shared_A selects the homogeneous parameterization (one local matrix
    for every pair); otherwise every ordered pair gets its own matrix.
    """

    m: tuple[int, ...]
    shared_A: bool = True

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        if self.shared_A and len(set(self.m)) > 1:
            raise ValueError("shared_A requires all status counts equal")

    @property
    def n(self) -> int:
        return len(self.m)
