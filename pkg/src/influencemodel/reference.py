"""Bundled reference models and the reproduction check table.

Two models recur throughout the tests, demos, and the `reproduce` CLI
subcommand:

* the two-site reference model, a homogeneous model whose master matrix,
  stationary distribution, and observed-site conditionals are known in
  closed form (the conditionals are ratios of integers, frozen below to
  full double precision);
* the binary copy model, where every site copies a uniformly chosen
  site's current status; its master chain has the two consensus states
  absorbing, so it is not recurrent and counting estimates of rows
  leaving the consensus states can never be collected.

The two-site model demonstrates that observing one site of an influence
model does not yield a Markov chain: conditioning on one more past
observation moves the next-step probability by about 0.067.
"""

from __future__ import annotations

import copy
from typing import Sequence

import numpy as np

from .chain import (
    build_master_chain,
    communicating_classes,
    conditional_observed_probability,
    markovianity_gap,
    single_recurrent_class,
    stationary_distribution,
)
from .model import InfluenceModel


def two_site_reference_model() -> InfluenceModel:
    """Two sites, two statuses, shared local matrix; fully mixing."""
    D = np.array([[0.6, 0.4], [0.3, 0.7]])
    A = np.array([[0.9, 0.1], [0.2, 0.8]])
    return InfluenceModel.homogeneous(D, A)


def binary_copy_model(n: int) -> InfluenceModel:
    """n sites with two statuses; each site copies a random site.

    D is uniform (every site weighs every site 1/n, itself included) and
    the shared local matrix is the identity, so a site's next status is
    the current status of a uniformly drawn site.  Both consensus states
    are absorbing: once all sites agree, every copy reproduces the
    agreement.
    """
    if n < 1:
        raise ValueError("n must be positive")
    D = np.full((n, n), 1.0 / n)
    A = np.eye(2)
    return InfluenceModel.homogeneous(D, A)


# Master matrix of the two-site reference model.  Every entry is an exact
# product of two one-site mixtures and lands on four decimal digits.
REFERENCE_G = np.array(
    [
        [0.81, 0.09, 0.09, 0.01],
        [0.2542, 0.3658, 0.1558, 0.2242],
        [0.3312, 0.1488, 0.3588, 0.1612],
        [0.04, 0.16, 0.16, 0.64],
    ]
)

# Exact observed-site conditionals of the two-site reference model at
# stationarity, observing site 0.  Derived by exact rational arithmetic:
# P(next=1 | last=1)          = 30713/36770
# P(next=1 | last=1, prev=2)  = 387859/504750
# and the worst-case Markov violation over histories of length 2 is
# their difference.
CONDITIONAL_GIVEN_LAST = 30713 / 36770
CONDITIONAL_GIVEN_LAST_TWO = 387859 / 504750
MARKOV_GAP_HORIZON_2 = CONDITIONAL_GIVEN_LAST - CONDITIONAL_GIVEN_LAST_TWO

# Stationary distribution of the two-site reference model, exact:
# [5654/11031, 1700/11031, 1700/11031, 659/3677].
REFERENCE_PI = np.array([5654, 1700, 1700, 1977]) / 11031.0


DEFAULT_EXPECTED: dict = {
    "master_matrix": {
        "value": REFERENCE_G.tolist(),
        "tol": 1e-12,
    },
    "stationary": {
        "value": REFERENCE_PI.tolist(),
        "tol": 1e-10,
    },
    "conditional_given_last": {
        "value": CONDITIONAL_GIVEN_LAST,
        "tol": 1e-9,
    },
    "conditional_given_last_two": {
        "value": CONDITIONAL_GIVEN_LAST_TWO,
        "tol": 1e-9,
    },
    "markovianity_gap": {
        "value": MARKOV_GAP_HORIZON_2,
        "tol": 1e-9,
    },
    "two_site_single_recurrent_class": {
        "value": True,
    },
    "binary_copy_absorbing_consensus": {
        "value": {str(n): 2 for n in (2, 3, 4)},
    },
    "binary_copy_not_recurrent": {
        "value": {str(n): False for n in (2, 3, 4)},
    },
}


def _check(name: str, computed, spec: dict) -> dict:
    """Compare one computed result against its expected entry."""
    expected = spec["value"]
    tol = spec.get("tol")
    if tol is None:
        ok = computed == expected
        dev = None
    else:
        dev = float(
            np.max(np.abs(np.asarray(computed, dtype=float) - np.asarray(expected)))
        )
        ok = dev <= tol
    out = {
        "check": name,
        "computed": computed,
        "expected": expected,
        "pass": bool(ok),
    }
    if tol is not None:
        out["tol"] = tol
        out["max_abs_deviation"] = dev
    return out


def run_reference_checks(expected: dict | None = None) -> list[dict]:
    """Re-derive every bundled reference result and compare.

    expected overrides entries of DEFAULT_EXPECTED by name (unknown names
    are rejected).  Returns one dict per check with computed value,
    expected value, tolerance, and a pass flag.
    """
    table = copy.deepcopy(DEFAULT_EXPECTED)
    if expected:
        for name, spec in expected.items():
            if name not in table:
                raise ValueError(f"unknown reference check: {name}")
            table[name].update(spec)

    model = two_site_reference_model()
    chain = build_master_chain(model)
    pi = stationary_distribution(chain).pi
    c1 = conditional_observed_probability(chain, pi, (0,), [(1,)], (1,))
    c2 = conditional_observed_probability(chain, pi, (0,), [(2,), (1,)], (1,))
    gap = markovianity_gap(chain, pi, (0,), horizon=2)

    absorbing_counts = {}
    recurrences = {}
    for n in (2, 3, 4):
        cn = build_master_chain(binary_copy_model(n))
        dec = communicating_classes(cn)
        consensus = {0, cn.n_states - 1}
        absorbing_counts[str(n)] = (
            len(dec.absorbing) if set(dec.absorbing) == consensus else -1
        )
        recurrences[str(n)] = single_recurrent_class(cn)

    results = [
        _check("master_matrix", chain.G.tolist(), table["master_matrix"]),
        _check("stationary", pi.tolist(), table["stationary"]),
        _check("conditional_given_last", c1, table["conditional_given_last"]),
        _check(
            "conditional_given_last_two", c2, table["conditional_given_last_two"]
        ),
        _check("markovianity_gap", gap, table["markovianity_gap"]),
        _check(
            "two_site_single_recurrent_class",
            single_recurrent_class(chain),
            table["two_site_single_recurrent_class"],
        ),
        _check(
            "binary_copy_absorbing_consensus",
            absorbing_counts,
            table["binary_copy_absorbing_consensus"],
        ),
        _check(
            "binary_copy_not_recurrent",
            recurrences,
            table["binary_copy_not_recurrent"],
        ),
    ]
    return results
