"""Watching one site of a network: the observed process is not Markov.

The joint status vector of an influence model is a Markov chain.  A
single site's status, viewed on its own, is generally not: the hidden
neighbor carries information about the past that changes the prediction
for the next observation.  This script quantifies that memory on the
bundled two-site model.
"""

import numpy as np

import influencemodel as im
from influencemodel.reference import two_site_reference_model

np.set_printoptions(precision=6, suppress=True)

model = two_site_reference_model()
chain = im.build_master_chain(model)
pi = im.stationary_distribution(chain).pi
site = (0,)  # watch the first site only

# One-step prediction conditioned on progressively longer histories.
c1 = im.conditional_observed_probability(chain, pi, site, [(1,)], (1,))
c2 = im.conditional_observed_probability(chain, pi, site, [(2,), (1,)], (1,))
c3 = im.conditional_observed_probability(chain, pi, site, [(1,), (1,)], (1,))
print("start the joint chain in its stationary distribution and watch site 1:")
print(f"  P(next = 1 | last = 1)               = {c1:.6f}  (= 30713/36770)")
print(f"  P(next = 1 | last two = 2, 1)        = {c2:.6f}  (= 387859/504750)")
print(f"  P(next = 1 | last two = 1, 1)        = {c3:.6f}")
print()
print("If the observed site were Markov, all three would be equal; the")
print(f"second observation back shifts the prediction by {c1 - c2:.6f}.")
print()

# The memory gap is the worst such discrepancy over every positive-
# probability history up to a horizon.
gap2 = im.markovianity_gap(chain, pi, site, horizon=2)
gap4 = im.markovianity_gap(chain, pi, site, horizon=4)
print(f"memory gap, horizon 2: {gap2:.6f}")
print(f"memory gap, horizon 4: {gap4:.6f}")
print()

# A one-step lumped matrix exists, but it does not generate the process:
# its two-step prediction disagrees with the true two-step conditional.
L = im.lumped_one_step_chain(chain, pi, site)
print("one-step lumped matrix of the observed site:")
print(L)
two_step_lumped = (L @ L)[0, 0]
history = [(1,)]
true_two_step = sum(
    im.conditional_observed_probability(chain, pi, site, history + [(v,)], (1,))
    * im.conditional_observed_probability(chain, pi, site, history, (v,))
    for v in (1, 2)
)
print(f"lumped two-step prediction P(1 -> ? -> 1): {two_step_lumped:.6f}")
print(f"true two-step probability:                 {true_two_step:.6f}")
print()

# Observing every site restores the Markov property exactly.
gap_all = im.markovianity_gap(chain, pi, (0, 1), horizon=3)
print(f"memory gap when both sites are observed: {gap_all:.2e}")

# The memory is visible in simulation, not just in exact arithmetic.
traj = im.sample_trajectory(model, 200_000, pi, seed=0)
x = traj.states[:, 0]
after_1 = x[1:][x[:-1] == 1]
print()
print(f"empirical P(next = 1 | last = 1) over 200000 steps: "
      f"{np.mean(after_1 == 1):.6f}")
