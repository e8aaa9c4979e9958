import numpy as np
import pytest

import influencemodel as im


@pytest.fixture(scope="session")
def reference_model():
    return im.two_site_reference_model()


@pytest.fixture(scope="session")
def reference_chain(reference_model):
    return im.build_master_chain(reference_model)


@pytest.fixture(scope="session")
def reference_pi(reference_chain):
    return im.stationary_distribution(reference_chain).pi


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels(reference_model):
    # Compile the jitted simulation kernel once so timed tests measure
    # steady-state cost, not compilation.
    im.sample_trajectory(reference_model, 8, (1, 1), seed=0)
