"""Shared fixtures. Expensive objects are session-scoped and read-only."""

import numpy as np
import pytest

from anosovlab.maps import fixture_catalog


@pytest.fixture(scope="session", autouse=True)
def _isolated_cache(tmp_path_factory):
    """Point the artifact cache at a throwaway directory for the whole run."""
    import os

    os.environ["ANOSOVLAB_CACHE"] = str(tmp_path_factory.mktemp("cache"))
    yield


@pytest.fixture(scope="session")
def linear_map():
    return fixture_catalog("linear_A0")


@pytest.fixture(scope="session")
def shear05():
    return fixture_catalog("shear_A0", 0.05)


@pytest.fixture(scope="session")
def shear02():
    return fixture_catalog("shear_A0", 0.02)


@pytest.fixture(scope="session")
def conjugated05():
    return fixture_catalog("conjugated_A0", 0.05)


@pytest.fixture(scope="session")
def product05():
    return fixture_catalog("product_T3", 0.05)


@pytest.fixture(scope="session")
def cubic():
    return fixture_catalog("cubic_companion")


@pytest.fixture(scope="session")
def conjugated_psi(conjugated05, _isolated_cache):
    """Transfer function for the stable log-norm cocycle; ~5s, reused widely."""
    from anosovlab.leafmetric import bundle_coboundary_psi

    return bundle_coboundary_psi(conjugated05, 1)


@pytest.fixture()
def rng():
    return np.random.default_rng(7)
