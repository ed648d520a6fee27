"""Shared fixtures for the test suite."""

import pytest

from cpschain import mscrypto as ms


@pytest.fixture(scope="session")
def params():
    return ms.default_params()
