"""Shared fixtures: key generation is the slow part, so contexts are session-scoped."""

import pytest

from claimpipe.he.engine import HeEngine
from claimpipe.he.params import HeParams


@pytest.fixture(scope="session")
def eng8k():
    """Production-sized engine: N=8192, 60+4x40-bit chain, delta 2^40."""
    params = HeParams.create()
    eng = HeEngine(params, seed=42)
    ctx = eng.keygen()
    return eng, ctx


@pytest.fixture(scope="session")
def eng2k():
    """Small engine for structural and error-path tests."""
    params = HeParams.create(ring_dimension=2048, scale_primes=2)
    eng = HeEngine(params, seed=7)
    ctx = eng.keygen(rotation_steps=[1, 2, 4])
    return eng, ctx
