"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from mfrom.dataset import SyntheticProblemSpec


def unit_box(d):
    """[-1, 1]^d bounds array."""
    return np.column_stack([-np.ones(d), np.ones(d)])


@pytest.fixture
def small_spec():
    """A small synthetic problem usable for fast pipeline tests."""
    return SyntheticProblemSpec.create(
        d=6, k_true=3, mesh_hf=60, mesh_lf=25, seed=11
    )


def principal_angle(u, v):
    """Angle in radians between the lines spanned by vectors u and v."""
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    return float(np.arccos(np.clip(abs(float(u @ v)), 0.0, 1.0)))
