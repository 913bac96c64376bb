"""Shared truss fixtures: small models with unit member weights."""

import numpy as np
import pytest

from ddinfer.truss import TrussModel


@pytest.fixture
def chain_truss():
    """Three collinear bars, two free axial dofs, one self-stress mode."""
    return TrussModel(
        nodes=np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]),
        bars=np.array([[0, 1], [1, 2], [2, 3]]),
        moduli=np.array([2.0, 1.0, 1.5]),
        supports=((0, 0), (0, 1), (1, 1), (2, 1), (3, 0), (3, 1)),
        loads=((1, 0, 1.0), (2, 0, 0.5)),
        strain_offsets=np.array([0.05, -0.1, 0.2]),
    )


@pytest.fixture
def triangle_truss():
    """Two bars meeting at one free node: statically determinate (no self-stress)."""
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]])
    bars = np.array([[0, 2], [1, 2]])
    lengths = np.linalg.norm(nodes[bars[:, 1]] - nodes[bars[:, 0]], axis=1)
    return TrussModel(
        nodes=nodes,
        bars=bars,
        moduli=np.array([1.0, 2.0]),
        areas=1.0 / lengths,
        supports=((0, 0), (0, 1), (1, 0), (1, 1)),
        loads=((2, 0, 0.3), (2, 1, -1.0)),
    )


@pytest.fixture
def braced_square_truss():
    """Unit square with both diagonals: five free dofs, one self-stress mode."""
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    bars = np.array([[0, 1], [1, 2], [2, 3], [3, 0], [0, 2], [1, 3]])
    lengths = np.linalg.norm(nodes[bars[:, 1]] - nodes[bars[:, 0]], axis=1)
    return TrussModel(
        nodes=nodes,
        bars=bars,
        moduli=np.array([1.0, 1.5, 0.8, 1.2, 2.0, 0.9]),
        areas=1.0 / lengths,
        supports=((0, 0), (0, 1), (1, 1)),
        loads=((2, 0, 0.4), (2, 1, 0.2), (3, 0, -0.1)),
        strain_offsets=np.array([0.0, 0.02, 0.0, -0.03, 0.01, 0.0]),
    )
