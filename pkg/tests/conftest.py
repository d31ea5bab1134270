"""Shared fixtures: small beam problems reused across the test modules."""

import numpy as np
import pytest

from hampgd import (
    Material,
    TimeGrid,
    TriangleSignal,
    assemble_neumann_load,
    assemble_operators,
    build_beam_mesh,
    build_time_operators,
    solve_fom,
)

BEAM_LENGTHS = (6.0, 1.0, 1.0)
MATERIAL = Material(E=220e9, nu=0.3, rho=7000.0)
SIGNAL = TriangleSignal(t1=0.625, t2=0.75, amplitude=0.5e9)


class BeamProblem:
    """Mesh + operators + load + grid bundle for one discretization."""

    def __init__(self, divisions, n_steps, T=5.0):
        self.mesh = build_beam_mesh(BEAM_LENGTHS, divisions)
        self.K, self.M = assemble_operators(self.mesh, MATERIAL)
        self.load = assemble_neumann_load(self.mesh, SIGNAL)
        self.grid = TimeGrid(T=T, n_steps=n_steps)
        self.ops = build_time_operators(self.grid)
        self._fom = None

    @property
    def fom(self):
        if self._fom is None:
            self._fom = solve_fom(self.K, self.M, self.load, self.grid)
        return self._fom


@pytest.fixture(scope="session")
def beam_small():
    """~160 DOF beam, short grid: cheap enough for most unit tests."""
    return BeamProblem(divisions=(6, 2, 2), n_steps=400)


@pytest.fixture(scope="session")
def beam_tiny():
    """<= 60 DOF beam for dense/complete-basis oracles."""
    return BeamProblem(divisions=(3, 1, 1), n_steps=120, T=1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
