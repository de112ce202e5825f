import numpy as np
import pytest

from hdgbounds import (Workspace, make_continuous,
                       postprocess_potential, reconstruct_flux, solve_adjoint,
                       solve_primal)
from hdgbounds.reconstruct import enforce_dirichlet_band, local_optimize


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def build_pair(mesh, data, out, p, tau=1.0, optimize=False, quad_degree=None):
    """Solve primal+adjoint and build both reconstruction pairs."""
    sol_u = solve_primal(mesh, data, p, tau, quad_degree)
    sol_z = solve_adjoint(mesh, out, p, tau, quad_degree)
    adata = out.adjoint_data()
    ws = Workspace.get(mesh, p, quad_degree)
    pairs = []
    for sol, dat in ((sol_u, data), (sol_z, adata)):
        flux = reconstruct_flux(sol, dat)
        pot = make_continuous(postprocess_potential(sol, flux), mesh, dat.g_D, ws)
        if dat.band is not None:
            pot = enforce_dirichlet_band(pot, mesh, dat.g_D, dat.band, ws)
        if optimize:
            flux, pot = local_optimize(flux, pot, dat, ws)
        pairs.append((flux, pot))
    return sol_u, sol_z, pairs[0], pairs[1], ws
