"""Implicit time stepping with Newton-Raphson for the beam problem."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import FomConfig, assemble_system

__all__ = ["Trajectory", "NewtonDivergenceError", "solve_fom", "newton_step", "extract_qoi"]

log = logging.getLogger(__name__)


class NewtonDivergenceError(RuntimeError):
    """Newton failed to reach the tolerance within the iteration budget."""

    def __init__(self, step, residual_norm, history):
        super().__init__(
            f"Newton did not converge at step {step}: last residual norm {residual_norm:.3e}"
        )
        self.step = step
        self.residual_norm = residual_norm
        self.history = history


@dataclass
class Trajectory:
    """Displacement history of one forward solve.

    ``dofs_per_step[:, n]`` is the nodal displacement vector at ``times[n]``;
    the DOF of vertex ``v`` in direction ``c`` is ``3 * v + c``.
    """

    dofs_per_step: np.ndarray
    times: np.ndarray
    newton_iterations: list = field(default_factory=list)
    residual_histories: list = field(default_factory=list, repr=False)

    @property
    def n_dofs(self):
        return self.dofs_per_step.shape[0]

    @property
    def n_steps(self):
        return self.dofs_per_step.shape[1]

    @property
    def dt(self):
        if len(self.times) > 1:
            return float(self.times[1] - self.times[0])
        return float(self.times[0])


def newton_step(u_start, u_prev, u_prev2, mat, mesh, config, t, step=0):
    """Solve one time step; return the solution and the residual-norm history."""
    free = mesh.free_dofs()
    u = u_start.copy()
    history = []
    ref = None
    for it in range(config.newton_max_iter + 1):
        R, K = assemble_system(u, u_prev, u_prev2, mat, mesh, config, t)
        r = R[free]
        norm = float(np.linalg.norm(r))
        history.append(norm)
        if ref is None:
            ref = norm
        if norm <= max(config.newton_atol, config.newton_tol * ref):
            return u, history
        if it == config.newton_max_iter:
            break
        Kff = K[free][:, free].tocsc()
        du = spla.spsolve(Kff, -r)
        if not np.all(np.isfinite(du)):
            break
        u[free] += du
    raise NewtonDivergenceError(step, history[-1], history)


def solve_fom(mat, mesh, config=None):
    """Integrate from rest and return the full displacement history.

    Each step starts Newton from the previous step's solution.
    """
    config = config or FomConfig()
    n_h = mesh.n_dofs
    times = config.times
    out = np.zeros((n_h, len(times)))
    u_prev2 = np.zeros(n_h)
    u_prev = np.zeros(n_h)
    iters = []
    histories = []
    for n, t in enumerate(times):
        u, hist = newton_step(u_prev, u_prev, u_prev2, mat, mesh, config, t, step=n + 1)
        out[:, n] = u
        iters.append(len(hist) - 1)
        histories.append(hist)
        u_prev2, u_prev = u_prev, u
    log.debug("FOM solved: %d steps, %d Newton iterations", len(times), sum(iters))
    return Trajectory(out, times.copy(), iters, histories)


def extract_qoi(traj, mesh, point, component, step):
    """Displacement component at a mesh vertex and a time step.

    Parameters
    ----------
    point : int or sequence of 3 floats
        Vertex index, or coordinates snapped to the nearest vertex.
    component : {"x", "y", "z"} or int
    step : int
        1-based step index n, i.e. the value at t^n.

    Returns
    -------
    value : float
    snapped : ndarray
        Coordinates of the vertex actually used.
    """
    comp = {"x": 0, "y": 1, "z": 2}.get(component, component)
    if comp not in (0, 1, 2):
        raise ValueError(f"invalid component {component!r}")
    if not 1 <= step <= traj.n_steps:
        raise IndexError(f"step {step} outside 1..{traj.n_steps}")
    if np.ndim(point) == 0:
        v = int(point)
        snapped = mesh.vertices[v].copy()
    else:
        v, snapped = mesh.nearest_vertex(point)
    return float(traj.dofs_per_step[3 * v + comp, step - 1]), snapped
