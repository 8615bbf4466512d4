"""Implicit time integration of the net equations of motion.

One step solves M*ddq = F_int + F_damp + F_grav implicitly for the
position increment dq via Newton-Raphson on a sparse Jacobian. Two
schemes are provided:

* first-order implicit Euler, residual
  M*(dq - h*v_k) - h^2 * F(t_{k+1}) = 0, with v_{k+1} = dq/h;
* the second-order one-parameter scheme ("newmark-beta"), residual
  M*(dq - h*v_k) - h^2*b^2*F(t_{k+1}) - h^2*b*(1-b)*F(t_k) = 0, with
  v_{k+1} = dq/(h*b) - (1-b)/b * v_k. At b = 1 it reduces to implicit
  Euler exactly (identical floating-point operations).

Damping is the velocity-proportional force F_damp = -mu*M*v evaluated at
the end of the step, so it contributes mu*M*h (Euler) or mu*M*h*b to the
Jacobian. Gravity is constant and contributes nothing.

Fixed DOFs keep dq = 0 and prescribed DOFs take their scheduled value;
both are eliminated from the linear system by row/column removal before
the sparse direct factorization.
"""

import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .elastic import CURVATURE_MODES, CscPattern, ElasticAssembler
from .errors import NonconvergenceError, NumericalError, SingularSystemError
from .materials import MaterialParams
from .mesh import NetMesh, State

SCHEMES = ("implicit-euler", "newmark-beta")


@dataclass
class IntegratorConfig:
    """Time stepping parameters.

    newton_tolerance is an absolute bound on the Euclidean norm of the
    residual over the free DOFs. retry_with_half_step controls whether a
    nonconverged step is retried once as two half steps before erroring.
    """

    time_step: float = 0.01
    scheme: str = "implicit-euler"
    beta: float = 0.5
    newton_tolerance: float = 1e-4
    max_newton_iterations: int = 50
    damping: float = 0.0
    gravity: tuple = (0.0, 0.0, 0.0)
    retry_with_half_step: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.time_step > 0.0):
            raise ValueError("time_step must be positive")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must lie in (0, 1]")
        if not (self.newton_tolerance > 0.0):
            raise ValueError("newton_tolerance must be positive")
        if self.max_newton_iterations < 1:
            raise ValueError("max_newton_iterations must be >= 1")


@dataclass
class DofConstraints:
    """Partition of the DOFs into free, fixed and prescribed.

    fixed_dofs holds flat DOF indices pinned at their current value.
    prescribed maps a node index to a callable t -> (3,) position; all
    three DOFs of such a node follow the schedule.
    """

    fixed_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    prescribed: dict = field(default_factory=dict)

    def __post_init__(self):
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=np.intp))
        overlap = set(self.fixed_dofs.tolist()) & set(self.prescribed_dofs().tolist())
        if overlap:
            raise ValueError(f"DOFs {sorted(overlap)} are both fixed and prescribed")

    @classmethod
    def fix_nodes(cls, nodes) -> "DofConstraints":
        nodes = np.asarray(nodes, dtype=np.intp)
        return cls(fixed_dofs=(3 * nodes[:, None] + np.arange(3)[None, :]).ravel())

    def prescribed_dofs(self) -> np.ndarray:
        if not self.prescribed:
            return np.zeros(0, dtype=np.intp)
        nodes = np.fromiter(self.prescribed.keys(), dtype=np.intp)
        return (3 * nodes[:, None] + np.arange(3)[None, :]).ravel()

    def constrained_nodes(self) -> np.ndarray:
        """Nodes with any fixed or prescribed DOF."""
        return np.unique(np.concatenate([self.fixed_dofs // 3,
                                         np.fromiter(self.prescribed.keys(), dtype=np.intp)
                                         if self.prescribed else np.zeros(0, dtype=np.intp)]))

    def free_mask(self, ndof: int) -> np.ndarray:
        mask = np.ones(ndof, dtype=bool)
        mask[self.fixed_dofs] = False
        mask[self.prescribed_dofs()] = False
        return mask


@dataclass
class StepReport:
    """Per-step diagnostics."""

    newton_iterations: int = 0
    residual_norm: float = 0.0
    contact_passes: int = 0
    wall_time: float = 0.0
    substeps: int = 1


class ImplicitIntegrator:
    """Owns the assembled system for one mesh/material/constraint set."""

    def __init__(self, mesh: NetMesh, params: MaterialParams, config: IntegratorConfig,
                 constraints: DofConstraints = None, curvature: str = "modified"):
        if curvature not in CURVATURE_MODES:
            raise ValueError(f"unknown curvature mode {curvature!r}")
        self.mesh = mesh
        self.params = params
        self.config = config
        self.assembler = ElasticAssembler(mesh, params, curvature)
        self.ndof = 3 * mesh.n_nodes
        self.mass_dofs = np.repeat(mesh.lumped_masses(params), 3)
        if np.any(self.mass_dofs <= 0.0):
            raise ValueError("every lumped mass must be positive")
        self.gravity_force = self.mass_dofs * np.tile(np.asarray(config.gravity, dtype=np.float64),
                                                      mesh.n_nodes)
        self.set_constraints(constraints or DofConstraints())

    # -- constraint bookkeeping ---------------------------------------------

    def set_constraints(self, constraints: DofConstraints) -> None:
        self.constraints = constraints
        mask = constraints.free_mask(self.ndof)
        self.free_dofs = np.flatnonzero(mask)
        self._free_mask = mask
        reduced = np.full(self.ndof, -1, dtype=np.intp)
        reduced[self.free_dofs] = np.arange(self.free_dofs.size)
        self.reduced_index = reduced
        rows = self.assembler.entry_rows
        cols = self.assembler.entry_cols
        self._entry_keep = mask[rows] & mask[cols]
        self._pattern = CscPattern(reduced[rows[self._entry_keep]],
                                   reduced[cols[self._entry_keep]],
                                   self.free_dofs.size)
        self._mass_free = self.mass_dofs[self.free_dofs]

    # -- scheme pieces --------------------------------------------------------

    def _euler_like(self) -> bool:
        return self.config.scheme == "implicit-euler" or self.config.beta == 1.0

    def _new_velocity(self, state: State, dq: np.ndarray, h: float) -> np.ndarray:
        if self._euler_like():
            return dq / h
        beta = self.config.beta
        return dq / (h * beta) - (1.0 - beta) / beta * state.velocities

    def total_force(self, positions: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        """Internal elastic + damping + gravity force on all DOFs."""
        _, f_int = self.assembler.energy_force(positions)
        return f_int + self.gravity_force - self.config.damping * self.mass_dofs * velocities

    def residual(self, state: State, dq: np.ndarray, t_next: float,
                 force_old: np.ndarray = None) -> np.ndarray:
        """Scheme residual over all DOFs for a trial increment dq."""
        h = t_next - state.time
        v_new = self._new_velocity(state, dq, h)
        f_new = self.total_force(state.positions + dq, v_new)
        res = self.mass_dofs * (dq - h * state.velocities)
        if self._euler_like():
            return res - h * h * f_new
        beta = self.config.beta
        if force_old is None:
            force_old = self.total_force(state.positions, state.velocities)
        return res - (h * h * beta * beta) * f_new - (h * h * beta * (1.0 - beta)) * force_old

    def _jacobian_scales(self, h: float):
        if self._euler_like():
            return h * h, self.config.damping * h
        beta = self.config.beta
        return h * h * beta * beta, self.config.damping * h * beta

    def jacobian(self, state: State, dq: np.ndarray, t_next: float):
        """Full (3N x 3N) residual Jacobian d residual / d dq, sparse CSC."""
        h = t_next - state.time
        scale_e, scale_d = self._jacobian_scales(h)
        values = scale_e * self.assembler.hessian_entry_values(state.positions + dq)
        pattern = CscPattern(self.assembler.entry_rows, self.assembler.entry_cols, self.ndof)
        return pattern.build(values, diagonal=self.mass_dofs * (1.0 + scale_d))

    def _jacobian_reduced(self, state: State, dq: np.ndarray, h: float):
        scale_e, scale_d = self._jacobian_scales(h)
        values = self.assembler.hessian_entry_values(state.positions + dq)
        return self._pattern.build(scale_e * values[self._entry_keep],
                                   diagonal=self._mass_free * (1.0 + scale_d))

    # -- Newton solve ----------------------------------------------------------

    def initial_guess(self, state: State, t_next: float) -> np.ndarray:
        """Ballistic predictor dq = h*v with constrained DOFs filled in."""
        h = t_next - state.time
        dq = h * state.velocities
        dq[self.constraints.fixed_dofs] = 0.0
        for node, motion in self.constraints.prescribed.items():
            sl = slice(3 * node, 3 * node + 3)
            dq[sl] = np.asarray(motion(t_next), dtype=np.float64) - state.positions[sl]
        return dq

    def newton_solve(self, state: State, t_next: float = None, warm_dq: np.ndarray = None,
                     system_modifier=None):
        """Iterate Newton on the free DOFs until the residual norm meets the
        tolerance. Returns (dq, StepReport); raises NonconvergenceError with
        the last residual norm when the iteration budget is exhausted.
        """
        cfg = self.config
        if t_next is None:
            t_next = state.time + cfg.time_step
        h = t_next - state.time
        if not (h > 0.0):
            raise ValueError("t_next must lie after the state time")
        started = _time.perf_counter()
        dq = self.initial_guess(state, t_next)
        if warm_dq is not None:
            dq[self.free_dofs] = warm_dq[self.free_dofs]
        force_old = None
        if not self._euler_like():
            force_old = self.total_force(state.positions, state.velocities)

        # Do-while shape: every step performs at least one update, and the
        # loop exits once the residual entering an update met the tolerance.
        # This keeps small-residual systems (light nodes under weak forces)
        # tracking the implicit solution instead of stalling at the guess.
        free = self.free_dofs
        for iteration in range(1, cfg.max_newton_iterations + 1):
            res = self.residual(state, dq, t_next, force_old)
            if system_modifier is not None:
                res = system_modifier.modify_residual(res, dq)
            err = float(np.linalg.norm(res[free]))
            if not np.isfinite(err):
                raise NumericalError("non-finite residual norm in Newton iteration")
            jac = self._jacobian_reduced(state, dq, h)
            if system_modifier is not None:
                jac = system_modifier.modify_jacobian(jac)
            try:
                solver = spla.splu(jac.tocsc())
            except RuntimeError as exc:
                raise SingularSystemError(f"sparse factorization failed: {exc}") from exc
            dq[free] -= solver.solve(res[free])
            if err <= cfg.newton_tolerance:
                return dq, StepReport(iteration, err,
                                      wall_time=_time.perf_counter() - started)
        raise NonconvergenceError(cfg.max_newton_iterations, err, cfg.newton_tolerance)

    def advance(self, state: State, dq: np.ndarray, t_next: float) -> State:
        """Apply an accepted increment: update positions, velocities, time."""
        h = t_next - state.time
        return State(state.positions + dq, self._new_velocity(state, dq, h), t_next)

    def step(self, state: State, t_next: float = None):
        """One accepted time step. On Newton failure the step is retried once
        as two half steps (when enabled), then the error propagates.
        """
        cfg = self.config
        if t_next is None:
            t_next = state.time + cfg.time_step
        try:
            dq, report = self.newton_solve(state, t_next)
            return self.advance(state, dq, t_next), report
        except NonconvergenceError:
            if not cfg.retry_with_half_step:
                raise
        t_mid = state.time + 0.5 * (t_next - state.time)
        dq1, rep1 = self.newton_solve(state, t_mid)
        mid = self.advance(state, dq1, t_mid)
        dq2, rep2 = self.newton_solve(mid, t_next)
        out = self.advance(mid, dq2, t_next)
        report = StepReport(rep1.newton_iterations + rep2.newton_iterations,
                            rep2.residual_norm,
                            wall_time=rep1.wall_time + rep2.wall_time,
                            substeps=2)
        return out, report

    # -- diagnostics ------------------------------------------------------------

    def kinetic_energy(self, state: State) -> float:
        return 0.5 * float(np.dot(self.mass_dofs, state.velocities**2))

    def elastic_energy(self, state: State) -> float:
        return self.assembler.energy(state.positions)
