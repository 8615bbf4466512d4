"""Unilateral, inelastic contact against a rigid height-field surface.

The target is z = f(x, y) with an (unnormalized) surface normal
p = (-df/dx, -df/dy, 1). A node whose candidate position falls under the
surface inside the footprint is moved back onto it along p by the
prescribed correction dx_pre = (f - z) * p / |p|^2, and the step is
re-solved with that node's equations projected by the modified mass
matrix W = I - p_hat (x) p_hat: tangential motion stays dynamic while the
normal displacement is pinned to the corrected value. The detect/correct
loop repeats until no penetration remains, then the velocities of the
contacting nodes are zeroed (inelastic impact).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ContactLoopError, NonconvergenceError
from .integrator import ImplicitIntegrator, State, StepReport

_I3 = np.eye(3)


# --- surfaces ----------------------------------------------------------------

class ContactSurface:
    """Rigid target z = f(x, y) restricted to a footprint in the plane."""

    def height(self, x, y):
        raise NotImplementedError

    def gradient(self, x, y):
        """(df/dx, df/dy) at the given points."""
        raise NotImplementedError

    def footprint(self, x, y):
        """Boolean mask of points where the constraint applies."""
        raise NotImplementedError

    def solid_depth(self, positions):
        """Signed depth of points inside the rigid body the height field
        bounds (positive = inside). Default: height-field gap inside the
        footprint."""
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        inside = self.footprint(pos[:, 0], pos[:, 1])
        gap = self.height(pos[:, 0], pos[:, 1]) - pos[:, 2]
        return np.where(inside, gap, -np.inf)


@dataclass(frozen=True)
class PlaneSurface(ContactSurface):
    z0: float = 0.0

    def height(self, x, y):
        return np.broadcast_to(np.float64(self.z0), np.shape(x)).copy()

    def gradient(self, x, y):
        zero = np.zeros(np.shape(x))
        return zero, zero.copy()

    def footprint(self, x, y):
        return np.ones(np.shape(x), dtype=bool)


@dataclass(frozen=True)
class HemisphereSurface(ContactSurface):
    """Upper hemisphere of a sphere; only x^2 + y^2 <= R^2 constrains.

    The gradient clamps the vanishing rim denominator so nodes exactly on
    the rim get a finite (nearly horizontal) normal.
    """

    radius: float
    center: tuple = (0.0, 0.0, 0.0)

    def _s2(self, x, y):
        cx, cy, _ = self.center
        return self.radius**2 - (np.asarray(x) - cx)**2 - (np.asarray(y) - cy)**2

    def height(self, x, y):
        return self.center[2] + np.sqrt(np.maximum(self._s2(x, y), 0.0))

    def gradient(self, x, y):
        cx, cy, _ = self.center
        s = np.sqrt(np.maximum(self._s2(x, y), (1e-9 * self.radius)**2))
        return -(np.asarray(x) - cx) / s, -(np.asarray(y) - cy) / s

    def footprint(self, x, y):
        return self._s2(x, y) >= 0.0

    def solid_depth(self, positions):
        """Depth inside the solid upper half-ball; points below the equator
        plane are outside regardless of their planar radius."""
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        center = np.asarray(self.center)
        depth = self.radius - np.linalg.norm(pos - center, axis=1)
        return np.where(pos[:, 2] >= center[2], depth, -np.inf)


SURFACE_REGISTRY = {
    "plane": PlaneSurface,
    "hemisphere": HemisphereSurface,
}


def make_surface(spec: str) -> ContactSurface:
    """Build a surface from a call-like spec: ``plane(z0)`` or
    ``hemisphere(radius[, cx, cy, cz])``."""
    spec = spec.strip()
    if "(" not in spec or not spec.endswith(")"):
        raise ValueError(f"surface spec {spec!r} must look like name(args)")
    name, rest = spec.split("(", 1)
    name = name.strip()
    if name not in SURFACE_REGISTRY:
        raise ValueError(f"unknown surface {name!r}; known: {sorted(SURFACE_REGISTRY)}")
    args = [float(v) for v in rest[:-1].replace(",", " ").split()]
    if name == "plane":
        return PlaneSurface(*args)
    if len(args) == 1:
        return HemisphereSurface(args[0])
    if len(args) == 4:
        return HemisphereSurface(args[0], tuple(args[1:]))
    raise ValueError("hemisphere takes (radius) or (radius, cx, cy, cz)")


# --- per-node operations ------------------------------------------------------

def detect(positions, surface: ContactSurface, tol: float = 0.0) -> np.ndarray:
    """Indices of nodes strictly below the surface (by more than tol)
    inside the footprint."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    inside = surface.footprint(pos[:, 0], pos[:, 1])
    gap = np.where(inside, surface.height(pos[:, 0], pos[:, 1]) - pos[:, 2], -np.inf)
    return np.flatnonzero(gap > tol)


def surface_normal(surface: ContactSurface, x, y) -> np.ndarray:
    """Unnormalized upward normal p = (-df/dx, -df/dy, 1)."""
    fx, fy = surface.gradient(x, y)
    return np.stack([-np.asarray(fx), -np.asarray(fy), np.ones(np.shape(fx))], axis=-1)


def prescribed_correction(surface: ContactSurface, position) -> np.ndarray:
    """Displacement (f - z) * p / |p|^2 that projects a penetrating
    candidate position back onto the surface along the normal."""
    pos = np.asarray(position, dtype=np.float64)
    gap = surface.height(pos[0], pos[1]) - pos[2]
    p = surface_normal(surface, pos[0], pos[1])
    return gap * p / float(np.dot(p, p))


def modified_mass_matrix(free_dof_count: int, directions=()) -> np.ndarray:
    """Projector W for a node with the given number of free DOFs.

    3 free: identity. 2 or 1 free: identity minus the outer products of
    the (orthonormal) constraint directions. 0 free: zero, which pins the
    node's update to the prescribed value.
    """
    directions = [np.asarray(d, dtype=np.float64) for d in directions]
    if len(directions) != 3 - free_dof_count:
        raise ValueError("need one constraint direction per removed DOF")
    if free_dof_count == 0:
        return np.zeros((3, 3))
    w = _I3.copy()
    for d in directions:
        d = d / np.linalg.norm(d)
        w -= np.outer(d, d)
    return w


# --- contact-aware stepping -----------------------------------------------------

@dataclass
class ContactSet:
    """Nodes constrained to the surface at the end of a step."""

    nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    corrections: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __len__(self):
        return len(self.nodes)

    def is_on_surface(self, node: int) -> bool:
        return bool(np.isin(node, self.nodes))


class ContactProjection:
    """System modifier installing W-projected rows for contacting nodes.

    For each contacting node the three residual rows become
    W @ E_node + m * (p_hat (x) p_hat) @ (dq_node - dq_pre_total): the
    tangential dynamics keep the scheme residual while the normal
    displacement is pinned (linearly, so Newton satisfies it exactly) to
    the corrected candidate value dq_pre_total.
    """

    def __init__(self, integrator: ImplicitIntegrator, nodes, normals_unit, dq_pre_total):
        self.nodes = np.asarray(nodes, dtype=np.intp)
        self.normals = np.asarray(normals_unit, dtype=np.float64).reshape(-1, 3)
        self.dq_pre = np.asarray(dq_pre_total, dtype=np.float64).reshape(-1, 3)
        self.dof_rows = (3 * self.nodes[:, None] + np.arange(3)[None, :])
        self.masses = integrator.mass_dofs[self.dof_rows[:, 0]]
        self.outer = np.einsum("ca,cb->cab", self.normals, self.normals)
        self.w = _I3[None, :, :] - self.outer

        # Sparse row filter P (identity with W blocks) and the pinned-row
        # block diagonal D = m * (I - W), both on the reduced free system.
        n_free = integrator.free_dofs.size
        red = integrator.reduced_index[self.dof_rows]
        if np.any(red < 0):
            raise ValueError("contact applied to a fixed or prescribed DOF")
        c = len(self.nodes)
        rows = np.repeat(red, 3, axis=1).ravel()
        cols = np.tile(red, (1, 3)).ravel()
        p_data = sp.coo_matrix((self.w.ravel(), (rows, cols)), shape=(n_free, n_free))
        keep = np.ones(n_free)
        keep[red.ravel()] = 0.0
        self._p = (sp.diags(keep) + p_data).tocsr()
        d_vals = (self.masses[:, None, None] * self.outer).ravel()
        self._d = sp.coo_matrix((d_vals, (rows, cols)), shape=(n_free, n_free)).tocsr()

    def modify_residual(self, res: np.ndarray, dq: np.ndarray) -> np.ndarray:
        out = res.copy()
        blocks = res[self.dof_rows]
        pinned = np.einsum("cab,cb->ca", self.outer, dq[self.dof_rows] - self.dq_pre)
        out[self.dof_rows] = np.einsum("cab,cb->ca", self.w, blocks) \
            + self.masses[:, None] * pinned
        return out

    def modify_jacobian(self, jac):
        return self._p @ jac + self._d


def _resolve_contact_step(integrator: ImplicitIntegrator, state: State,
                          surface: ContactSurface, t_next: float,
                          max_passes: int, detection_tol: float,
                          zero_velocity: str):
    excluded = integrator.constraints.constrained_nodes()
    # Contact means crossing the height field from above within this step.
    # A node already below the surface sheet when the step starts (e.g. it
    # hangs beside the target and swings in under the footprint rim, where
    # the height field represents no geometry) must not be yanked up
    # through the target. The sheet is the height function extended past
    # the footprint, which clamps to the rim elevation there.
    start = state.nodal_positions()
    started_below = np.flatnonzero(
        start[:, 2] < surface.height(start[:, 0], start[:, 1]) - detection_tol)
    excluded = np.union1d(excluded, started_below)
    entries = {}  # node -> [unit normal, total prescribed increment, correction]
    dq = None
    iterations = 0
    wall = 0.0
    for pass_index in range(max_passes + 1):
        modifier = None
        if entries:
            nodes = np.fromiter(entries.keys(), dtype=np.intp)
            modifier = ContactProjection(
                integrator, nodes,
                np.array([entries[n][0] for n in nodes]),
                np.array([entries[n][1] for n in nodes]))
        dq, report = integrator.newton_solve(state, t_next, warm_dq=dq,
                                             system_modifier=modifier)
        iterations += report.newton_iterations
        wall += report.wall_time

        candidate = (state.positions + dq).reshape(-1, 3)
        pen = detect(candidate, surface, tol=detection_tol)
        pen = np.setdiff1d(pen, excluded, assume_unique=False)
        if pen.size == 0:
            break
        if pass_index == max_passes:
            raise ContactLoopError(pass_index, pen.tolist())
        for node in pen:
            pos = candidate[node]
            correction = prescribed_correction(surface, pos)
            p = surface_normal(surface, pos[0], pos[1])
            p_hat = p / np.linalg.norm(p)
            sl = slice(3 * node, 3 * node + 3)
            entries[int(node)] = [p_hat, dq[sl] + correction, correction]

    new_state = integrator.advance(state, dq, t_next)
    if entries:
        nodes = np.fromiter(entries.keys(), dtype=np.intp)
        nodes.sort()
        contact = ContactSet(nodes,
                             np.array([entries[n][0] for n in nodes]),
                             np.array([entries[n][2] for n in nodes]))
        vel = new_state.velocities.reshape(-1, 3)
        if zero_velocity == "all":
            vel[nodes] = 0.0
        elif zero_velocity == "normal":
            vn = np.einsum("ca,ca->c", vel[nodes], contact.normals)
            vel[nodes] -= vn[:, None] * contact.normals
        else:
            raise ValueError(f"unknown zero_velocity mode {zero_velocity!r}")
    else:
        contact = ContactSet()
    report = StepReport(iterations, report.residual_norm, contact_passes=pass_index,
                        wall_time=wall)
    return new_state, contact, report


def step_with_contact(integrator: ImplicitIntegrator, state: State,
                      surface: ContactSurface, t_next: float = None,
                      max_passes: int = 20, detection_tol: float = 1e-9,
                      zero_velocity: str = "all"):
    """One time step with the detect-correct contact loop.

    Each pass solves the step, detects penetrating candidates, installs
    their projections/corrections and re-solves (warm started) until no
    new penetration appears; then the contacting nodes' velocities are
    zeroed ("all" components by default, "normal" projects only the
    normal part). Raises ContactLoopError if the loop does not settle
    within max_passes. On Newton failure the whole step is retried once
    as two half steps.
    """
    if t_next is None:
        t_next = state.time + integrator.config.time_step
    args = (max_passes, detection_tol, zero_velocity)
    try:
        return _resolve_contact_step(integrator, state, surface, t_next, *args)
    except NonconvergenceError:
        if not integrator.config.retry_with_half_step:
            raise
    t_mid = state.time + 0.5 * (t_next - state.time)
    mid, contact1, rep1 = _resolve_contact_step(integrator, state, surface, t_mid, *args)
    out, contact2, rep2 = _resolve_contact_step(integrator, mid, surface, t_next, *args)
    report = StepReport(rep1.newton_iterations + rep2.newton_iterations,
                        rep2.residual_norm,
                        contact_passes=max(rep1.contact_passes, rep2.contact_passes),
                        wall_time=rep1.wall_time + rep2.wall_time,
                        substeps=2)
    return out, contact2, report
