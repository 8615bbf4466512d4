"""Scripted boundary-condition schedules: vibration, contact drop, fold,
shoot and close, plus the derived metrics (midpoint deflection, spread
area, element stresses).

Default parameters follow the reference hexagonal-net setup: E = 1 GPa,
r0 = 1 mm, rho = 1000 kg/m^3, with per-scenario gravity/damping/speeds as
listed in :func:`default_config`.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .contact import ContactSurface, HemisphereSurface, step_with_contact
from .integrator import DofConstraints, ImplicitIntegrator, IntegratorConfig
from .materials import MaterialParams
from .mesh import NetMesh, State, central_node, generate_rod

DEFAULT_MATERIAL = MaterialParams(young_modulus=1e9, rod_radius=1e-3, density=1000.0)

SCENARIO_KINDS = ("vibration", "contact-drop", "fold", "shoot", "close")


@dataclass
class ScenarioConfig:
    """Resolved parameters of one scenario run."""

    kind: str
    gravity: tuple = (0.0, 0.0, 0.0)
    mu: float = 0.0
    duration: float = 1.0
    time_step: float = 0.01
    tolerance: float = 1e-4
    scheme: str = "implicit-euler"
    beta: float = 0.5
    frames_every: float = 0.01
    max_newton_iterations: int = 50
    curvature: str = "modified"
    zero_velocity: str = "all"
    # contact-drop
    drop_height: float = 5.0
    surface_spec: str = "hemisphere(4.0)"
    # fold
    fold_speed: float = 1.0
    target_scale: float = 0.001
    settle_time: float = 0.5
    # shoot
    corner_mass: float = 5.0
    shoot_speed: float = 20.0
    shoot_angle: float = 45.0
    activation_rule: str = "all-nodes"
    # close
    sphere_radius: float = 3.0
    standoff: float = 10.0
    close_speed: float = 10.0
    destination: tuple = (0.0, 0.0, 4.0)
    trigger_time: float = 0.9

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(
            time_step=self.time_step, scheme=self.scheme, beta=self.beta,
            newton_tolerance=self.tolerance,
            max_newton_iterations=self.max_newton_iterations,
            damping=self.mu, gravity=tuple(self.gravity))


_KIND_DEFAULTS = {
    "vibration": dict(gravity=(0.0, 0.0, -1000.0), mu=0.01, duration=2.0),
    "contact-drop": dict(gravity=(0.0, 0.0, -10.0), mu=0.1, duration=8.0),
    "fold": dict(gravity=(0.0, 0.0, -10.0), mu=0.1, duration=None),
    "shoot": dict(gravity=(0.0, 0.0, 0.0), mu=0.1, duration=0.9),
    "close": dict(gravity=(0.0, 0.0, 0.0), mu=0.1, duration=2.1),
}


def default_config(kind: str, **overrides) -> ScenarioConfig:
    """ScenarioConfig with the per-kind reference defaults applied.

    A nonpositive fold duration means "travel time plus settle_time",
    resolved when the run starts.
    """
    if kind not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}")
    values = dict(_KIND_DEFAULTS[kind])
    values.update(overrides)
    if values.get("duration") is None:
        values["duration"] = -1.0
    return ScenarioConfig(kind=kind, **values)


@dataclass
class PrescribedMotion:
    """Straight-line path from start to target at constant speed; the node
    holds its target after arrival."""

    node: int
    start: np.ndarray
    target: np.ndarray
    speed: float
    start_time: float = 0.0

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        if not (self.speed > 0.0):
            raise ValueError("speed must be positive")

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.target - self.start))

    @property
    def arrival_time(self) -> float:
        return self.start_time + self.distance / self.speed

    def __call__(self, t: float) -> np.ndarray:
        dist = self.distance
        if dist == 0.0 or t <= self.start_time:
            return self.start.copy() if t <= self.start_time else self.target.copy()
        s = min(self.speed * (t - self.start_time), dist)
        return self.start + (self.target - self.start) * (s / dist)


@dataclass
class RunResult:
    """Common output of a scenario run."""

    times: np.ndarray
    frames: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    final_state: State = None


def frame_times(duration: float, time_step: float, frames_every: float) -> np.ndarray:
    """Times at which frames are emitted: t = 0 plus the first step boundary
    at or past each multiple of frames_every."""
    n_steps = int(round(duration / time_step))
    times = [0.0]
    next_frame = frames_every
    for k in range(n_steps):
        t = (k + 1) * time_step
        if t + 1e-12 >= next_frame:
            times.append(t)
            while next_frame <= t + 1e-12:
                next_frame += frames_every
    return np.array(times)


def _run_loop(integrator, state, duration, frames_every, surface=None,
              pre_step=None, post_step=None, frame_callback=None,
              zero_velocity="all", collect_frames=True):
    """March the state to ``duration`` capturing frames on a fixed cadence."""
    h = integrator.config.time_step
    n_steps = int(round(duration / h))
    result = RunResult(times=np.zeros(n_steps + 1))
    result.final_state = state

    def emit(t, st):
        if frame_callback is not None:
            frame_callback(t, st)
        elif collect_frames:
            result.frames.append((t, st.copy()))

    emit(0.0, state)
    next_frame = frames_every
    for k in range(n_steps):
        t_next = (k + 1) * h
        if pre_step is not None:
            pre_step(state, t_next)
        if surface is None:
            state, report = integrator.step(state, t_next)
            contact = None
        else:
            state, contact, report = step_with_contact(
                integrator, state, surface, t_next, zero_velocity=zero_velocity)
        result.times[k + 1] = t_next
        result.reports.append(report)
        if post_step is not None:
            post_step(state, contact, report)
        if t_next + 1e-12 >= next_frame:
            emit(t_next, state)
            while next_frame <= t_next + 1e-12:
                next_frame += frames_every
    result.final_state = state
    return result


# --- vibration ------------------------------------------------------------------

def run_vibration(mesh: NetMesh, cfg: ScenarioConfig,
                  params: MaterialParams = DEFAULT_MATERIAL,
                  frame_callback=None, collect_frames=True) -> RunResult:
    """Hexagonal net falling under gravity with its six corners pinned.

    Emits the midpoint deflection (z displacement of the central node)
    and the kinetic energy over time.
    """
    if mesh.corner_nodes.size != 6:
        raise ValueError("vibration scenario needs a mesh with 6 corner nodes")
    constraints = DofConstraints.fix_nodes(mesh.corner_nodes)
    integrator = ImplicitIntegrator(mesh, params, cfg.integrator_config(),
                                    constraints, curvature=cfg.curvature)
    state = State.rest(mesh)
    center = central_node(mesh)
    z0 = state.positions[3 * center + 2]
    deflection = [0.0]
    kinetic = [0.0]

    def post(st, contact, report):
        deflection.append(st.positions[3 * center + 2] - z0)
        kinetic.append(integrator.kinetic_energy(st))

    result = _run_loop(integrator, state, cfg.duration, cfg.frames_every,
                       post_step=post, frame_callback=frame_callback,
                       collect_frames=collect_frames)
    result.metrics["midpoint_deflection"] = np.array(deflection)
    result.metrics["kinetic_energy"] = np.array(kinetic)
    return result


# --- contact drop -----------------------------------------------------------------

def run_contact_drop(mesh: NetMesh, cfg: ScenarioConfig,
                     params: MaterialParams = DEFAULT_MATERIAL,
                     surface: ContactSurface = None,
                     frame_callback=None, collect_frames=True) -> RunResult:
    """Free net released above a rigid surface; drapes under gravity."""
    from .contact import make_surface
    if surface is None:
        surface = make_surface(cfg.surface_spec)
    integrator = ImplicitIntegrator(mesh, params, cfg.integrator_config(),
                                    curvature=cfg.curvature)
    state = State.rest(mesh)
    pos = state.nodal_positions()
    pos[:, 2] += cfg.drop_height

    contact_count = [0]
    kinetic = [integrator.kinetic_energy(state)]
    max_penetration = [0.0]
    max_crossing = [0.0]
    prev_pos = [state.nodal_positions().copy()]

    def post(st, contact, report):
        contact_count.append(len(contact) if contact is not None else 0)
        kinetic.append(integrator.kinetic_energy(st))
        max_penetration.append(float(surface.solid_depth(st.positions).max()))
        max_crossing.append(_crossing_penetration(prev_pos[0], st, surface))
        prev_pos[0] = st.nodal_positions().copy()

    result = _run_loop(integrator, state, cfg.duration, cfg.frames_every,
                       surface=surface, post_step=post, frame_callback=frame_callback,
                       zero_velocity=cfg.zero_velocity, collect_frames=collect_frames)
    result.metrics["contact_count"] = np.array(contact_count)
    result.metrics["kinetic_energy"] = np.array(kinetic)
    result.metrics["max_penetration"] = np.array(max_penetration)
    result.metrics["max_crossing_penetration"] = np.array(max_crossing)
    return result


# --- fold ---------------------------------------------------------------------------

def fold_motions(mesh: NetMesh, cfg: ScenarioConfig) -> list:
    """Straight in-plane paths shrinking every junction toward the center."""
    motions = []
    for node in mesh.junction_nodes:
        start = mesh.node_positions[node].copy()
        target = start.copy()
        target[:2] *= cfg.target_scale
        motions.append(PrescribedMotion(int(node), start, target, cfg.fold_speed))
    return motions


def run_fold(mesh: NetMesh, cfg: ScenarioConfig,
             params: MaterialParams = DEFAULT_MATERIAL,
             frame_callback=None, collect_frames=True) -> RunResult:
    """Shrink the junction grid toward the center; free thread segments sag
    into hanging loops between the moving junctions."""
    if mesh.junction_nodes.size == 0:
        raise ValueError("fold scenario needs junction nodes")
    motions = fold_motions(mesh, cfg)
    duration = cfg.duration
    if duration is None or duration <= 0.0:
        duration = max(m.arrival_time for m in motions) + cfg.settle_time
    constraints = DofConstraints(prescribed={m.node: m for m in motions})
    integrator = ImplicitIntegrator(mesh, params, cfg.integrator_config(),
                                    constraints, curvature=cfg.curvature)
    state = State.rest(mesh)
    result = _run_loop(integrator, state, duration, cfg.frames_every,
                       frame_callback=frame_callback, collect_frames=collect_frames)
    final = result.final_state.nodal_positions()
    errors = [np.linalg.norm(final[m.node] - m.target) for m in motions]
    result.metrics["max_junction_error"] = np.array([max(errors)])
    return result


# --- shoot --------------------------------------------------------------------------

def _with_corner_mass(mesh: NetMesh, corner_mass: float) -> NetMesh:
    extra = mesh.extra_point_mass.copy()
    extra[mesh.corner_nodes] = corner_mass
    return NetMesh(mesh.node_positions.copy(), mesh.stretch_nodes.copy(),
                   mesh.stretch_rest.copy(), mesh.bend_nodes.copy(),
                   mesh.bend_voronoi.copy(), mesh.bend_active.copy(),
                   mesh.junction_nodes.copy(), mesh.corner_nodes.copy(), extra)


def _corner_radial_directions(mesh: NetMesh, positions: np.ndarray) -> np.ndarray:
    """Outward in-plane unit direction of each corner; falls back to the
    undeformed corner azimuth for (near-)coincident corners."""
    dirs = np.zeros((6, 3))
    for idx, node in enumerate(mesh.corner_nodes):
        xy = positions.reshape(-1, 3)[node, :2]
        if np.linalg.norm(xy) < 1e-9:
            xy = mesh.node_positions[node, :2]
        dirs[idx, :2] = xy / np.linalg.norm(xy)
    return dirs


def _activation_mask(mesh: NetMesh, positions: np.ndarray, bag_point, direction,
                     rule: str) -> np.ndarray:
    """Bend triples count as deployed once their nodes passed the bag plane."""
    depth = (positions.reshape(-1, 3) - np.asarray(bag_point)) @ np.asarray(direction)
    node_out = depth > 0.0
    per_node = node_out[mesh.bend_nodes]
    if rule == "all-nodes":
        return per_node.all(axis=1)
    if rule == "any-node":
        return per_node.any(axis=1)
    raise ValueError(f"unknown activation rule {rule!r}")


def run_shoot(mesh: NetMesh, folded: State, cfg: ScenarioConfig,
              params: MaterialParams = DEFAULT_MATERIAL,
              frame_callback=None, collect_frames=True) -> RunResult:
    """Deploy a folded net by shooting its six corner masses.

    Corner velocities are speed * (sin(theta) outward + cos(theta) along
    the flight axis +z). Bend elements start inactive and activate
    permanently once their nodes pass the bag plane z = 0.
    """
    shoot_mesh = _with_corner_mass(mesh, cfg.corner_mass)
    integrator = ImplicitIntegrator(shoot_mesh, params, cfg.integrator_config(),
                                    curvature=cfg.curvature)
    state = State(folded.positions.copy(), np.zeros_like(folded.velocities), 0.0)
    theta = math.radians(cfg.shoot_angle)
    radial = _corner_radial_directions(shoot_mesh, state.positions)
    axis = np.array([0.0, 0.0, 1.0])
    vel = state.nodal_velocities()
    vel[shoot_mesh.corner_nodes] = cfg.shoot_speed * (
        math.sin(theta) * radial + math.cos(theta) * axis)

    bag_point = np.zeros(3)
    active = _activation_mask(shoot_mesh, state.positions, bag_point, axis,
                              cfg.activation_rule)
    integrator.assembler.set_bend_active(active)
    areas = [spread_area(state.positions, shoot_mesh.corner_nodes, axis)]
    activation_counts = [int(active.sum())]
    energies = [integrator.elastic_energy(state) + integrator.kinetic_energy(state)]

    def pre(st, t_next):
        nonlocal active
        now = _activation_mask(shoot_mesh, st.positions, bag_point, axis,
                               cfg.activation_rule)
        new = active | now
        if new.sum() != active.sum():
            active = new
            integrator.assembler.set_bend_active(active)

    def post(st, contact, report):
        areas.append(spread_area(st.positions, shoot_mesh.corner_nodes, axis))
        activation_counts.append(int(active.sum()))
        energies.append(integrator.elastic_energy(st) + integrator.kinetic_energy(st))

    result = _run_loop(integrator, state, cfg.duration, cfg.frames_every,
                       pre_step=pre, post_step=post, frame_callback=frame_callback,
                       collect_frames=collect_frames)
    result.metrics["spread_area"] = np.array(areas)
    result.metrics["bend_active_count"] = np.array(activation_counts)
    result.metrics["total_energy"] = np.array(energies)
    return result


# --- close --------------------------------------------------------------------------

def run_close(mesh: NetMesh, folded: State, cfg: ScenarioConfig,
              params: MaterialParams = DEFAULT_MATERIAL,
              frame_callback=None, collect_frames=True, trigger: bool = True) -> RunResult:
    """Shoot the folded net downward onto a sphere and close the corners.

    The sphere (upper hemisphere height field, radius ``sphere_radius``)
    sits at the origin; the net bag starts on the plane
    z = sphere_radius + standoff and flies toward -z. After
    ``trigger_time`` the six corners follow straight prescribed paths to
    the common destination at ``close_speed``.
    """
    close_mesh = _with_corner_mass(mesh, cfg.corner_mass)
    launch_z = cfg.sphere_radius + cfg.standoff
    integrator = ImplicitIntegrator(close_mesh, params, cfg.integrator_config(),
                                    curvature=cfg.curvature)

    pos = folded.nodal_positions().copy()
    pos[:, 2] = launch_z - pos[:, 2]  # mirror the hanging loops behind the bag plane
    state = State(pos.ravel(), np.zeros(pos.size), 0.0)
    theta = math.radians(cfg.shoot_angle)
    radial = _corner_radial_directions(close_mesh, state.positions)
    axis = np.array([0.0, 0.0, -1.0])
    vel = state.nodal_velocities()
    vel[close_mesh.corner_nodes] = cfg.shoot_speed * (
        math.sin(theta) * radial + math.cos(theta) * axis)

    bag_point = np.array([0.0, 0.0, launch_z])
    active = _activation_mask(close_mesh, state.positions, bag_point, axis,
                              cfg.activation_rule)
    integrator.assembler.set_bend_active(active)
    surface = HemisphereSurface(cfg.sphere_radius)

    contact_count = [0]
    corner_error = [float(np.linalg.norm(
        state.nodal_positions()[close_mesh.corner_nodes]
        - np.asarray(cfg.destination), axis=1).max())]
    max_penetration = [0.0]
    max_crossing = [0.0]
    prev_pos = [state.nodal_positions().copy()]
    triggered = [False]
    first_contact = [math.inf]

    def pre(st, t_next):
        nonlocal active
        now = _activation_mask(close_mesh, st.positions, bag_point, axis,
                               cfg.activation_rule)
        new = active | now
        if new.sum() != active.sum():
            active = new
            integrator.assembler.set_bend_active(active)
        if trigger and not triggered[0] and st.time >= cfg.trigger_time - 1e-12:
            motions = {}
            p = st.nodal_positions()
            for node in close_mesh.corner_nodes:
                motions[int(node)] = PrescribedMotion(
                    int(node), p[node].copy(), np.asarray(cfg.destination, dtype=np.float64),
                    cfg.close_speed, start_time=st.time)
            integrator.set_constraints(DofConstraints(prescribed=motions))
            triggered[0] = True

    def post(st, contact, report):
        n_contact = len(contact) if contact is not None else 0
        contact_count.append(n_contact)
        if n_contact and not math.isfinite(first_contact[0]):
            first_contact[0] = st.time
        p = st.nodal_positions()
        corner_error.append(float(np.linalg.norm(
            p[close_mesh.corner_nodes] - np.asarray(cfg.destination), axis=1).max()))
        max_penetration.append(float(surface.solid_depth(st.positions).max()))
        max_crossing.append(_crossing_penetration(prev_pos[0], st, surface))
        prev_pos[0] = st.nodal_positions().copy()

    result = _run_loop(integrator, state, cfg.duration, cfg.frames_every,
                       surface=surface, pre_step=pre, post_step=post,
                       frame_callback=frame_callback, zero_velocity=cfg.zero_velocity,
                       collect_frames=collect_frames)
    result.metrics["contact_count"] = np.array(contact_count)
    result.metrics["corner_distance_to_destination"] = np.array(corner_error)
    result.metrics["max_penetration"] = np.array(max_penetration)
    result.metrics["max_crossing_penetration"] = np.array(max_crossing)
    result.metrics["first_contact_time"] = np.array([first_contact[0]])
    return result


def _crossing_penetration(start_positions, state, surface) -> float:
    """Largest end-of-step height-field penetration among nodes that began
    the step on or above the surface sheet (the guarantee the contact
    corrector provides; nodes already under the sheet carry no constraint)."""
    end = state.nodal_positions()
    above = start_positions[:, 2] >= surface.height(start_positions[:, 0],
                                                    start_positions[:, 1]) - 1e-9
    inside = surface.footprint(end[:, 0], end[:, 1])
    gap = surface.height(end[:, 0], end[:, 1]) - end[:, 2]
    eligible = above & inside
    return float(gap[eligible].max()) if eligible.any() else -np.inf


# --- suspended-cable relaxation ---------------------------------------------------------

def hang_cable(length: float, end_shrink: float, n_nodes: int = 100,
               n_spans: int = 1, params: MaterialParams = None,
               gravity: float = 1000.0, time_step: float = None,
               velocity_tol_factor: float = 1e-5, t_max: float = 20.0,
               curvature: str = "modified") -> float:
    """Relax a cable pinned at n_spans + 1 equally spaced, shrunk supports
    and return its maximum sag.

    The cable of arclength ``length`` hangs between supports spanning
    ``length - end_shrink`` in total. The default material is thin enough
    (r0 = 0.05 mm) that bending is negligible against gravity while the
    axial strain stays small: the stretching-dominated regime a catenary
    describes. Initial shape is an exact-arclength V per span; the run
    relaxes with near-critical damping until the largest nodal speed
    drops below velocity_tol_factor * sqrt(g * sag).
    """
    if params is None:
        params = MaterialParams(young_modulus=1e9, rod_radius=5e-5, density=1000.0)
    if end_shrink <= 0.0 or end_shrink >= length:
        raise ValueError("end_shrink must lie in (0, length)")
    if (n_nodes - 1) % n_spans:
        raise ValueError(f"{n_nodes - 1} segments do not divide into {n_spans} spans")
    from . import oracles

    mesh = generate_rod(length, n_nodes)
    segs_per_span = (n_nodes - 1) // n_spans
    span_arclen = length / n_spans
    span_gap = (length - end_shrink) / n_spans
    depth = 0.5 * math.sqrt(span_arclen**2 - span_gap**2)
    seg = length / (n_nodes - 1)

    pos = np.zeros((n_nodes, 3))
    for node in range(n_nodes):
        span, local = divmod(node, segs_per_span)
        if node == n_nodes - 1:
            span, local = n_spans - 1, segs_per_span
        left = np.array([span * span_gap, 0.0, 0.0])
        right = np.array([(span + 1) * span_gap, 0.0, 0.0])
        mid = 0.5 * (left + right) - np.array([0.0, 0.0, depth])
        s = local * seg
        half = 0.5 * span_arclen
        if s <= half:
            pos[node] = left + (mid - left) * (s / half)
        else:
            pos[node] = mid + (right - mid) * ((s - half) / half)

    anchors = [k * segs_per_span for k in range(n_spans + 1)]
    constraints = DofConstraints.fix_nodes(anchors)
    sag_ref = oracles.catenary_sag(span_arclen, end_shrink / n_spans)
    omega = math.sqrt(gravity / max(sag_ref, 1e-9))
    if time_step is None:
        time_step = 0.1 / omega
    config = IntegratorConfig(time_step=time_step, damping=2.0 * omega,
                              gravity=(0.0, 0.0, -gravity),
                              newton_tolerance=1e-8 * params.linear_density
                              * gravity * length)
    integ = ImplicitIntegrator(mesh, params, config, constraints, curvature)
    state = State(pos.ravel(), np.zeros(pos.size), 0.0)
    v_tol = velocity_tol_factor * math.sqrt(gravity * max(sag_ref, 1e-9))
    n_max = int(round(t_max / time_step))
    for k in range(n_max):
        state, _ = integ.step(state)
        if (k + 1) % 25 == 0 and float(np.abs(state.velocities).max()) < v_tol:
            break
    return float(-state.nodal_positions()[:, 2].min())


# --- derived metrics -------------------------------------------------------------------

def spread_area(positions, corner_nodes, axis=(0.0, 0.0, 1.0)) -> float:
    """Area of the polygon spanned by the corners, projected on the plane
    normal to the flight axis (shoelace formula, corners in stored
    azimuthal order)."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)[np.asarray(corner_nodes)]
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    u = pos @ e1
    v = pos @ e2
    return 0.5 * abs(float(np.dot(u, np.roll(v, -1)) - np.dot(v, np.roll(u, -1))))


@dataclass
class StressField:
    """Per-element longitudinal stresses.

    stretch holds E*eps per stretch element, bend holds E*(kappa/voronoi)*r0
    per bend triple (zero for inactive triples), and edge_total is the sum
    of each edge's stretching stress and the bending stresses of the
    triples it belongs to.
    """

    stretch: np.ndarray
    bend: np.ndarray
    edge_total: np.ndarray


def _edge_lookup(mesh: NetMesh) -> dict:
    return {(min(i, j), max(i, j)): idx
            for idx, (i, j) in enumerate(mesh.stretch_nodes)}


def stress_field(state, mesh: NetMesh, params: MaterialParams,
                 curvature: str = "modified") -> StressField:
    positions = getattr(state, "positions", state)
    q3 = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    e = q3[mesh.stretch_nodes[:, 1]] - q3[mesh.stretch_nodes[:, 0]]
    lens = np.linalg.norm(e, axis=1)
    eps = lens / mesh.stretch_rest - 1.0
    sigma_s = params.young_modulus * eps
    edge_total = sigma_s.copy()

    sigma_b = np.zeros(mesh.n_bend)
    act = np.flatnonzero(mesh.bend_active)
    if act.size:
        i, j, k = (mesh.bend_nodes[act, c] for c in range(3))
        e1 = q3[j] - q3[i]
        e2 = q3[k] - q3[j]
        t1 = e1 / np.linalg.norm(e1, axis=1)[:, None]
        t2 = e2 / np.linalg.norm(e2, axis=1)[:, None]
        if curvature == "exact":
            c12 = np.einsum("na,na->n", t1, t2)
            kappa = 2.0 * np.linalg.norm(np.cross(t1, t2), axis=1) / (1.0 + c12)
        else:
            kappa = np.linalg.norm(t2 - t1, axis=1)
        sigma_b[act] = params.young_modulus * kappa / mesh.bend_voronoi[act] \
            * params.rod_radius
        lookup = _edge_lookup(mesh)
        first = np.array([lookup[(min(a, b), max(a, b))] for a, b in zip(i, j)])
        second = np.array([lookup[(min(a, b), max(a, b))] for a, b in zip(j, k)])
        np.add.at(edge_total, first, sigma_b[act])
        np.add.at(edge_total, second, sigma_b[act])
    return StressField(sigma_s, sigma_b, edge_total)
