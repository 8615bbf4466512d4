"""Node/edge discretizations of rods and woven hexagonal nets.

A mesh stores the undeformed geometry plus its element lists: stretch
elements (node pair, rest length) and bend triples (three consecutive
nodes along one thread, with the Voronoi length used as the integration
length of the discrete curvature at the center node). Lumped nodal
masses are derived on demand from a material, never stored.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMeshError, MeshParseError
from .materials import MaterialParams

log = logging.getLogger(__name__)

_FLOAT_FMT = "%.17g"


@dataclass
class NetMesh:
    """Discretized net/rod structure in its undeformed configuration.

    Attributes:
        node_positions: (N, 3) undeformed nodal coordinates in m.
        stretch_nodes: (Ns, 2) node index pairs (i, j) of stretch elements.
        stretch_rest: (Ns,) rest lengths |x_j - x_i| in m.
        bend_nodes: (Nb, 3) node index triples (i, j, k); curvature lives
            at the center node j.
        bend_voronoi: (Nb,) Voronoi lengths, half-sum of the two edge rest
            lengths of the triple.
        bend_active: (Nb,) activation flags; inactive triples contribute
            no bending energy (used by the shooting phase).
        junction_nodes: indices of thread crossings (empty for plain rods).
        corner_nodes: the six outer vertices of a hexagonal net, in
            azimuthal order (empty for plain rods).
        extra_point_mass: (N,) additional lumped point mass per node in kg
            (e.g. corner bullets), on top of the rod's own mass.
    """

    node_positions: np.ndarray
    stretch_nodes: np.ndarray
    stretch_rest: np.ndarray
    bend_nodes: np.ndarray
    bend_voronoi: np.ndarray
    bend_active: np.ndarray = field(default=None)
    junction_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    corner_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    extra_point_mass: np.ndarray = field(default=None)

    def __post_init__(self):
        self.node_positions = np.ascontiguousarray(self.node_positions, dtype=np.float64)
        self.stretch_nodes = np.ascontiguousarray(self.stretch_nodes, dtype=np.intp).reshape(-1, 2)
        self.stretch_rest = np.ascontiguousarray(self.stretch_rest, dtype=np.float64)
        self.bend_nodes = np.ascontiguousarray(self.bend_nodes, dtype=np.intp).reshape(-1, 3)
        self.bend_voronoi = np.ascontiguousarray(self.bend_voronoi, dtype=np.float64)
        if self.bend_active is None:
            self.bend_active = np.ones(len(self.bend_nodes), dtype=bool)
        self.bend_active = np.ascontiguousarray(self.bend_active, dtype=bool)
        self.junction_nodes = np.ascontiguousarray(self.junction_nodes, dtype=np.intp)
        self.corner_nodes = np.ascontiguousarray(self.corner_nodes, dtype=np.intp)
        if self.extra_point_mass is None:
            self.extra_point_mass = np.zeros(self.n_nodes, dtype=np.float64)
        self.extra_point_mass = np.ascontiguousarray(self.extra_point_mass, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return len(self.node_positions)

    @property
    def n_stretch(self) -> int:
        return len(self.stretch_nodes)

    @property
    def n_bend(self) -> int:
        return len(self.bend_nodes)

    def counts(self) -> tuple:
        """(N, Ns, Nb) summary."""
        return self.n_nodes, self.n_stretch, self.n_bend

    def half_rest_sums(self) -> np.ndarray:
        """(N,) half-sum of rest lengths of the edges incident to each node."""
        hs = np.zeros(self.n_nodes)
        np.add.at(hs, self.stretch_nodes[:, 0], 0.5 * self.stretch_rest)
        np.add.at(hs, self.stretch_nodes[:, 1], 0.5 * self.stretch_rest)
        return hs

    def lumped_masses(self, params: MaterialParams) -> np.ndarray:
        """(N,) diagonal lumped masses: rho*A times the half-sum of incident
        rest lengths, plus any extra point mass."""
        return params.linear_density * self.half_rest_sums() + self.extra_point_mass

    def validate(self, geometric: bool = True) -> None:
        """Raise InvalidMeshError if any structural invariant is violated.

        With ``geometric`` set, rest lengths must also match the undeformed
        node distances and Voronoi lengths the half-sum of their edge rests.
        """
        n = self.n_nodes
        if n == 0:
            raise InvalidMeshError("mesh has no nodes")
        if not np.all(np.isfinite(self.node_positions)):
            raise InvalidMeshError("non-finite node position")
        for name, idx in (("stretch", self.stretch_nodes), ("bend", self.bend_nodes),
                          ("junction", self.junction_nodes), ("corner", self.corner_nodes)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise InvalidMeshError(f"{name} element references node out of range 0..{n - 1}")
        if np.any(self.stretch_rest <= 0.0):
            bad = int(np.argmax(self.stretch_rest <= 0.0))
            raise InvalidMeshError(f"stretch element {bad} has nonpositive rest length")
        if np.any(self.bend_voronoi <= 0.0):
            bad = int(np.argmax(self.bend_voronoi <= 0.0))
            raise InvalidMeshError(f"bend element {bad} has nonpositive Voronoi length")
        if self.corner_nodes.size not in (0, 6):
            raise InvalidMeshError("corner_nodes must hold exactly 6 indices (or none)")

        pairs = {}
        for e, (i, j) in enumerate(self.stretch_nodes):
            if i == j:
                raise InvalidMeshError(f"stretch element {e} is degenerate (node {i})")
            key = (min(i, j), max(i, j))
            if key in pairs:
                raise InvalidMeshError(f"duplicate stretch element {key}")
            pairs[key] = e
        for e, (i, j, k) in enumerate(self.bend_nodes):
            for a, b in ((i, j), (j, k)):
                if (min(a, b), max(a, b)) not in pairs:
                    raise InvalidMeshError(
                        f"bend element {e} uses edge ({a},{b}) that is not a stretch element")

        if geometric:
            diff = self.node_positions[self.stretch_nodes[:, 1]] - \
                self.node_positions[self.stretch_nodes[:, 0]]
            dist = np.linalg.norm(diff, axis=1)
            rel = np.abs(dist - self.stretch_rest) / self.stretch_rest
            if rel.size and rel.max() > 1e-8:
                bad = int(np.argmax(rel))
                raise InvalidMeshError(
                    f"stretch element {bad} rest length {self.stretch_rest[bad]!r} "
                    f"differs from node distance {dist[bad]!r}")
            edge_rest = {}
            for e, (i, j) in enumerate(self.stretch_nodes):
                edge_rest[(min(i, j), max(i, j))] = self.stretch_rest[e]
            for e, (i, j, k) in enumerate(self.bend_nodes):
                half = 0.5 * (edge_rest[(min(i, j), max(i, j))] + edge_rest[(min(j, k), max(j, k))])
                if abs(half - self.bend_voronoi[e]) > 1e-12 * half:
                    raise InvalidMeshError(
                        f"bend element {e} Voronoi length {self.bend_voronoi[e]!r} "
                        f"is not the half-sum of its edge rests {half!r}")


@dataclass
class State:
    """Kinematic state: stacked nodal positions and velocities at a time."""

    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).ravel()
        self.velocities = np.ascontiguousarray(self.velocities, dtype=np.float64).ravel()
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have the same length")
        if self.positions.size % 3:
            raise ValueError("state length must be a multiple of 3")

    @classmethod
    def rest(cls, mesh: NetMesh, time: float = 0.0) -> "State":
        return cls(mesh.node_positions.copy().ravel(),
                   np.zeros(3 * mesh.n_nodes), time)

    @property
    def n_nodes(self) -> int:
        return self.positions.size // 3

    def nodal_positions(self) -> np.ndarray:
        return self.positions.reshape(-1, 3)

    def nodal_velocities(self) -> np.ndarray:
        return self.velocities.reshape(-1, 3)

    def copy(self) -> "State":
        return State(self.positions.copy(), self.velocities.copy(), self.time)

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.positions)) or not np.all(np.isfinite(self.velocities)):
            raise InvalidMeshError("state contains non-finite entries")


def generate_rod(length: float, node_count: int) -> NetMesh:
    """Straight rod along x, equally subdivided.

    Produces node_count - 1 stretch elements and node_count - 2 bend
    triples (one per interior node).
    """
    if node_count < 3:
        raise InvalidMeshError(f"a rod needs at least 3 nodes, got {node_count}")
    if not (length > 0.0):
        raise InvalidMeshError(f"rod length must be positive, got {length}")
    xs = np.linspace(0.0, length, node_count)
    pos = np.zeros((node_count, 3))
    pos[:, 0] = xs
    stretch = np.column_stack([np.arange(node_count - 1), np.arange(1, node_count)])
    rest = np.diff(xs)  # from the actual coordinates, so the rest state is strain-free
    bend = np.column_stack([np.arange(node_count - 2),
                            np.arange(1, node_count - 1),
                            np.arange(2, node_count)])
    voronoi = 0.5 * (rest[:-1] + rest[1:])
    mesh = NetMesh(pos, stretch, rest, bend, voronoi)
    log.info("generated rod: N=%d Ns=%d Nb=%d", *mesh.counts())
    return mesh


def generate_hexagonal_web(side_length: float, grid_interval: float,
                           subdivisions_per_cell: int,
                           layout: str = "ring-radial") -> NetMesh:
    """Planar hexagonal net in the z=0 plane, centered at the origin.

    The thread layout places junctions on concentric hexagonal rings
    spaced ``grid_interval`` apart (ring r carries 6r junctions). Unit
    cells are the junction-to-junction segments along each ring plus one
    radial connector from every junction to its inward neighbor; each
    cell is split into ``subdivisions_per_cell + 1`` equal segments.

    Bend triples follow continuous threads only: closed loops around
    each ring (crossing junctions) and the interior of each radial cell.
    No triple couples two different threads at a crossing, so the woven
    net transmits no bending moment between crossing threads.

    Corner nodes are the six outermost ring vertices, in azimuthal order.
    """
    if layout != "ring-radial":
        raise InvalidMeshError(f"unknown layout {layout!r}")
    if not (side_length > 0.0 and grid_interval > 0.0):
        raise InvalidMeshError("side_length and grid_interval must be positive")
    rings_f = side_length / grid_interval
    rings = int(round(rings_f))
    if abs(rings_f - rings) > 1e-9 or rings < 1:
        raise InvalidMeshError(
            f"side_length {side_length} is not a positive multiple of grid_interval {grid_interval}")
    sub = int(subdivisions_per_cell)
    if sub < 0:
        raise InvalidMeshError("subdivisions_per_cell must be >= 0")

    # Unit directions toward the six hexagon vertices.
    angles = np.pi / 3.0 * np.arange(6)
    u = np.column_stack([np.cos(angles), np.sin(angles), np.zeros(6)])

    positions = [np.zeros(3)]
    junction_index = {(0, 0, 0): 0}
    for r in range(1, rings + 1):
        for s in range(6):
            for m in range(r):
                p = grid_interval * ((r - m) * u[s] + m * u[(s + 1) % 6])
                junction_index[(r, s, m)] = len(positions)
                positions.append(p)

    def ring_sequence(r):
        """Junction keys around ring r in azimuthal order."""
        return [(r, s, m) for s in range(6) for m in range(r)]

    def inward(key):
        r, s, m = key
        if r == 1:
            return (0, 0, 0)
        if m < r - 1:
            return (r - 1, s, m)
        return (r - 1, (s + 1) % 6, 0)

    stretch_nodes = []
    stretch_rest = []
    bend_nodes = []
    bend_voronoi = []
    edge_rest = {}

    def subdivide(a_idx, b_idx):
        """Create interior nodes and segments of one cell; return its node chain."""
        pa = positions[a_idx]
        pb = positions[b_idx]
        chain = [a_idx]
        for q in range(1, sub + 1):
            t = q / (sub + 1)
            positions.append((1.0 - t) * pa + t * pb)
            chain.append(len(positions) - 1)
        chain.append(b_idx)
        seg = float(np.linalg.norm(pb - pa)) / (sub + 1)
        for a, b in zip(chain[:-1], chain[1:]):
            stretch_nodes.append((a, b))
            stretch_rest.append(seg)
            edge_rest[(min(a, b), max(a, b))] = seg
        return chain

    def add_triple(i, j, k):
        half = 0.5 * (edge_rest[(min(i, j), max(i, j))]
                      + edge_rest[(min(j, k), max(j, k))])
        bend_nodes.append((i, j, k))
        bend_voronoi.append(half)

    # Ring threads: closed loops, bend triples at every chain node.
    for r in range(1, rings + 1):
        keys = ring_sequence(r)
        loop = []
        for a, b in zip(keys, keys[1:] + keys[:1]):
            chain = subdivide(junction_index[a], junction_index[b])
            loop.extend(chain[:-1])
        n_loop = len(loop)
        for p in range(n_loop):
            add_triple(loop[p - 1], loop[p], loop[(p + 1) % n_loop])

    # Radial connectors: one inward edge per junction; bend triples only
    # at the interior nodes of each cell.
    for r in range(1, rings + 1):
        for key in ring_sequence(r):
            chain = subdivide(junction_index[inward(key)], junction_index[key])
            for p in range(1, len(chain) - 1):
                add_triple(chain[p - 1], chain[p], chain[p + 1])

    corners = np.array([junction_index[(rings, s, 0)] for s in range(6)], dtype=np.intp)
    mesh = NetMesh(
        np.array(positions),
        np.array(stretch_nodes, dtype=np.intp),
        np.array(stretch_rest),
        np.array(bend_nodes, dtype=np.intp) if bend_nodes else np.zeros((0, 3), dtype=np.intp),
        np.array(bend_voronoi),
        junction_nodes=np.arange(len(junction_index), dtype=np.intp),
        corner_nodes=corners,
    )
    log.info("generated hexagonal web (side=%g, grid=%g, sub=%d): "
             "N=%d Ns=%d Nb=%d, %d junctions",
             side_length, grid_interval, sub, *mesh.counts(), len(mesh.junction_nodes))
    return mesh


def central_node(mesh: NetMesh) -> int:
    """Index of the node closest to the centroid of the corners (or origin)."""
    if mesh.corner_nodes.size:
        center = mesh.node_positions[mesh.corner_nodes].mean(axis=0)
    else:
        center = mesh.node_positions.mean(axis=0)
    return int(np.argmin(np.linalg.norm(mesh.node_positions - center, axis=1)))


def save_mesh(mesh: NetMesh, path) -> None:
    """Write a mesh in the plain-text section format (17 significant digits)."""
    with open(path, "w") as fh:
        fh.write("# dernet mesh\n")
        fh.write("*nodes\n")
        for i, p in enumerate(mesh.node_positions):
            fh.write(("%d " + " ".join([_FLOAT_FMT] * 3) + "\n") % (i, p[0], p[1], p[2]))
        fh.write("*stretch\n")
        for (i, j), rest in zip(mesh.stretch_nodes, mesh.stretch_rest):
            fh.write(("%d %d " + _FLOAT_FMT + "\n") % (i, j, rest))
        fh.write("*bend\n")
        for (i, j, k), vor in zip(mesh.bend_nodes, mesh.bend_voronoi):
            fh.write(("%d %d %d " + _FLOAT_FMT + "\n") % (i, j, k, vor))
        fh.write("*junctions\n")
        for i in mesh.junction_nodes:
            fh.write("%d\n" % i)
        fh.write("*corners\n")
        for i in mesh.corner_nodes:
            fh.write("%d\n" % i)
        fh.write("*pointmass\n")
        for i in np.flatnonzero(mesh.extra_point_mass):
            fh.write(("%d " + _FLOAT_FMT + "\n") % (i, mesh.extra_point_mass[i]))


_SECTIONS = ("*nodes", "*stretch", "*bend", "*junctions", "*corners", "*pointmass")


def load_mesh(path) -> NetMesh:
    """Parse a mesh file written by :func:`save_mesh` and validate it."""
    nodes = []
    stretch = []
    bend = []
    junctions = []
    corners = []
    pointmass = []
    section = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("*"):
                if line not in _SECTIONS:
                    raise MeshParseError(path, lineno, f"unknown section {line!r}")
                section = line
                continue
            if section is None:
                raise MeshParseError(path, lineno, "data before any section header")
            fields = line.split()
            try:
                if section == "*nodes":
                    ident = int(fields[0])
                    x, y, z = (float(v) for v in fields[1:4])
                    if len(fields) != 4:
                        raise ValueError
                    if ident != len(nodes):
                        raise MeshParseError(
                            path, lineno, f"node ids must be consecutive, expected {len(nodes)}")
                    nodes.append((x, y, z))
                elif section == "*stretch":
                    if len(fields) != 3:
                        raise ValueError
                    stretch.append((int(fields[0]), int(fields[1]), float(fields[2]), lineno))
                elif section == "*bend":
                    if len(fields) != 4:
                        raise ValueError
                    bend.append((int(fields[0]), int(fields[1]), int(fields[2]),
                                 float(fields[3]), lineno))
                elif section == "*junctions":
                    junctions.extend(int(v) for v in fields)
                elif section == "*corners":
                    corners.extend(int(v) for v in fields)
                elif section == "*pointmass":
                    if len(fields) != 2:
                        raise ValueError
                    pointmass.append((int(fields[0]), float(fields[1])))
            except MeshParseError:
                raise
            except ValueError:
                raise MeshParseError(path, lineno, f"malformed {section[1:]} record {line!r}")

    n = len(nodes)
    if n == 0:
        raise MeshParseError(path, 0, "no *nodes section")

    def check_index(i, lineno):
        if not (0 <= i < n):
            raise MeshParseError(path, lineno, f"node index {i} out of range 0..{n - 1}")

    for i, j, rest, lineno in stretch:
        check_index(i, lineno)
        check_index(j, lineno)
        if rest <= 0.0:
            raise MeshParseError(path, lineno, f"nonpositive rest length {rest!r}")
    for i, j, k, vor, lineno in bend:
        for idx in (i, j, k):
            check_index(idx, lineno)
        if vor <= 0.0:
            raise MeshParseError(path, lineno, f"nonpositive Voronoi length {vor!r}")

    extra = np.zeros(n)
    for i, m in pointmass:
        if not (0 <= i < n):
            raise MeshParseError(path, 0, f"pointmass node index {i} out of range")
        extra[i] = m

    mesh = NetMesh(
        np.array(nodes),
        np.array([(i, j) for i, j, _, _ in stretch], dtype=np.intp) if stretch
        else np.zeros((0, 2), dtype=np.intp),
        np.array([r for _, _, r, _ in stretch]),
        np.array([(i, j, k) for i, j, k, _, _ in bend], dtype=np.intp) if bend
        else np.zeros((0, 3), dtype=np.intp),
        np.array([v for _, _, _, v, _ in bend]),
        junction_nodes=np.array(junctions, dtype=np.intp),
        corner_nodes=np.array(corners, dtype=np.intp),
        extra_point_mass=extra,
    )
    try:
        mesh.validate()
    except InvalidMeshError as exc:
        raise MeshParseError(path, 0, str(exc))
    return mesh
