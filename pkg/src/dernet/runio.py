"""Scenario config files, run manifests and output writers.

Config files are flat ``key = value`` text with ``#`` comments. Values
with three numbers (gravity, destination) are whitespace separated; a
single gravity number g means (0, 0, g). The mesh is either a path to a
mesh file or an inline generator spec ``rod(length, nodes)`` /
``hexagon(side, grid, subdivisions)``.

A run writes, under its output directory:

* ``manifest.json``   resolved config, content hashes, full file list
  (written before stepping begins);
* ``mesh.txt``        the mesh actually simulated;
* ``frames/*.csv``    one frame per cadence tick, columns id,x,y,z,vx,vy,vz;
* ``stress/*.csv``    per-element stresses at the same cadence;
* ``metrics.csv``     long-form t,name,value series;
* ``steps.csv``       per-step Newton/contact/wall-time reports.

All floats are printed with 17 significant digits so reruns are
byte-identical.
"""

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .materials import MaterialParams
from .mesh import NetMesh, State, generate_hexagonal_web, generate_rod, load_mesh, save_mesh
from .scenarios import SCENARIO_KINDS, ScenarioConfig, default_config, frame_times

_FMT = "%.17g"

_FLOAT_KEYS = {
    "h": "time_step", "tolerance": "tolerance", "mu": "mu", "beta": "beta",
    "duration": "duration", "frames_every": "frames_every",
    "drop_height": "drop_height", "fold_speed": "fold_speed",
    "target_scale": "target_scale", "settle_time": "settle_time",
    "corner_mass": "corner_mass", "shoot_speed": "shoot_speed",
    "shoot_angle": "shoot_angle", "sphere_radius": "sphere_radius",
    "standoff": "standoff", "close_speed": "close_speed",
    "trigger_time": "trigger_time",
}
_STR_KEYS = {
    "scheme": "scheme", "curvature": "curvature", "surface": "surface_spec",
    "activation_rule": "activation_rule", "zero_velocity": "zero_velocity",
}
_INT_KEYS = {"max_newton_iterations": "max_newton_iterations"}
_VEC_KEYS = {"gravity": "gravity", "destination": "destination"}
_MATERIAL_KEYS = ("young_modulus", "rod_radius", "density")
_OTHER_KEYS = ("scenario", "mesh", "initial_state")


@dataclass
class RunSpec:
    """Everything needed to execute one configured run."""

    scenario: ScenarioConfig
    mesh_spec: str
    material: MaterialParams
    initial_state_path: str = None
    config_path: str = None

    def resolved_dict(self) -> dict:
        out = {"mesh": self.mesh_spec,
               "young_modulus": self.material.young_modulus,
               "rod_radius": self.material.rod_radius,
               "density": self.material.density}
        if self.initial_state_path:
            out["initial_state"] = self.initial_state_path
        out.update(asdict(self.scenario))
        return out


def _parse_kv(path) -> dict:
    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot open config {path!r}: {exc}")
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not value:
                raise ConfigError(f"{path}:{lineno}: empty value for {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
    return values


def parse_run_spec(path) -> RunSpec:
    """Read and resolve a scenario config file (defaults materialized)."""
    raw = _parse_kv(path)
    known = set(_FLOAT_KEYS) | set(_STR_KEYS) | set(_INT_KEYS) | set(_VEC_KEYS) \
        | set(_MATERIAL_KEYS) | set(_OTHER_KEYS)
    for key in raw:
        if key not in known:
            raise ConfigError(f"{path}: unknown key {key!r}")
    if "scenario" not in raw:
        raise ConfigError(f"{path}: missing required key 'scenario'")
    kind = raw["scenario"]
    if kind not in SCENARIO_KINDS:
        raise ConfigError(f"{path}: unknown scenario {kind!r}; known: {SCENARIO_KINDS}")
    if "mesh" not in raw:
        raise ConfigError(f"{path}: missing required key 'mesh'")

    overrides = {}
    try:
        for key, attr in _FLOAT_KEYS.items():
            if key in raw:
                overrides[attr] = float(raw[key])
        for key, attr in _INT_KEYS.items():
            if key in raw:
                overrides[attr] = int(raw[key])
        for key, attr in _VEC_KEYS.items():
            if key in raw:
                parts = [float(v) for v in raw[key].replace(",", " ").split()]
                if key == "gravity" and len(parts) == 1:
                    parts = [0.0, 0.0, parts[0]]
                if len(parts) != 3:
                    raise ValueError(f"{key} needs 1 or 3 numbers")
                overrides[attr] = tuple(parts)
        material_values = {"young_modulus": 1e9, "rod_radius": 1e-3, "density": 1000.0}
        for key in _MATERIAL_KEYS:
            if key in raw:
                material_values[key] = float(raw[key])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")
    for key, attr in _STR_KEYS.items():
        if key in raw:
            overrides[attr] = raw[key]

    scenario = default_config(kind, **overrides)
    return RunSpec(scenario=scenario, mesh_spec=raw["mesh"],
                   material=MaterialParams(**material_values),
                   initial_state_path=raw.get("initial_state"),
                   config_path=str(path))


def resolve_mesh(spec: str, base_dir: str = ".") -> NetMesh:
    """Mesh from an inline generator spec or a file path."""
    spec = spec.strip()
    if spec.startswith("rod(") and spec.endswith(")"):
        args = [float(v) for v in spec[4:-1].replace(",", " ").split()]
        if len(args) != 2:
            raise ConfigError("rod(...) takes (length, node_count)")
        return generate_rod(args[0], int(args[1]))
    if spec.startswith("hexagon(") and spec.endswith(")"):
        args = [float(v) for v in spec[8:-1].replace(",", " ").split()]
        if len(args) != 3:
            raise ConfigError("hexagon(...) takes (side, grid_interval, subdivisions)")
        return generate_hexagonal_web(args[0], args[1], int(args[2]))
    path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
    if not os.path.exists(path):
        raise ConfigError(f"mesh file not found: {path}")
    return load_mesh(path)


# --- frame/state CSV ----------------------------------------------------------

def write_frame(path, state: State) -> None:
    pos = state.nodal_positions()
    vel = state.nodal_velocities()
    with open(path, "w", newline="") as fh:
        fh.write("id,x,y,z,vx,vy,vz\n")
        for i in range(state.n_nodes):
            fh.write(("%d," + ",".join([_FMT] * 6) + "\n")
                     % (i, pos[i, 0], pos[i, 1], pos[i, 2],
                        vel[i, 0], vel[i, 1], vel[i, 2]))


def load_frame(path) -> State:
    """Read a frame CSV back into a State (time starts at 0)."""
    positions = []
    velocities = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"x", "y", "z", "vx", "vy", "vz"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise ConfigError(f"{path}: not a frame CSV (need columns {sorted(needed)})")
        for row in reader:
            positions.append([float(row["x"]), float(row["y"]), float(row["z"])])
            velocities.append([float(row["vx"]), float(row["vy"]), float(row["vz"])])
    if not positions:
        raise ConfigError(f"{path}: empty frame")
    return State(np.array(positions).ravel(), np.array(velocities).ravel(), 0.0)


def write_stress(path, field_values) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("elem_type,elem_id,sigma\n")
        for e, sigma in enumerate(field_values.stretch):
            fh.write(("stretch,%d," + _FMT + "\n") % (e, sigma))
        for e, sigma in enumerate(field_values.bend):
            fh.write(("bend,%d," + _FMT + "\n") % (e, sigma))


def write_metrics(path, times, metrics: dict) -> None:
    """Long-form t,name,value CSV. Series aligned with the step grid use
    their own time axis; scalar metrics are stamped with the final time."""
    with open(path, "w", newline="") as fh:
        fh.write("t,name,value\n")
        for name in sorted(metrics):
            series = np.asarray(metrics[name], dtype=np.float64)
            if series.size == len(times):
                for t, v in zip(times, series):
                    fh.write((_FMT + ",%s," + _FMT + "\n") % (t, name, v))
            else:
                for v in series:
                    fh.write((_FMT + ",%s," + _FMT + "\n") % (times[-1], name, v))


def write_steps(path, times, reports) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,newton_iterations,residual_norm,contact_passes,substeps,wall_time\n")
        for t, rep in zip(times[1:], reports):
            fh.write((_FMT + ",%d," + _FMT + ",%d,%d," + _FMT + "\n")
                     % (t, rep.newton_iterations, rep.residual_norm,
                        rep.contact_passes, rep.substeps, rep.wall_time))


# --- manifest --------------------------------------------------------------------

def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def _sha256_text(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunManifest:
    """Resolved run description, written before stepping begins."""

    config: dict
    mesh_hash: str
    config_hash: str
    output_dir: str
    files: list = field(default_factory=list)
    step_wall_times: list = field(default_factory=list)

    def write(self, path) -> None:
        payload = {"config": self.config, "mesh_hash": self.mesh_hash,
                   "config_hash": self.config_hash, "output_dir": self.output_dir,
                   "files": self.files}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def prepare_run_dir(spec: RunSpec, mesh: NetMesh, out_dir, duration: float) -> RunManifest:
    """Create the output tree, save the mesh, and write the manifest
    naming every file the run will produce."""
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "stress"), exist_ok=True)
    mesh_path = os.path.join(out_dir, "mesh.txt")
    save_mesh(mesh, mesh_path)

    cfg = spec.scenario
    n_frames = len(frame_times(duration, cfg.time_step, cfg.frames_every))
    files = ["manifest.json", "mesh.txt", "metrics.csv", "steps.csv"]
    files += [f"frames/frame_{i:06d}.csv" for i in range(n_frames)]
    files += [f"stress/stress_{i:06d}.csv" for i in range(n_frames)]

    resolved = spec.resolved_dict()
    resolved["duration"] = duration
    manifest = RunManifest(
        config=resolved,
        mesh_hash=_sha256_file(mesh_path),
        config_hash=_sha256_text(json.dumps(resolved, sort_keys=True)),
        output_dir=str(out_dir),
        files=sorted(files),
    )
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return manifest
