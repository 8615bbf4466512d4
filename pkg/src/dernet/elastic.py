"""Discrete stretching/bending energies, analytic forces and Hessians.

Energies follow the standard mass-spring/discrete-rod form. Stretching of
an edge with strain eps = |e|/|e_rest| - 1 stores 0.5*EA*eps^2*|e_rest|.
Bending between two consecutive edges with unit tangents t1, t2 stores
0.5*(EI/voronoi)*kappa^2, where kappa is one of two discrete curvature
measures of the turning angle phi:

* ``modified``: kappa = |t2 - t1| = 2*sin(phi/2), bounded by 2 and finite
  even for fully folded triples;
* ``exact``: kappa = 2*|t1 x t2| / (1 + t1.t2) = 2*tan(phi/2), singular as
  phi -> 180 degrees.

Both bending energies are smooth functions of c = t1.t2 alone, so their
edge-space gradients and Hessians share one code path parameterized by
dE/dc and d2E/dc2.

Per-element functions below are the readable reference implementation;
:class:`ElasticAssembler` evaluates the same quantities vectorized over
all elements with a precomputed global sparsity pattern.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError
from .materials import MaterialParams

CURVATURE_MODES = ("modified", "exact")

_I3 = np.eye(3)


@dataclass(frozen=True)
class EdgeGeometry:
    """Edge vector x_j - x_i with its unit tangent and length."""

    vector: np.ndarray
    tangent: np.ndarray
    length: float


def edge_geometry(xi, xj) -> EdgeGeometry:
    vector = np.asarray(xj, dtype=np.float64) - np.asarray(xi, dtype=np.float64)
    length = float(np.linalg.norm(vector))
    if length <= 0.0:
        raise NumericalError("degenerate edge of zero length")
    return EdgeGeometry(vector, vector / length, length)


# --- per-element stretching ------------------------------------------------

def stretch_strain(edge: EdgeGeometry, rest_length: float) -> float:
    return edge.length / rest_length - 1.0


def stretch_energy(edge: EdgeGeometry, rest_length: float, params: MaterialParams) -> float:
    eps = stretch_strain(edge, rest_length)
    return 0.5 * params.stretch_stiffness * eps * eps * rest_length


def stretch_gradient(edge: EdgeGeometry, rest_length: float, params: MaterialParams) -> np.ndarray:
    """Gradient of the stretching energy with respect to the edge vector.

    Node j accumulates +gradient, node i accumulates -gradient.
    """
    eps = stretch_strain(edge, rest_length)
    return params.stretch_stiffness * eps * edge.tangent


def stretch_hessian(edge: EdgeGeometry, rest_length: float, params: MaterialParams) -> np.ndarray:
    """Second derivative of the stretching energy w.r.t. the edge vector:
    EA * [(1/rest - 1/len) I + (1/len) t (x) t]."""
    t = edge.tangent
    return params.stretch_stiffness * (
        (1.0 / rest_length - 1.0 / edge.length) * _I3
        + np.outer(t, t) / edge.length)


# --- per-element bending ---------------------------------------------------

def bend_curvature_modified(t1, t2) -> float:
    """|t2 - t1| = 2*sin(phi/2); finite for every turning angle."""
    return float(np.linalg.norm(np.asarray(t2, dtype=np.float64) - np.asarray(t1, dtype=np.float64)))


def bend_curvature_exact(t1, t2) -> float:
    """2*|t1 x t2| / (|t1||t2| + t1.t2) = 2*tan(phi/2).

    Singular for antiparallel tangents, which is why the modified measure
    is the default in the energy model.
    """
    t1 = np.asarray(t1, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    denom = np.linalg.norm(t1) * np.linalg.norm(t2) + float(np.dot(t1, t2))
    if denom <= 1e-12:
        raise NumericalError("exact curvature is singular for antiparallel tangents")
    return 2.0 * float(np.linalg.norm(np.cross(t1, t2))) / denom


def _curvature_energy_derivatives(stiffness, c, curvature):
    """(E, dE/dc, d2E/dc2) of the bending energy as a function of c = t1.t2.

    modified: E = k*(1 - c)            (kappa^2 = 2 - 2c)
    exact:    E = 2k*(1 - c)/(1 + c)   (kappa^2 = 4(1 - c)/(1 + c))
    """
    if curvature == "modified":
        return stiffness * (1.0 - c), -stiffness, np.zeros_like(np.asarray(c, dtype=np.float64))
    if curvature == "exact":
        opc = 1.0 + c
        return (2.0 * stiffness * (1.0 - c) / opc,
                -4.0 * stiffness / opc**2,
                8.0 * stiffness / opc**3)
    raise ValueError(f"unknown curvature mode {curvature!r}")


def bend_energy(xi, xj, xk, voronoi_length: float, params: MaterialParams,
                curvature: str = "modified") -> float:
    e1 = edge_geometry(xi, xj)
    e2 = edge_geometry(xj, xk)
    if curvature == "exact":
        kappa = bend_curvature_exact(e1.tangent, e2.tangent)
    else:
        kappa = bend_curvature_modified(e1.tangent, e2.tangent)
    return 0.5 * params.bend_stiffness / voronoi_length * kappa * kappa


def bend_gradient(xi, xj, xk, voronoi_length: float, params: MaterialParams,
                  curvature: str = "modified"):
    """Gradients of the bending energy w.r.t. the two edge vectors.

    Returns (g1, g2) with g1 = dE/d(e_ij), g2 = dE/d(e_jk). The nodal
    energy gradients follow from the chain rule: dE/dx_i = -g1,
    dE/dx_j = g1 - g2, dE/dx_k = g2.
    """
    e1 = edge_geometry(xi, xj)
    e2 = edge_geometry(xj, xk)
    t1, t2 = e1.tangent, e2.tangent
    c = float(np.dot(t1, t2))
    k = params.bend_stiffness / voronoi_length
    _, ep, _ = _curvature_energy_derivatives(k, c, curvature)
    u = (t2 - c * t1) / e1.length
    v = (t1 - c * t2) / e2.length
    return ep * u, ep * v


def bend_hessian(xi, xj, xk, voronoi_length: float, params: MaterialParams,
                 curvature: str = "modified"):
    """Edge-space second derivatives of the bending energy.

    Returns (H11, H22, H12): the two diagonal blocks and the cross block
    d2E/d(e_ij)d(e_jk). The opposite cross block is exactly H12^T.
    """
    e1 = edge_geometry(xi, xj)
    e2 = edge_geometry(xj, xk)
    t1, t2 = e1.tangent, e2.tangent
    n1, n2 = e1.length, e2.length
    c = float(np.dot(t1, t2))
    k = params.bend_stiffness / voronoi_length
    _, ep, epp = _curvature_energy_derivatives(k, c, curvature)
    u = (t2 - c * t1) / n1
    v = (t1 - c * t2) / n2
    g1 = (_I3 - np.outer(t1, t1)) / n1
    g2 = (_I3 - np.outer(t2, t2)) / n2
    h11 = epp * np.outer(u, u) - ep * (c * g1 + np.outer(t1, u) + np.outer(u, t1)) / n1
    h22 = epp * np.outer(v, v) - ep * (c * g2 + np.outer(t2, v) + np.outer(v, t2)) / n2
    h12 = epp * np.outer(u, v) + ep * (g1 @ g2)
    return h11, h22, h12


def bend_nodal_blocks(h11, h22, h12):
    """Map edge-space bending Hessian blocks to the nine 3x3 nodal blocks.

    Uses d(e_ij)/dx = (-I, +I, 0) and d(e_jk)/dx = (0, -I, +I) for nodes
    (i, j, k). Returned as a dict keyed by node-index pairs (0,0)..(2,2).
    """
    h21 = h12.T
    return {
        (0, 0): h11,
        (0, 1): -h11 + h12,
        (0, 2): -h12,
        (1, 0): -h11 + h21,
        (1, 1): h11 - h12 - h21 + h22,
        (1, 2): h12 - h22,
        (2, 0): -h21,
        (2, 1): h21 - h22,
        (2, 2): h22,
    }


# --- vectorized global assembly ---------------------------------------------

def _block_rows_cols(dofs_a, dofs_b):
    """Row/col index arrays (n, 9) of a 3x3 block laid out row-major."""
    rows = np.repeat(dofs_a, 3, axis=1)
    cols = np.tile(dofs_b, (1, 3))
    return rows, cols


class ElasticAssembler:
    """Vectorized energy/force/Hessian evaluation on a fixed mesh.

    The global sparsity pattern (including explicit diagonal slots) is
    computed once; every assembly reduces per-entry contributions into the
    shared CSC value array with a fixed accumulation order, so repeated
    evaluations allocate little and are bitwise reproducible.
    """

    def __init__(self, mesh, params: MaterialParams, curvature: str = "modified"):
        if curvature not in CURVATURE_MODES:
            raise ValueError(f"unknown curvature mode {curvature!r}")
        self.mesh = mesh
        self.params = params
        self.curvature = curvature
        self.ndof = 3 * mesh.n_nodes
        self.bend_active = mesh.bend_active.copy()

        self._si = mesh.stretch_nodes[:, 0]
        self._sj = mesh.stretch_nodes[:, 1]
        self._srest = mesh.stretch_rest
        self._bi = mesh.bend_nodes[:, 0]
        self._bj = mesh.bend_nodes[:, 1]
        self._bk = mesh.bend_nodes[:, 2]
        self._bstiff = params.bend_stiffness / mesh.bend_voronoi

        def dofs(nodes):
            return (3 * nodes)[:, None] + np.arange(3)[None, :]

        sdi, sdj = dofs(self._si), dofs(self._sj)
        bdi, bdj, bdk = dofs(self._bi), dofs(self._bj), dofs(self._bk)
        self._force_dofs = np.concatenate([
            sdi.ravel(), sdj.ravel(), bdi.ravel(), bdj.ravel(), bdk.ravel()])

        rows = []
        cols = []
        for da, db in ((sdi, sdi), (sdi, sdj), (sdj, sdi), (sdj, sdj)):
            r, c = _block_rows_cols(da, db)
            rows.append(r.ravel())
            cols.append(c.ravel())
        for da in (bdi, bdj, bdk):
            for db in (bdi, bdj, bdk):
                r, c = _block_rows_cols(da, db)
                rows.append(r.ravel())
                cols.append(c.ravel())
        self.entry_rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.intp)
        self.entry_cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.intp)
        self.n_entries = self.entry_rows.size
        self._full_pattern = None

    def set_bend_active(self, mask) -> None:
        mask = np.ascontiguousarray(mask, dtype=bool)
        if mask.shape != self.bend_active.shape:
            raise ValueError("activation mask has wrong length")
        self.bend_active = mask

    # -- element kernels -----------------------------------------------------

    def _stretch_terms(self, q3):
        e = q3[self._sj] - q3[self._si]
        lens = np.linalg.norm(e, axis=1)
        if np.any(lens <= 0.0):
            bad = int(np.argmax(lens <= 0.0))
            raise NumericalError(
                f"stretch element {bad} (nodes {self._si[bad]}-{self._sj[bad]}) "
                "collapsed to zero length")
        t = e / lens[:, None]
        eps = lens / self._srest - 1.0
        ea = self.params.stretch_stiffness
        energies = 0.5 * ea * eps * eps * self._srest
        if not np.all(np.isfinite(energies)):
            bad = int(np.argmax(~np.isfinite(energies)))
            raise NumericalError(
                f"stretch element {bad} (nodes {self._si[bad]}-{self._sj[bad]}) "
                "produced a non-finite energy")
        grad = (ea * eps)[:, None] * t
        return energies, grad, lens, t

    def _stretch_hessian_blocks(self, lens, t):
        ea = self.params.stretch_stiffness
        coef = ea * (1.0 / self._srest - 1.0 / lens)
        blocks = coef[:, None, None] * _I3[None, :, :]
        blocks += (ea / lens)[:, None, None] * np.einsum("na,nb->nab", t, t)
        return blocks

    def _bend_terms(self, q3, want_hessian):
        """Energy sum, nodal gradient blocks (g1, g2) and optional Hessian
        blocks for the active bend subset."""
        act = np.flatnonzero(self.bend_active)
        nb = len(self._bi)
        g1 = np.zeros((nb, 3))
        g2 = np.zeros((nb, 3))
        hess = None
        if want_hessian:
            hess = (np.zeros((nb, 3, 3)), np.zeros((nb, 3, 3)), np.zeros((nb, 3, 3)))
        if act.size == 0:
            return 0.0, g1, g2, hess

        i, j, k = self._bi[act], self._bj[act], self._bk[act]
        e1 = q3[j] - q3[i]
        e2 = q3[k] - q3[j]
        n1 = np.linalg.norm(e1, axis=1)
        n2 = np.linalg.norm(e2, axis=1)
        if np.any(n1 <= 0.0) or np.any(n2 <= 0.0):
            bad = act[int(np.argmax((n1 <= 0.0) | (n2 <= 0.0)))]
            raise NumericalError(
                f"bend element {bad} (nodes {self._bi[bad]},{self._bj[bad]},{self._bk[bad]}) "
                "has a collapsed edge")
        t1 = e1 / n1[:, None]
        t2 = e2 / n2[:, None]
        c = np.einsum("na,na->n", t1, t2)
        stiff = self._bstiff[act]
        if self.curvature == "exact" and np.any(1.0 + c <= 1e-12):
            bad = act[int(np.argmax(1.0 + c <= 1e-12))]
            raise NumericalError(
                f"bend element {bad} (nodes {self._bi[bad]},{self._bj[bad]},{self._bk[bad]}) "
                "folded to an antiparallel pair; exact curvature is singular")
        energies, ep, epp = _curvature_energy_derivatives(stiff, c, self.curvature)
        if not np.all(np.isfinite(energies)):
            bad = act[int(np.argmax(~np.isfinite(energies)))]
            raise NumericalError(
                f"bend element {bad} (nodes {self._bi[bad]},{self._bj[bad]},{self._bk[bad]}) "
                "produced a non-finite energy")
        u = (t2 - c[:, None] * t1) / n1[:, None]
        v = (t1 - c[:, None] * t2) / n2[:, None]
        g1[act] = ep[:, None] * u
        g2[act] = ep[:, None] * v

        if want_hessian:
            eye = _I3[None, :, :]
            gm1 = (eye - np.einsum("na,nb->nab", t1, t1)) / n1[:, None, None]
            gm2 = (eye - np.einsum("na,nb->nab", t2, t2)) / n2[:, None, None]
            uu = np.einsum("na,nb->nab", u, u)
            vv = np.einsum("na,nb->nab", v, v)
            t1u = np.einsum("na,nb->nab", t1, u)
            t2v = np.einsum("na,nb->nab", t2, v)
            h11 = epp[:, None, None] * uu - ep[:, None, None] * (
                c[:, None, None] * gm1 + t1u + t1u.transpose(0, 2, 1)) / n1[:, None, None]
            h22 = epp[:, None, None] * vv - ep[:, None, None] * (
                c[:, None, None] * gm2 + t2v + t2v.transpose(0, 2, 1)) / n2[:, None, None]
            h12 = epp[:, None, None] * np.einsum("na,nb->nab", u, v) \
                + ep[:, None, None] * np.einsum("nab,nbc->nac", gm1, gm2)
            hess[0][act] = h11
            hess[1][act] = h22
            hess[2][act] = h12
        return float(energies.sum()), g1, g2, hess

    # -- public evaluations ---------------------------------------------------

    def energy(self, positions) -> float:
        return self.energy_force(positions)[0]

    def energy_force(self, positions):
        """Total elastic energy and internal force vector (3N,).

        The force is the negative gradient of the energy with respect to
        the stacked nodal positions.
        """
        q3 = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        s_energy, s_grad, _, _ = self._stretch_terms(q3)
        b_energy, g1, g2, _ = self._bend_terms(q3, want_hessian=False)
        values = np.concatenate([
            (+s_grad).ravel(), (-s_grad).ravel(),
            (+g1).ravel(), (g2 - g1).ravel(), (-g2).ravel()])
        force = np.bincount(self._force_dofs, weights=values, minlength=self.ndof)
        return float(s_energy.sum()) + b_energy, force

    def hessian_entry_values(self, positions) -> np.ndarray:
        """Per-entry energy Hessian contributions aligned with entry_rows/cols."""
        q3 = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        _, _, lens, t = self._stretch_terms(q3)
        hs = self._stretch_hessian_blocks(lens, t)
        _, _, _, (h11, h22, h12) = self._bend_terms(q3, want_hessian=True)
        h21 = h12.transpose(0, 2, 1)
        blocks = [hs, -hs, -hs, hs,
                  h11, -h11 + h12, -h12,
                  -h11 + h21, h11 - h12 - h21 + h22, h12 - h22,
                  -h21, h21 - h22, h22]
        return np.concatenate([b.reshape(b.shape[0], 9).ravel() for b in blocks])

    def hessian(self, positions) -> sp.csc_matrix:
        """Global sparse energy Hessian (3N x 3N, symmetric)."""
        if self._full_pattern is None:
            self._full_pattern = CscPattern(self.entry_rows, self.entry_cols, self.ndof)
        return self._full_pattern.build(self.hessian_entry_values(positions))


class CscPattern:
    """Fixed CSC sparsity pattern with duplicate-summing entry reduction.

    Entries are identified once by (row, col); each ``build`` call bins the
    per-entry values into the shared value layout with np.bincount, which
    keeps the accumulation order fixed and runs deterministic.
    """

    def __init__(self, rows, cols, ndof, with_diagonal: bool = True):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if with_diagonal:
            diag = np.arange(ndof, dtype=np.int64)
            rows = np.concatenate([rows, diag])
            cols = np.concatenate([cols, diag])
        keys = cols * np.int64(ndof) + rows
        unique, inverse = np.unique(keys, return_inverse=True)
        self.ndof = ndof
        self.nnz = unique.size
        self._inverse = inverse
        self._n_entry = rows.size - (ndof if with_diagonal else 0)
        self._indices = (unique % ndof).astype(np.int32)
        self._indptr = np.searchsorted(unique // ndof, np.arange(ndof + 1)).astype(np.int32)
        if with_diagonal:
            diag_keys = np.arange(ndof, dtype=np.int64) * ndof + np.arange(ndof, dtype=np.int64)
            self.diag_slots = np.searchsorted(unique, diag_keys)
        else:
            self.diag_slots = None

    def build(self, entry_values, diagonal=None) -> sp.csc_matrix:
        values = np.asarray(entry_values, dtype=np.float64)
        if self.diag_slots is not None:
            if diagonal is None:
                diagonal = np.zeros(self.ndof)
            values = np.concatenate([values, np.zeros(self.ndof)])
        data = np.bincount(self._inverse, weights=values, minlength=self.nnz)
        if diagonal is not None:
            data[self.diag_slots] += diagonal
        return sp.csc_matrix((data, self._indices, self._indptr),
                             shape=(self.ndof, self.ndof))


def assemble(state, mesh, params: MaterialParams, curvature: str = "modified"):
    """One-shot (energy, force, hessian) of a state on a mesh.

    Accepts a State or a flat/nodal position array. For repeated
    evaluations on the same mesh prefer a persistent ElasticAssembler.
    """
    positions = getattr(state, "positions", state)
    assembler = ElasticAssembler(mesh, params, curvature)
    energy, force = assembler.energy_force(positions)
    return energy, force, assembler.hessian(positions)
