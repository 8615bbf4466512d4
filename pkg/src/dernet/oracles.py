"""Analytic and brute-force reference solutions used by tests and `validate`.

These are deliberately independent of the simulation code paths they
check: closed-form beam/cable formulas, a bisection catenary solver, and
central finite differences for derivative verification.
"""

import math

import numpy as np


def _bisect(f, lo, hi, rel_tol=1e-13, max_iter=200):
    """Root of a monotone scalar function by plain bisection."""
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise ValueError("bisection bracket does not straddle a root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or (hi - lo) <= rel_tol * max(abs(mid), 1.0):
            return mid
        if flo * fm < 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def catenary_sag(length: float, end_shrink: float) -> float:
    """Maximum sag of an inextensible cable suspended at equal heights.

    The two ends of a cable of arclength ``length`` are held a distance
    ``length - end_shrink`` apart. Solves the half-span transcendental
    relation 2c*sinh(a/(2c)) = length (a the end separation) for the
    catenary parameter c by bisection, then returns the midpoint sag
    c*(cosh(a/(2c)) - 1).

    end_shrink <= 0 degenerates to a taut cable with zero sag;
    end_shrink >= length is out of domain.
    """
    if end_shrink <= 0.0:
        return 0.0
    if end_shrink >= length or not (length > 0.0):
        raise ValueError(f"end_shrink must lie in (0, length), got {end_shrink} of {length}")
    a = length - end_shrink
    ratio = length / a
    # x = a / (2c): sinh(x)/x grows monotonically from 1, so bracket upward.
    hi = 1.0
    while math.sinh(hi) / hi < ratio:
        hi *= 2.0
    x = _bisect(lambda t: math.sinh(t) / t - ratio, 1e-12, hi, rel_tol=1e-14)
    c = a / (2.0 * x)
    return c * (math.cosh(x) - 1.0)


def catenary_sag_fullspan(length: float, end_shrink: float) -> float:
    """Alternate catenary form with the full span as the cosh/sinh argument.

    Kept for comparison against :func:`catenary_sag`; it omits the
    half-span convention and the -1 in the sag expression, so it does not
    reproduce a physical hanging cable.
    """
    if end_shrink <= 0.0:
        return 0.0
    if end_shrink >= length or not (length > 0.0):
        raise ValueError(f"end_shrink must lie in (0, length), got {end_shrink} of {length}")
    a = length - end_shrink
    ratio = length / (2.0 * a)
    if ratio <= 1.0:
        raise ValueError("full-span relation has no solution for this shrink")
    hi = 1.0
    while math.sinh(hi) / hi < ratio:
        hi *= 2.0
    x = _bisect(lambda t: math.sinh(t) / t - ratio, 1e-12, hi, rel_tol=1e-14)
    c = a / x
    return c * math.cosh(x)


def catenary_multi(length: float, end_shrink: float, n_spans: int) -> float:
    """Sag of a cable suspended at n_spans + 1 equally spaced points.

    Every span carries length/n_spans of cable shrunk by
    end_shrink/n_spans, so the sag is exactly catenary_sag/n_spans.
    """
    if n_spans < 1:
        raise ValueError("n_spans must be >= 1")
    return catenary_sag(length / n_spans, end_shrink / n_spans)


def cantilever_tip_linear(params, length: float, gravity: float) -> float:
    """Normalized tip deflection delta/L of a uniform cantilever under its
    own weight, in the geometrically linear regime: (1/8) * rho*A*g*L^3 / (EI).
    """
    if gravity == 0.0:
        return 0.0
    return 0.125 * params.density * params.area * abs(gravity) * length**3 \
        / params.bend_stiffness


def beam_midpoint_linear(force: float, length: float, bend_stiffness: float) -> float:
    """Midpoint deflection of a simply supported beam under a central point
    load: F*L^3 / (48*EI)."""
    return force * length**3 / (48.0 * bend_stiffness)


def cable_midpoint(force: float, length: float, stretch_stiffness: float) -> float:
    """Midpoint deflection of a taut massless cable under a central point load.

    Solves the geometric equilibrium
        F/EA = 2 * [(sqrt(d^2 + (L/2)^2) - L/2) / (L/2)] * d / sqrt(d^2 + (L/2)^2)
    for the deflection d by bisection; the residual is monotone in d.
    """
    if force == 0.0:
        return 0.0
    if force < 0.0 or length <= 0.0 or stretch_stiffness <= 0.0:
        raise ValueError("force must be >= 0 and length/stiffness positive")
    half = 0.5 * length
    target = force / stretch_stiffness

    def residual(d):
        s = math.hypot(d, half)
        return 2.0 * ((s - half) / half) * (d / s) - target

    return _bisect(residual, 0.0, length, rel_tol=1e-14)


def cable_midpoint_force(deflection: float, length: float, stretch_stiffness: float) -> float:
    """Inverse of :func:`cable_midpoint`: load that produces a given deflection."""
    half = 0.5 * length
    s = math.hypot(deflection, half)
    return stretch_stiffness * 2.0 * ((s - half) / half) * (deflection / s)


def curvature_pair(turning_angle: float) -> tuple:
    """(kappa, kappa_hat) of the two discrete curvature definitions at a
    turning angle (radians): 2*sin(phi/2) and 2*tan(phi/2)."""
    return 2.0 * math.sin(0.5 * turning_angle), 2.0 * math.tan(0.5 * turning_angle)


def fd_gradient(func, point, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    The per-component step is step * (1 + |coordinate|).
    """
    x = np.asarray(point, dtype=np.float64).ravel()
    grad = np.zeros_like(x)
    for i in range(x.size):
        h = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (func(xp) - func(xm)) / (2.0 * h)
    return grad


def fd_jacobian(func, point, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector function of a flat vector.

    Returns J with J[a, b] = d func_a / d x_b.
    """
    x = np.asarray(point, dtype=np.float64).ravel()
    cols = []
    for i in range(x.size):
        h = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(func(xp), dtype=np.float64)
                     - np.asarray(func(xm), dtype=np.float64)) / (2.0 * h))
    return np.column_stack(cols)


def relative_error(value, reference, floor: float = 1e-300) -> float:
    """norm(value - reference) / max(norm(reference), floor)."""
    value = np.asarray(value, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    denom = max(np.linalg.norm(reference.ravel()), floor)
    return float(np.linalg.norm((value - reference).ravel()) / denom)
