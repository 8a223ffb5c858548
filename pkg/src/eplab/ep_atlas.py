"""Locating and classifying the degeneracies of the lattice model.

The degeneracy locus is the zero set of the explicit discriminant
polynomial, so refinement uses exact derivatives throughout: Newton on
the gradient for the conical point (where the gradient itself vanishes)
and predictor-corrector walking for the square-root exceptional line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, build_hamiltonian, discriminant
from .numerics import eig

__all__ = [
    "EPRecord",
    "TraceResult",
    "scan_discriminant",
    "refine_degeneracy",
    "locate_conical_points",
    "trace_exceptional_line",
    "classify_ep",
    "overlap_scaling",
]


@dataclass(frozen=True)
class EPRecord:
    location: tuple[float, float]
    kind: str  # dirac | typical | hermitian_dp
    dispersion_exponent: float
    coalescence: float
    spectrum_real_radius: float


@dataclass(frozen=True)
class TraceResult:
    vertices: np.ndarray  # (n, 2) points on the zero set
    terminated: str  # boundary | max_steps | singular_seed
    singular: bool = False
    branch_directions: np.ndarray | None = None
    hessian_signature: tuple[int, int] | None = None


def _grad_disc(k1: float, k2: float) -> np.ndarray:
    a, b = k1 * k1, k2 * k2
    d1 = k1 * (
        6 * 256.0 * a**2
        - 4 * 768.0 * a
        + 2 * 2928.0
        - 4 * 384.0 * a * b
        - 2 * 1824.0 * b
        + 2 * 192.0 * b**2
    )
    d2 = k2 * (
        -2 * 384.0 * a**2
        - 2 * 1824.0 * a
        + 4 * 192.0 * a * b
        - 2 * 168.0
        + 4 * 132.0 * b
        - 6 * 32.0 * b**2
    )
    return np.array([d1, d2])


def _hess_disc(k1: float, k2: float, h: float = 1e-5) -> np.ndarray:
    g = _grad_disc
    d11 = (g(k1 + h, k2)[0] - g(k1 - h, k2)[0]) / (2 * h)
    d22 = (g(k1, k2 + h)[1] - g(k1, k2 - h)[1]) / (2 * h)
    d12 = (g(k1, k2 + h)[0] - g(k1, k2 - h)[0]) / (2 * h)
    return np.array([[d11, d12], [d12, d22]])


def scan_discriminant(
    k1_range: tuple[float, float],
    k2_range: tuple[float, float],
    resolution: int,
) -> dict:
    """Discriminant field on a grid, with sign-change cells marked."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2 per axis")
    k1 = np.linspace(*k1_range, resolution)
    k2 = np.linspace(*k2_range, resolution)
    field_vals = discriminant(k1[:, None], k2[None, :])
    sgn = np.sign(field_vals)
    change = np.zeros_like(field_vals, dtype=bool)
    change[:-1, :] |= sgn[:-1, :] * sgn[1:, :] < 0
    change[1:, :] |= sgn[:-1, :] * sgn[1:, :] < 0
    change[:, :-1] |= sgn[:, :-1] * sgn[:, 1:] < 0
    change[:, 1:] |= sgn[:, :-1] * sgn[:, 1:] < 0
    return {"k1": k1, "k2": k2, "delta": field_vals, "sign_change": change}


def refine_degeneracy(seed: tuple[float, float], tol: float = 1e-10) -> np.ndarray:
    """Refine a seed onto the zero set of the discriminant.

    Regular points: Newton along the gradient with bisection fallback.
    Singular points (vanishing gradient, e.g. the conical degeneracy):
    Newton on the gradient system instead.
    """
    x = np.array(seed, dtype=float)
    for _ in range(60):
        d = float(discriminant(*x))
        g = _grad_disc(*x)
        gn = float(np.dot(g, g))
        if gn < 1e-12:
            # singular point: drive the gradient itself to zero
            hess = _hess_disc(*x)
            try:
                step = np.linalg.solve(hess, g)
            except np.linalg.LinAlgError:
                break
            x = x - step
            if np.linalg.norm(step) < 1e-14:
                break
            continue
        if abs(d) < tol:
            return x
        x = x - d * g / gn
    d = float(discriminant(*x))
    if abs(d) < max(tol, 1e-10):
        return x
    # bisection fallback along the gradient direction
    g = _grad_disc(*x)
    gdir = g / max(np.linalg.norm(g), 1e-300)
    lo, hi = -0.05, 0.05
    f = lambda s: float(discriminant(*(x + s * gdir)))
    if f(lo) * f(hi) < 0:
        for _ in range(80):
            mid = (lo + hi) / 2
            if f(lo) * f(mid) <= 0:
                hi = mid
            else:
                lo = mid
        return x + (lo + hi) / 2 * gdir
    raise ValueError(f"seed {seed} not refinable to the degeneracy locus (delta={d:.3e})")


def locate_conical_points(
    k1_range: tuple[float, float] = (-1.0, 1.0),
    k2_range: tuple[float, float] = (-2.0, 2.0),
    resolution: int = 41,
) -> list[tuple[float, float]]:
    """Isolated zero-minima of the discriminant (the conical degeneracies).

    Grid-scan for local minima with small positive value, then Newton on
    the gradient; a point is accepted when the refined discriminant is
    below 1e-12 and the Hessian is definite (isolated-zero structure).
    """
    k1 = np.linspace(*k1_range, resolution)
    k2 = np.linspace(*k2_range, resolution)
    vals = discriminant(k1[:, None], k2[None, :])
    found: list[tuple[float, float]] = []
    for i in range(1, resolution - 1):
        for j in range(1, resolution - 1):
            patch = vals[i - 1 : i + 2, j - 1 : j + 2]
            if vals[i, j] != patch.min() or vals[i, j] > 50.0:
                continue
            x = np.array([k1[i], k2[j]])
            for _ in range(50):
                g = _grad_disc(*x)
                try:
                    step = np.linalg.solve(_hess_disc(*x), g)
                except np.linalg.LinAlgError:
                    break
                x = x - step
                if np.linalg.norm(step) < 1e-13:
                    break
            if abs(float(discriminant(*x))) > 1e-12:
                continue
            sig = np.linalg.eigvalsh(_hess_disc(*x))
            if sig[0] * sig[1] <= 0:
                continue
            if not any(np.hypot(x[0] - f[0], x[1] - f[1]) < 1e-4 for f in found):
                found.append((float(x[0]), float(x[1])))
    return sorted(found, key=lambda t: (t[1], t[0]))


def trace_exceptional_line(
    seed: tuple[float, float],
    step: float,
    *,
    max_steps: int = 2000,
    bounds: tuple[float, float, float, float] = (-3.0, 3.0, -3.0, 3.0),
) -> TraceResult:
    """Predictor-corrector walk along the discriminant zero line."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = refine_degeneracy(seed)
    g = _grad_disc(*x)
    # a gradient-Newton polish that stays nearby flags a singular point
    # (the conical degeneracy is an isolated zero, not a regular curve)
    xs = x.copy()
    for _ in range(50):
        try:
            delta = np.linalg.solve(_hess_disc(*xs), _grad_disc(*xs))
        except np.linalg.LinAlgError:
            break
        xs = xs - delta
        if np.linalg.norm(delta) < 1e-13:
            break
    singular_nearby = (
        np.linalg.norm(xs - x) < 1e-3
        and abs(float(discriminant(*xs))) < 1e-12
        and np.linalg.norm(_grad_disc(*xs)) < 1e-8
    )
    if singular_nearby:
        x, g = xs, _grad_disc(*xs)
    if np.linalg.norm(g) < 1e-8:
        # conical point: the zero set is not a regular curve here
        hess = _hess_disc(*x)
        sig_vals = np.linalg.eigvalsh(hess)
        signature = (int(np.sum(sig_vals > 0)), int(np.sum(sig_vals < 0)))
        if signature[0] == 2 or signature[1] == 2:
            branches = None  # definite Hessian: isolated zero, no branches
        else:
            # indefinite: branch directions are the null cone of the Hessian
            w, v = np.linalg.eigh(hess)
            t = np.sqrt(abs(w[1]) / abs(w[0]))
            b1 = v[:, 0] * t + v[:, 1]
            b2 = -v[:, 0] * t + v[:, 1]
            branches = np.array([b1 / np.linalg.norm(b1), b2 / np.linalg.norm(b2)])
        return TraceResult(
            vertices=np.array([x]),
            terminated="singular_seed",
            singular=True,
            branch_directions=branches,
            hessian_signature=signature,
        )
    vertices = [x.copy()]
    tangent = np.array([-g[1], g[0]])
    tangent /= np.linalg.norm(tangent)
    k1min, k1max, k2min, k2max = bounds
    terminated = "max_steps"
    for _ in range(max_steps):
        pred = vertices[-1] + step * tangent
        cur = _newton_corrector(pred)
        if cur is None:
            terminated = "lost_track"
            break
        g = _grad_disc(*cur)
        new_tan = np.array([-g[1], g[0]])
        new_tan /= max(np.linalg.norm(new_tan), 1e-300)
        if np.dot(new_tan, tangent) < 0:
            new_tan = -new_tan
        tangent = new_tan
        vertices.append(cur)
        if not (k1min <= cur[0] <= k1max and k2min <= cur[1] <= k2max):
            terminated = "boundary"
            break
    return TraceResult(vertices=np.array(vertices), terminated=terminated)


def _newton_corrector(x0: np.ndarray) -> np.ndarray | None:
    x = x0.copy()
    for _ in range(50):
        d = float(discriminant(*x))
        if abs(d) < 1e-10:
            return x
        g = _grad_disc(*x)
        gn = float(np.dot(g, g))
        if gn < 1e-20:
            return None
        x = x - d * g / gn
    return x if abs(float(discriminant(*x))) < 1e-10 else None


def _coalescing_pair(vals: np.ndarray) -> tuple[int, int]:
    n = vals.size
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    gaps = [abs(vals[i] - vals[j]) for i, j in pairs]
    return pairs[int(np.argmin(gaps))]


def _pair_gap_and_overlap(h: np.ndarray) -> tuple[float, float]:
    sp = eig(h)
    i, j = _coalescing_pair(sp.eigenvalues)
    gap = abs(sp.eigenvalues[i] - sp.eigenvalues[j])
    ov = abs(np.vdot(sp.right_vectors[:, i], sp.right_vectors[:, j]))
    return gap, ov


def _default_family(k1: float, k2: float) -> np.ndarray:
    return build_hamiltonian(ModelParams(k1, k2))


def classify_ep(
    location: tuple[float, float],
    *,
    family=None,
    ring_radius: float = 0.05,
    probe_direction: np.ndarray | None = None,
) -> EPRecord:
    """Classify a degeneracy as conical (dirac), typical EP or Hermitian DP.

    Three tests: eigenvector coalescence at offset 1e-6, spectrum reality
    on a ring of radius `ring_radius`, and the log-log dispersion
    exponent of the eigenvalue splitting over radial offsets 1e-4..1e-2.
    """
    fam = family or _default_family
    k1, k2 = location
    if family is None:
        loc = refine_degeneracy(location, tol=1e-8)
        k1, k2 = float(loc[0]), float(loc[1])
    gap0, _ = _pair_gap_and_overlap(fam(k1, k2))
    if gap0 > 1e-4:
        raise ValueError(f"({k1}, {k2}) is not on the degeneracy locus (gap {gap0:.3e})")

    if probe_direction is None:
        if family is None:
            g = _grad_disc(k1, k2)
            if np.linalg.norm(g) > 1e-6:
                probe_direction = g / np.linalg.norm(g)  # normal to the line
            else:
                probe_direction = np.array([1.0, 0.0])
        else:
            probe_direction = np.array([1.0, 0.0])
    probe_direction = np.asarray(probe_direction, dtype=float)
    probe_direction = probe_direction / np.linalg.norm(probe_direction)

    _, coalescence = _pair_gap_and_overlap(
        fam(k1 + 1e-6 * probe_direction[0], k2 + 1e-6 * probe_direction[1])
    )

    angles = np.linspace(0.0, 2.0 * np.pi, 24, endpoint=False)
    ring_real = True
    for a in angles:
        vals = np.linalg.eigvals(
            fam(k1 + ring_radius * np.cos(a), k2 + ring_radius * np.sin(a))
        )
        if np.abs(vals.imag).max() > 1e-7:
            ring_real = False
            break
    real_radius = ring_radius if ring_real else 0.0

    offsets = np.geomspace(1e-4, 1e-2, 9)
    gaps = []
    for dk in offsets:
        g, _ = _pair_gap_and_overlap(
            fam(k1 + dk * probe_direction[0], k2 + dk * probe_direction[1])
        )
        gaps.append(g)
    exponent = float(np.polyfit(np.log(offsets), np.log(gaps), 1)[0])

    if coalescence < 0.5:
        kind = "hermitian_dp"
    elif ring_real and 0.8 < exponent < 1.2:
        kind = "dirac"
    else:
        kind = "typical"
    return EPRecord(
        location=(k1, k2),
        kind=kind,
        dispersion_exponent=exponent,
        coalescence=float(coalescence),
        spectrum_real_radius=float(real_radius),
    )


def overlap_scaling(
    offsets,
    *,
    center: tuple[float, float] = (0.0, 1.0),
    direction: tuple[float, float] = (1.0, 0.0),
    family=None,
) -> tuple[float, np.ndarray]:
    """Fit exponent of 1 - F12 vs offset along a ray from a degeneracy.

    F12 is the overlap modulus of the two coalescing normalized right
    eigenvectors. Returns (fitted exponent, 1 - F12 samples).
    """
    offsets = np.asarray(offsets, dtype=float)
    if offsets.size < 2 or np.ptp(offsets) < 1e-15:
        raise ValueError("need at least two distinct offsets for the fit")
    fam = family or _default_family
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    defects = []
    for dk in offsets:
        _, ov = _pair_gap_and_overlap(fam(center[0] + dk * d[0], center[1] + dk * d[1]))
        defects.append(1.0 - ov)
    defects = np.array(defects)
    slope = float(np.polyfit(np.log(offsets), np.log(defects), 1)[0])
    return slope, defects


def locate_line_degeneracies(
    family,
    k1_range: tuple[float, float],
    *,
    resolution: int = 201,
    gap_tol: float = 1e-6,
) -> list[float]:
    """Degeneracy points of a one-parameter Hamiltonian family.

    Scans the minimal eigenvalue gap of family(k1) over the range, then
    drives each local minimum to zero with a golden-section refinement.
    Used for the larger truncation blocks where no closed-form
    discriminant is available.
    """
    from scipy.optimize import minimize_scalar

    k1s = np.linspace(*k1_range, resolution)

    def min_gap(k1: float) -> float:
        vals = np.sort(np.linalg.eigvals(family(k1)).real)
        return float(np.diff(vals).min())

    gaps = np.array([min_gap(k) for k in k1s])
    found = []
    for i in range(1, resolution - 1):
        if gaps[i] <= gaps[i - 1] and gaps[i] <= gaps[i + 1]:
            res = minimize_scalar(
                min_gap, bracket=None, bounds=(k1s[i - 1], k1s[i + 1]),
                method="bounded", options={"xatol": 1e-12},
            )
            if res.fun < gap_tol:
                k = float(res.x)
                if not any(abs(k - f) < 1e-6 for f in found):
                    found.append(k)
    return sorted(found)
