"""Root finder for real cubic polynomials with multiplicity handling.

Cubic spectra of the lattice model are computed here instead of going
through a companion-matrix eigensolver: close to a degeneracy the latter
loses half its digits, while the closed-form branches below stay accurate
because the multiple-root case is dispatched on the exact discriminant.
"""

from __future__ import annotations

import numpy as np

__all__ = ["cubic_discriminant", "solve_cubic"]

# |discriminant| below this is treated as an exact multiple root
MULTIPLE_ROOT_TOL = 1e-13


def cubic_discriminant(a: float, b: float, c: float, d: float) -> float:
    """Discriminant of a*x^3 + b*x^2 + c*x + d.

    Positive: three distinct real roots. Negative: one real root and a
    complex-conjugate pair. Zero: a multiple root.
    """
    return (
        18.0 * a * b * c * d
        - 4.0 * b**3 * d
        + b**2 * c**2
        - 4.0 * a * c**3
        - 27.0 * a**2 * d**2
    )


def _roots_multiple(a: float, b: float, c: float, d: float) -> np.ndarray:
    """Roots when the discriminant vanishes (double or triple root)."""
    delta0 = b * b - 3.0 * a * c
    if abs(delta0) < 1e-12 * max(b * b, abs(3.0 * a * c), 1.0):
        r = -b / (3.0 * a)
        return np.array([r, r, r], dtype=complex)
    double = (9.0 * a * d - b * c) / (2.0 * delta0)
    simple = (4.0 * a * b * c - 9.0 * a * a * d - b**3) / (a * delta0)
    return np.array([double, double, simple], dtype=complex)


def solve_cubic(a: float, b: float, c: float, d: float) -> np.ndarray:
    """All three roots of a real cubic, as a complex array.

    Three real roots are computed with the trigonometric method, the
    mixed real/complex case with Cardano's formula using the numerically
    stable branch of the cube root.
    """
    if a == 0.0:
        raise ValueError("leading coefficient is zero; not a cubic")
    disc = cubic_discriminant(a, b, c, d)
    # typical root magnitude; disc scales as a^4 * s^6, so the multiple-root
    # dispatch stays correct for cubics with roots far from unit size
    s = max(abs(b / a), abs(c / a) ** 0.5, abs(d / a) ** (1.0 / 3.0))
    if abs(disc) < MULTIPLE_ROOT_TOL * a**4 * max(s, 1e-150) ** 6:
        return _roots_multiple(a, b, c, d)

    # depressed cubic t^3 + p t + q with x = t - b/(3a)
    shift = b / (3.0 * a)
    p = (3.0 * a * c - b * b) / (3.0 * a * a)
    q = (2.0 * b**3 - 9.0 * a * b * c + 27.0 * a * a * d) / (27.0 * a**3)

    if disc > 0.0:
        # three distinct real roots
        m = 2.0 * np.sqrt(-p / 3.0)
        arg = np.clip(3.0 * q / (p * m), -1.0, 1.0)
        phi = np.arccos(arg) / 3.0
        k = np.array([0.0, 1.0, 2.0])
        roots = m * np.cos(phi - 2.0 * np.pi * k / 3.0) - shift
        return roots.astype(complex)

    # one real root, conjugate pair (Cardano)
    half_q = q / 2.0
    rad = np.sqrt(half_q**2 + (p / 3.0) ** 3 + 0j)
    u3 = -half_q + rad
    if abs(u3) < abs(-half_q - rad):
        u3 = -half_q - rad
    u = u3 ** (1.0 / 3.0)
    v = -p / (3.0 * u) if u != 0 else 0.0
    w = np.exp(2j * np.pi / 3.0)
    roots = np.array([u + v, u * w + v / w, u / w + v * w]) - shift
    # polish the real root and reconstruct the pair from exact symmetric sums
    real_idx = int(np.argmin(np.abs(roots.imag)))
    r = roots[real_idx].real
    for _ in range(2):
        f = ((a * r + b) * r + c) * r + d
        fp = (3.0 * a * r + 2.0 * b) * r + c
        if fp != 0.0:
            r -= f / fp
    pair_sum = -b / a - r
    pair_prod = c / a - r * pair_sum  # division-free, valid even for r = 0
    im = np.sqrt(max(pair_prod - (pair_sum / 2.0) ** 2, 0.0))
    return np.array(
        [r, pair_sum / 2.0 + 1j * im, pair_sum / 2.0 - 1j * im]
    )
