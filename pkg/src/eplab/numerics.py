"""Dense complex-matrix kernels for small (3/5/6-level) systems.

Everything here is a pure function of immutable array inputs:
eigendecomposition with a deterministic ordering, the principal PSD
square root, matrix-exponential propagation and midpoint-sampled
time-ordered evolution on a grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NumericsError",
    "Spectrum",
    "Trajectory",
    "eig",
    "psd_sqrt",
    "expm",
    "propagate_const",
    "step_propagators",
    "ordered_product",
    "prefix_states",
    "propagate_ordered",
]

# eigendecomposition route is trusted while cond(V) stays below this
EIG_COND_LIMIT = 1e8


class NumericsError(RuntimeError):
    """Raised when a kernel cannot certify its numerical contract."""


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues and unit right eigenvectors (columns), plus optional
    left eigenvectors. `ordering_tag` records whether the order is the
    local deterministic one or continuity-tracked by a sweep."""

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray | None = None
    ordering_tag: str = "local"


@dataclass(frozen=True)
class Trajectory:
    """States sampled on a strictly increasing time grid."""

    times: np.ndarray
    states: np.ndarray  # shape (len(times), dim)
    norms: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.norms is None:
            object.__setattr__(
                self, "norms", np.linalg.norm(self.states, axis=-1)
            )


def _local_order(vals: np.ndarray) -> np.ndarray:
    """Descending real part, ties broken by descending imaginary part."""
    return np.lexsort((-vals.imag, -vals.real))


def eig(m: np.ndarray) -> Spectrum:
    """Eigendecomposition with residual certificate.

    Raises NumericsError (echoing the matrix) if LAPACK fails to converge
    or any residual ||m v - E v|| exceeds 1e-10 * ||m||.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    try:
        vals, vecs = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"eigendecomposition failed for:\n{m!r}") from exc
    order = _local_order(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
    scale = max(np.linalg.norm(m, 2), 1e-300)
    resid = np.linalg.norm(m @ vecs - vecs * vals, axis=0)
    if np.any(resid > 1e-10 * scale):
        raise NumericsError(
            f"eigen residual {resid.max():.3e} exceeds tolerance for:\n{m!r}"
        )
    return Spectrum(eigenvalues=vals, right_vectors=vecs)


def psd_sqrt(m: np.ndarray, *, eig_floor: float = -1e-10) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in [eig_floor, 0) are clamped to zero; anything below
    eig_floor signals a metric violation and raises.
    """
    m = np.asarray(m, dtype=complex)
    herm_defect = np.abs(m - m.conj().T).max()
    if herm_defect > 1e-9 * max(np.abs(m).max(), 1.0):
        raise NumericsError(f"psd_sqrt input not Hermitian (defect {herm_defect:.3e})")
    vals, vecs = np.linalg.eigh((m + m.conj().T) / 2.0)
    if vals.min() < eig_floor * max(abs(vals.max()), 1.0):
        raise NumericsError(
            f"metric violation: eigenvalue {vals.min():.3e} below PSD floor"
        )
    root = vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    return (root + root.conj().T) / 2.0


def expm(m: np.ndarray) -> np.ndarray:
    """exp(m) for a small dense matrix.

    Uses the eigendecomposition when the eigenvector matrix is well
    conditioned, otherwise falls back to scaling-and-squaring on a
    truncated Taylor series (which also covers defective matrices).
    """
    m = np.asarray(m, dtype=complex)
    try:
        vals, vecs = np.linalg.eig(m)
        cond = np.linalg.cond(vecs)
        if cond < EIG_COND_LIMIT:
            cand = (vecs * np.exp(vals)) @ np.linalg.inv(vecs)
            # residual check decides the fallback, not a defectiveness oracle
            if _expm_residual_ok(m, cand):
                return cand
    except np.linalg.LinAlgError:
        pass
    return _expm_taylor(m[np.newaxis])[0]


def _expm_residual_ok(m: np.ndarray, em: np.ndarray) -> bool:
    """Check exp(m) against a short-step Taylor reference multiplicatively."""
    ref = _expm_taylor(m[np.newaxis])[0]
    scale = max(np.abs(ref).max(), 1.0)
    return bool(np.abs(em - ref).max() <= 1e-11 * scale)


def _expm_taylor(ms: np.ndarray, order: int = 16) -> np.ndarray:
    """Batched scaling-and-squaring with a truncated Taylor series.

    `ms` has shape (..., n, n). Exact enough for the step propagators of
    time-ordered products (series remainder < 1e-16 after scaling).
    """
    ms = np.asarray(ms, dtype=complex)
    n = ms.shape[-1]
    norms = np.abs(ms).sum(axis=-1).max(axis=-1)  # inf-norm per matrix
    max_norm = float(norms.max()) if norms.size else 0.0
    squarings = max(0, int(np.ceil(np.log2(max(max_norm, 1e-300) / 0.5))))
    scaled = ms / (2.0**squarings)
    eye = np.broadcast_to(np.eye(n, dtype=complex), ms.shape)
    result = eye + scaled / order
    for k in range(order - 1, 0, -1):
        result = eye + np.matmul(scaled, result) / k
    for _ in range(squarings):
        result = np.matmul(result, result)
    return result


def propagate_const(h: np.ndarray, psi: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i h dt) @ psi; h need not be Hermitian."""
    h = np.asarray(h, dtype=complex)
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    grow = np.linalg.eigvals(h).imag.max() * abs(dt)
    if grow > 700.0:
        raise NumericsError(
            f"propagation overflow: largest Im(E)*dt = {grow:.3e}"
        )
    return expm(-1j * dt * h) @ np.asarray(psi, dtype=complex)


def step_propagators(h_mid: np.ndarray, dts: np.ndarray) -> np.ndarray:
    """Batched exp(-i H_j dt_j) from midpoint-sampled Hamiltonians."""
    phases = -1j * np.asarray(dts)[:, None, None] * np.asarray(h_mid, dtype=complex)
    return _expm_taylor(phases)


def ordered_product(props: np.ndarray) -> np.ndarray:
    """Time-ordered product U_N ... U_2 U_1 by pairwise tree reduction."""
    acc = np.asarray(props, dtype=complex)
    while acc.shape[0] > 1:
        n = acc.shape[0]
        half = n // 2
        paired = np.matmul(acc[1 : 2 * half : 2], acc[0 : 2 * half : 2])
        acc = np.concatenate([paired, acc[2 * half :]]) if n % 2 else paired
    return acc[0]


def prefix_states(props: np.ndarray, psi0: np.ndarray) -> np.ndarray:
    """States after each step of the ordered product, including t=0.

    Hillis-Steele scan over the non-commutative product; O(N log N)
    batched 3x3 multiplies, which beats a Python-level loop by orders of
    magnitude on the long adiabatic grids.
    """
    acc = np.array(props, dtype=complex)
    n = acc.shape[0]
    offset = 1
    while offset < n:
        acc[offset:] = np.matmul(acc[offset:], acc[:-offset])
        offset *= 2
    psi0 = np.asarray(psi0, dtype=complex)
    states = np.empty((n + 1, psi0.size), dtype=complex)
    states[0] = psi0
    states[1:] = np.einsum("nij,j->ni", acc, psi0)
    return states


def propagate_ordered(
    h_of_t,
    psi0: np.ndarray,
    times: np.ndarray,
    *,
    step_tol: float | None = None,
) -> Trajectory:
    """Piecewise-constant (midpoint-sampled) time-ordered evolution.

    `h_of_t` maps a time array (or scalar) to Hamiltonian samples of
    shape (..., n, n). If `step_tol` is given, any interval with
    ||H(t+dt) - H(t)||_max * dt above it is rejected.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be a strictly increasing grid")
    dts = np.diff(times)
    h_nodes = np.asarray(h_of_t(times), dtype=complex)
    if step_tol is not None:
        drift = np.abs(np.diff(h_nodes, axis=0)).max(axis=(1, 2)) * dts
        worst = int(np.argmax(drift))
        if drift[worst] > step_tol:
            raise NumericsError(
                "step-size tolerance violated on interval "
                f"[{times[worst]:.6g}, {times[worst + 1]:.6g}] "
                f"(||dH||*dt = {drift[worst]:.3e})"
            )
    h_mid = np.asarray(h_of_t((times[:-1] + times[1:]) / 2.0), dtype=complex)
    props = step_propagators(h_mid, dts)
    states = prefix_states(props, psi0)
    return Trajectory(times=times, states=states)
