"""Measurement pipeline: eigenstate filtering, eigenvalue recovery from
population ratios, shot-noise simulation, maximum-likelihood tomography
and the Uhlmann fidelity.

Eigenstates are obtained dynamically: evolving under g(H) amplifies the
component with the largest imaginary eigenvalue of g(H), so different
choices of g select different eigenstates. Eigenvalues are recovered by
inverting the closed-form population-ratio model under the trace
constraint E1 + E2 + E3 = 6, which also eliminates the model parameters
through 12 k1^2 = 27 - 3*sigma2 + sigma3 and 6 k2^2 = sigma3 + 6.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .model import ModelParams, build_hamiltonian
from .numerics import NumericsError, expm, psd_sqrt

__all__ = [
    "GFunction",
    "MeasurementSetting",
    "TomographyRecord",
    "SteadyStateResult",
    "DEFAULT_SETTINGS",
    "TOMOGRAPHY_SETTINGS",
    "rotation_u",
    "rotation_v",
    "setting_unitary",
    "steady_state_eigenstate",
    "population_ratios",
    "ratios_from_energies",
    "solve_eigenvalues",
    "simulate_counts",
    "mle_reconstruct",
    "fidelity",
    "records_to_jsonl",
    "records_from_jsonl",
    "density_to_json",
    "density_from_json",
]


@dataclass(frozen=True)
class GFunction:
    """Spectral filter g(H): one of i*H, -i*H or i*(H - c*I)^(-1).

    i*H amplifies the largest real eigenvalue, -i*H the smallest, and
    the shifted inverse the eigenvalue closest above the real shift c.
    """

    form: str  # i_h | minus_i_h | inverse_shifted
    c: complex = 0.0

    def __post_init__(self):
        if self.form not in ("i_h", "minus_i_h", "inverse_shifted"):
            raise ValueError(f"unknown g(H) form {self.form!r}")

    def apply(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=complex)
        if self.form == "i_h":
            return 1j * h
        if self.form == "minus_i_h":
            return -1j * h
        evals = np.linalg.eigvals(h)
        if np.abs(evals - self.c).min() < 1e-8:
            raise ValueError(
                f"shift c={self.c} is within 1e-8 of an eigenvalue of H"
            )
        return 1j * np.linalg.inv(h - self.c * np.eye(h.shape[0]))


@dataclass(frozen=True)
class MeasurementSetting:
    """Rotation angles: (a, b) act on levels 1-2, (c, d) on levels 2-3."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.a, self.b, self.c, self.d)):
            raise ValueError("measurement angles must be finite")


@dataclass(frozen=True)
class TomographyRecord:
    setting: MeasurementSetting
    shots: int  # 0 = noiseless
    populations: np.ndarray  # 3 nonnegative reals summing to 1

    def __post_init__(self):
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        p = np.asarray(self.populations, dtype=float)
        if p.shape != (3,) or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("populations must be 3 nonnegative reals summing to 1")


@dataclass(frozen=True)
class SteadyStateResult:
    state: np.ndarray
    eigenvalue: complex
    residual: float
    converged: bool
    message: str = ""


# default eigenvalue-readout settings, chosen by condition-number screening
DEFAULT_SETTINGS = (
    MeasurementSetting(np.pi / 4, 0.0, 0.0, 0.0),
    MeasurementSetting(0.0, 0.0, np.pi / 4, 0.0),
    MeasurementSetting(np.pi / 4, np.pi / 2, np.pi / 4, 0.0),
)

# informationally complete 9-setting grid for state tomography
TOMOGRAPHY_SETTINGS = tuple(
    MeasurementSetting(a, b, c, d)
    for (a, b) in ((0.0, 0.0), (np.pi / 4, 0.0), (np.pi / 4, np.pi / 2))
    for (c, d) in ((0.0, 0.0), (np.pi / 4, 0.0), (np.pi / 4, np.pi / 2))
)


def rotation_u(a: float, b: float) -> np.ndarray:
    """Two-level rotation on levels 1-2."""
    return np.array(
        [
            [np.cos(a), -1j * np.sin(a) * np.exp(-1j * b), 0.0],
            [-1j * np.sin(a) * np.exp(1j * b), np.cos(a), 0.0],
            [0.0, 0.0, 1.0],
        ]
    )


def rotation_v(c: float, d: float) -> np.ndarray:
    """Two-level rotation on levels 2-3."""
    return np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, np.cos(c), -1j * np.sin(c) * np.exp(-1j * d)],
            [0.0, -1j * np.sin(c) * np.exp(1j * d), np.cos(c)],
        ]
    )


def setting_unitary(s: MeasurementSetting) -> np.ndarray:
    """U2 = U(a, b) V(c, d)."""
    return rotation_u(s.a, s.b) @ rotation_v(s.c, s.d)


def steady_state_eigenstate(
    p: ModelParams,
    g: GFunction,
    psi_init: np.ndarray | None = None,
    horizon: float = 200.0,
    *,
    dt: float = 0.1,
    change_tol: float = 1e-10,
) -> SteadyStateResult:
    """Filter an eigenstate of H by long evolution under g(H).

    The state is renormalized every step; convergence means the
    phase-aligned state change per unit model time drops below
    `change_tol`. If the horizon is exhausted first, the best iterate is
    returned with converged=False and an "unresolved within horizon"
    message (this happens e.g. for the defective pair at an EP, where
    the approach is algebraic rather than exponential).
    """
    h = build_hamiltonian(p).astype(complex)
    gh = g.apply(h)
    if psi_init is None:
        rng = np.random.default_rng(20230501)
        psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    else:
        psi = np.asarray(psi_init, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    prop = expm(-1j * dt * gh)
    steps = int(np.ceil(horizon / dt))
    converged = False
    for _ in range(steps):
        nxt = prop @ psi
        nxt = nxt / np.linalg.norm(nxt)
        ov = np.vdot(psi, nxt)
        aligned = nxt * (np.conj(ov) / abs(ov)) if abs(ov) > 0 else nxt
        change = np.linalg.norm(aligned - psi) / dt
        psi = aligned
        if change < change_tol:
            converged = True
            break
    eigval = complex(np.vdot(psi, h @ psi))
    residual = float(np.linalg.norm(h @ psi - eigval * psi))
    msg = ""
    if not converged:
        msg = (
            f"unresolved within horizon {horizon}: state change stayed above "
            f"{change_tol:.1e}/unit time (eigen-residual {residual:.3e})"
        )
    elif residual > 1e-6:
        converged = False
        msg = f"converged iterate has eigen-residual {residual:.3e} > 1e-6"
    return SteadyStateResult(
        state=psi, eigenvalue=eigval, residual=residual, converged=converged,
        message=msg,
    )


def population_ratios(state: np.ndarray, setting: MeasurementSetting) -> float:
    """P2 / P3 after the rotation U2 = U(a,b) V(c,d).

    Levels 1, 2, 3 are the |1>, |0>, |-1> components; the ratio is
    invariant under global phase and normalization of `state`.
    """
    psi = np.asarray(state, dtype=complex)
    rotated = setting_unitary(setting) @ (psi / np.linalg.norm(psi))
    p2 = abs(rotated[1]) ** 2
    p3 = abs(rotated[2]) ** 2
    if p3 <= 1e-12:
        raise ValueError(
            "level-3 population underflow after rotation; pick a setting "
            "that mixes weight into the third level"
        )
    return float(p2 / p3)


def _vieta_k(e1: complex, e2: complex, e3: complex) -> tuple[complex, complex]:
    """Model parameters (nonnegative branches) from an eigenvalue triple.

    Uses 12 k1^2 = 27 - 3 sigma2 + sigma3 and 6 k2^2 = sigma3 + 6 from
    the symmetric-function form of the characteristic cubic; complex
    intermediates are allowed so root finding can cross the branch.
    """
    sigma2 = e1 * e2 + e2 * e3 + e1 * e3
    sigma3 = e1 * e2 * e3
    k1 = np.sqrt((27.0 - 3.0 * sigma2 + sigma3) / 12.0 + 0j)
    k2 = np.sqrt((sigma3 + 6.0) / 6.0 + 0j)
    return k1, k2


def _closed_form_state(e: complex, k1: complex, k2: complex) -> np.ndarray:
    """Unnormalized eigenstate polynomial in (E, k1, k2)."""
    return np.array(
        [
            e * (e + 2.0 * k1 - 3.0) + k2**2 - 1.0,
            (e + 2.0 * k1 - 3.0) * (1.0 + k2),
            (1.0 + k2) ** 2,
        ],
        dtype=complex,
    )


def ratios_from_energies(
    energies: np.ndarray, settings=DEFAULT_SETTINGS
) -> np.ndarray:
    """Forward model: the three measured ratios F^(i) for a triple with
    sum 6, eigenstate i read out through setting i."""
    e1, e2, e3 = energies
    if abs((e1 + e2 + e3) - 6.0) > 1e-9:
        raise ValueError("eigenvalue triple must sum to 6")
    k1, k2 = _vieta_k(e1, e2, e3)
    out = np.empty(3)
    for i, (e, s) in enumerate(zip((e1, e2, e3), settings)):
        v = setting_unitary(s) @ _closed_form_state(e, k1, k2)
        p3 = abs(v[2]) ** 2
        if p3 <= 1e-300:
            raise ValueError(f"setting {i + 1} puts no weight on level 3")
        out[i] = abs(v[1]) ** 2 / p3
    return out


# deterministic coarse-simplex starts for the (E1, E2) search
_STARTS = (
    (4.0, 1.5), (3.5, 2.5), (3.0, 3.0), (2.0, 3.5),
    (5.0, 0.5), (4.5, 2.0), (2.5, 1.0), (3.8, 2.2),
)


def solve_eigenvalues(
    ratios: np.ndarray,
    settings=DEFAULT_SETTINGS,
    *,
    residual_tol: float = 1e-6,
    k_max: float = 1.5,
) -> np.ndarray:
    """Invert three measured ratios to the eigenvalue triple.

    Damped Gauss-Newton over (E1, E2) with E3 = 6 - E1 - E2 from eight
    deterministic starts. The ratio map is not globally injective:
    distant triples corresponding to |k1| of several units can fit the
    same ratios, so roots are restricted to the operating window
    k1^2, k2^2 in [0, k_max^2]. Among feasible roots the one with the
    smallest residual wins. The trace constraint is built in, so the
    returned triple sums to 6 exactly.
    """
    ratios = np.asarray(ratios, dtype=float)

    def feasible(x):
        es = np.array([x[0], x[1], 6.0 - x[0] - x[1]])
        if es[0] < es[1] - 1e-6 or es[1] < es[2] - 1e-6:
            return False  # labels follow the descending-eigenvalue convention
        k1, k2 = _vieta_k(*es)
        return (
            abs(k1.imag) < 1e-4
            and abs(k2.imag) < 1e-4
            and abs(k1) <= k_max + 1e-9
            and abs(k2) <= k_max + 1e-9
        )

    def resid(x):
        es = np.array([x[0], x[1], 6.0 - x[0] - x[1]])
        try:
            return ratios_from_energies(es, settings) - ratios
        except ValueError:
            return np.full(3, 1e6)

    def jac(x, r0):
        eps = 1e-7
        cols = []
        for k in range(2):
            xp = x.copy()
            xp[k] += eps
            cols.append((resid(xp) - r0) / eps)
        return np.column_stack(cols)

    best = None
    best_any = None
    landscape = []
    for start in _STARTS:
        x = np.array(start, dtype=float)
        for _ in range(60):
            r = resid(x)
            j = jac(x, r)
            try:
                step = np.linalg.lstsq(j, -r, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            lam = 1.0
            base = np.linalg.norm(r)
            while lam > 1e-6:
                cand = x + lam * step
                if np.linalg.norm(resid(cand)) < base:
                    break
                lam /= 2.0
            else:
                break
            x = x + lam * step
            if np.linalg.norm(lam * step) < 1e-13:
                break
        rnorm = float(np.linalg.norm(resid(x)))
        landscape.append((start, rnorm))
        if best_any is None or rnorm < best_any[1]:
            best_any = (x, rnorm)
        if feasible(x) and (best is None or rnorm < best[1]):
            best = (x, rnorm)
    x, rnorm = best if best is not None else best_any
    scale = max(np.linalg.norm(ratios), 1.0)
    if rnorm > residual_tol * scale:
        lines = ", ".join(f"start {s} -> residual {r:.3e}" for s, r in landscape)
        raise NumericsError(
            f"no eigenvalue triple fits the ratios within {residual_tol:.1e} "
            f"(best residual {rnorm:.3e}); landscape: {lines}"
        )
    return np.array([x[0], x[1], 6.0 - x[0] - x[1]])


def simulate_counts(
    state: np.ndarray,
    setting: MeasurementSetting,
    shots: int,
    *,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> TomographyRecord:
    """Populations after the setting rotation, optionally multinomial-sampled.

    shots=0 returns the exact populations; otherwise a seeded multinomial
    draw renormalized to sum 1.
    """
    if shots < 0:
        raise ValueError("shots must be >= 0")
    psi = np.asarray(state, dtype=complex)
    rotated = setting_unitary(setting) @ (psi / np.linalg.norm(psi))
    p = np.abs(rotated) ** 2
    p = p / p.sum()
    if shots > 0:
        if rng is None:
            rng = np.random.default_rng(seed)
        counts = rng.multinomial(shots, p)
        p = counts / counts.sum()
    return TomographyRecord(setting=setting, shots=shots, populations=p)


def _projectors(setting: MeasurementSetting) -> np.ndarray:
    """The three rank-1 measurement operators U2^dag |j><j| U2."""
    u = setting_unitary(setting)
    return np.stack([np.outer(u[j].conj(), u[j]) for j in range(3)])


def _check_complete(records) -> None:
    ops = np.concatenate([_projectors(r.setting) for r in records])
    flat = ops.reshape(len(ops), 9)
    basis = np.concatenate([flat.real, flat.imag], axis=1)
    _, sing, vt = np.linalg.svd(basis)
    rank = int((sing > 1e-10 * sing[0]).sum())
    if rank < 9:
        null = vt[rank:]
        dirs = []
        for row in null:
            m = (row[:9] + 1j * row[9:]).reshape(3, 3)
            m = (m + m.conj().T) / 2.0
            dirs.append(np.array2string(m, precision=3))
        raise ValueError(
            "measurement settings not informationally complete; "
            f"unconstrained Hermitian directions:\n" + "\n".join(dirs)
        )


def mle_reconstruct(records) -> np.ndarray:
    """Maximum-likelihood density matrix from population records.

    rho = T^dag T / tr(T^dag T) with T lower triangular, so the result
    is positive semidefinite with unit trace by construction. Quasi-
    Newton minimization of the multinomial negative log-likelihood with
    the analytic gradient; noiseless records (shots=0) enter with unit
    weight.
    """
    records = list(records)
    if not records:
        raise ValueError("no tomography records")
    _check_complete(records)
    ops = np.concatenate([_projectors(r.setting) for r in records])
    pobs = np.concatenate([np.asarray(r.populations, float) for r in records])
    weights = np.concatenate(
        [np.full(3, float(r.shots) if r.shots > 0 else 1.0) for r in records]
    )
    tril = np.tril_indices(3)

    def unpack(x):
        t = np.zeros((3, 3), dtype=complex)
        t[tril] = x[:6] + 1j * x[6:]
        return t

    def nll_grad(x):
        t = unpack(x)
        s = t.conj().T @ t
        trs = np.real(np.trace(s))
        if trs < 1e-300:
            return 1e12, np.zeros_like(x)
        rho = s / trs
        p = np.real(np.einsum("kij,ji->k", ops, rho))
        p = np.clip(p, 1e-12, None)
        f = float(-(weights * pobs * np.log(p)).sum())
        coef = -(weights * pobs / p)
        g_rho = np.einsum("k,kij->ij", coef, ops)
        g_s = (g_rho - np.real(np.trace(g_rho @ rho)) * np.eye(3)) / trs
        g_s = (g_s + g_s.conj().T) / 2.0
        gt = t @ g_s  # dL/dT_ij lives in (G T^dag)_{ji} = (T G)_{ij}
        grad = np.concatenate([2.0 * gt[tril].real, 2.0 * gt[tril].imag])
        return f, grad

    x0 = np.zeros(12)
    x0[:3] = 0.0
    x0[[0, 3, 5]] = 1.0 / np.sqrt(3.0)
    res = minimize(
        nll_grad, x0, jac=True, method="L-BFGS-B",
        options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-12},
    )
    t = unpack(res.x)
    s = t.conj().T @ t
    rho = s / np.real(np.trace(s))
    rho = (rho + rho.conj().T) / 2.0
    return rho


def fidelity(rho_i: np.ndarray, rho_j: np.ndarray) -> float:
    """Uhlmann fidelity [tr sqrt(sqrt(ri) rj sqrt(ri))]^2."""
    for rho in (rho_i, rho_j):
        rho = np.asarray(rho, dtype=complex)
        if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -1e-10:
            raise ValueError("fidelity requires positive semidefinite inputs")
        if abs(np.trace(rho).real - 1.0) > 1e-8:
            raise ValueError("fidelity requires unit-trace inputs")
    root = psd_sqrt(np.asarray(rho_i, dtype=complex))
    inner = psd_sqrt(root @ np.asarray(rho_j, dtype=complex) @ root)
    f = float(np.real(np.trace(inner)) ** 2)
    return min(max(f, 0.0), 1.0)


def records_to_jsonl(records) -> str:
    lines = []
    for r in records:
        lines.append(
            json.dumps(
                {
                    "a": r.setting.a, "b": r.setting.b,
                    "c": r.setting.c, "d": r.setting.d,
                    "shots": r.shots,
                    "p": [float(v) for v in r.populations],
                }
            )
        )
    return "\n".join(lines) + "\n"


def records_from_jsonl(text: str):
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        out.append(
            TomographyRecord(
                setting=MeasurementSetting(doc["a"], doc["b"], doc["c"], doc["d"]),
                shots=int(doc["shots"]),
                populations=np.array(doc["p"], dtype=float),
            )
        )
    return out


def density_to_json(rho: np.ndarray) -> str:
    """Nested arrays of [re, im] pairs."""
    rho = np.asarray(rho, dtype=complex)
    return json.dumps(
        [[[float(v.real), float(v.imag)] for v in row] for row in rho]
    )


def density_from_json(text: str) -> np.ndarray:
    data = json.loads(text)
    return np.array([[complex(re, im) for re, im in row] for row in data])
