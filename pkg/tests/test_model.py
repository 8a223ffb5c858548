import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eplab.model import (
    ConeDirection,
    ModelParams,
    analytic_eigenstate,
    build_hamiltonian,
    build_tb_block,
    char_poly,
    cone_expansion,
    discriminant,
    line_spectrum,
    spectrum,
    sweep_tracked_spectra,
)


def test_hamiltonian_entries():
    h = build_hamiltonian(ModelParams(0.3, 0.4))
    want = np.array(
        [[3.6, 0.6, 0.0], [1.4, 0.0, 0.6], [0.0, 1.4, 2.4]]
    )
    assert np.allclose(h, want)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(0.0, 0.0, variant="bogus")
    with pytest.raises(ValueError):
        ModelParams(0.0, 0.0, block=(0, 1, 2))
    assert ModelParams(0.0, 0.0).block == (-1, 0, 1)
    assert ModelParams(0.0, 0.0, variant="next_nearest").block == (-2, -1, 0, 1, 2)


def test_char_poly_matches_determinant():
    p = ModelParams(0.37, -0.82)
    cp = char_poly(p)
    h = build_hamiltonian(p)
    for e in (-1.3, 0.0, 2.5, 4.1):
        det = np.linalg.det(h - e * np.eye(3))
        poly = ((cp.f3 * e + cp.f2) * e + cp.f1) * e + cp.f0
        assert abs(det - poly) < 1e-10


def test_discriminant_reference_values():
    assert discriminant(0.0, 0.0) == pytest.approx(68.0)
    assert discriminant(0.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert discriminant(0.5, 1.0) == pytest.approx(256.0)


def test_discriminant_matches_cubic_formula():
    from eplab.cubic import cubic_discriminant

    rng = np.random.default_rng(0)
    for _ in range(50):
        k1, k2 = rng.uniform(-2, 2, size=2)
        cp = char_poly(ModelParams(k1, k2))
        assert discriminant(k1, k2) == pytest.approx(
            cubic_discriminant(cp.f3, cp.f2, cp.f1, cp.f0), rel=1e-10, abs=1e-9
        )


def test_spectrum_exact_at_conical_point():
    vals = spectrum(ModelParams(0.0, 1.0)).eigenvalues
    assert np.allclose(np.sort(vals.real)[::-1], [3.0, 3.0, 0.0], atol=1e-12)
    assert np.abs(vals.imag).max() < 1e-12


def test_spectrum_matches_numpy_eigenvalues():
    p = ModelParams(0.3, 0.4)
    ours = np.sort_complex(spectrum(p).eigenvalues)
    ref = np.sort_complex(np.linalg.eigvals(build_hamiltonian(p)))
    assert np.abs(ours - ref).max() < 1e-9


def test_line_spectrum_k2_line():
    got = line_spectrum(ModelParams(-0.4, 1.0))
    assert np.allclose(got, [3.8, 2.2, 0.0])


def test_line_spectrum_k1_line_branch_labels():
    below = line_spectrum(ModelParams(0.0, 0.5))
    assert below[1] == 3.0 and below[0] > 3.0 > below[2]
    above = line_spectrum(ModelParams(0.0, 1.2))
    assert above[0] == 3.0
    with pytest.raises(ValueError):
        line_spectrum(ModelParams(0.0, 1.5))  # 17 - 8 k2^2 < 0
    with pytest.raises(ValueError):
        line_spectrum(ModelParams(0.2, 0.5))  # off both lines


def test_cone_axis_slopes():
    sp, sm = cone_expansion(ConeDirection(0.0))
    assert (sp, sm) == pytest.approx((2.0, -2.0))
    sp, sm = cone_expansion(ConeDirection(np.pi / 2))
    assert sp == pytest.approx(0.0, abs=1e-12)
    assert sm == pytest.approx(-4.0 / 3.0)


def test_analytic_eigenstate_examples():
    v = analytic_eigenstate(ModelParams(0.0, 1.0), 3.0)
    assert np.allclose(np.abs(v), [0.0, 0.0, 1.0], atol=1e-12)
    v0 = analytic_eigenstate(ModelParams(0.0, 1.0), 0.0)
    assert np.allclose(np.abs(v0), np.abs(np.array([0.0, -6.0, 4.0]) / np.sqrt(52.0)))
    with pytest.raises(ValueError):
        analytic_eigenstate(ModelParams(0.0, -1.0), 3.0)
    with pytest.raises(ValueError):
        analytic_eigenstate(ModelParams(0.0, 1.0), 1.2345)  # not an eigenvalue


def test_tb_block_structure():
    p = ModelParams(0.2, 0.3)
    h = build_tb_block(p)
    assert h.shape == (3, 3)
    assert np.allclose(np.diag(h), [(m + 0.2) ** 2 for m in (-1, 0, 1)])
    assert h[0, 1] == pytest.approx((1 - 0.3) / 2)
    assert h[1, 0] == pytest.approx((1 + 0.3) / 2)
    h5 = build_tb_block(ModelParams(0.2, 0.3, variant="next_nearest"))
    assert h5.shape == (5, 5)
    assert h5[0, 2] == pytest.approx((1 - 0.3) / 2)
    assert h5[2, 0] == pytest.approx((1 + 0.3) / 2)


def test_next_nearest_degenerate_spectrum():
    h = build_tb_block(ModelParams(0.5, 1.0, variant="next_nearest"))
    vals = np.sort(np.linalg.eigvals(h).real)
    assert np.allclose(vals, [0.25, 0.25, 2.25, 2.25, 6.25], atol=1e-9)


def test_sweep_tracking_continuity():
    path = [ModelParams(float(k1), 1.0) for k1 in np.arange(-0.3, 0.31, 0.02)]
    spectra = sweep_tracked_spectra(path)
    branches = np.array([sp.eigenvalues.real for sp in spectra])
    # tracked branches are continuous (no jumps larger than the step scale)
    assert np.abs(np.diff(branches, axis=0)).max() < 0.1
    assert spectra[1].ordering_tag == "sweep-tracked"
    with pytest.raises(ValueError):
        sweep_tracked_spectra(
            [ModelParams(0.0, 0.0), ModelParams(0.2, 0.0)]
        )


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
@settings(max_examples=80, deadline=None)
def test_vieta_relations(k1, k2):
    vals = spectrum(ModelParams(k1, k2)).eigenvalues
    assert np.sum(vals) == pytest.approx(6.0, abs=1e-9)
    assert np.prod(vals) == pytest.approx(6.0 * (k2**2 - 1.0), abs=1e-8)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
@settings(max_examples=60, deadline=None)
def test_discriminant_sign_matches_spectrum_reality(k1, k2):
    disc = float(discriminant(k1, k2))
    vals = spectrum(ModelParams(k1, k2)).eigenvalues
    if disc > 1e-6:
        assert np.abs(vals.imag).max() < 1e-6
    elif disc < -1e-6:
        assert np.abs(vals.imag).max() > 1e-9
