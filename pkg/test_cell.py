import warnings

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from multihom.cell import (
    corrector_and_tensor, corrector_distance, effective_tensor, effective_tensor_field, energy_norm,
    solve_corrector, voigt_reuss_bounds,
)
from multihom.coeff import CoefficientSpec, FourierTerm, family
from multihom.errors import ConvergenceError, DimensionError, PreconditionError, ResolutionError, StructureError

ROOT3 = np.sqrt(3.0)
ORIGIN = [0.0, 0.0]


def test_identity_has_trivial_corrector(identity2):
    corrector, tensor = corrector_and_tensor(identity2, ORIGIN, (1.0, 2.5))
    assert np.abs(corrector.values).max() < 1e-12
    assert np.allclose(tensor.matrix, np.eye(2), atol=1e-12)
    assert energy_norm(corrector) < 1e-20


def test_laminate_gives_harmonic_and_arithmetic_means(laminate):
    A_hat = effective_tensor(laminate, ORIGIN, (1.0, 1.0), resolution=128).matrix
    assert np.allclose(A_hat, np.diag([ROOT3, 2.0]), atol=1e-6)


@pytest.mark.parametrize("lam2", [1.5, 2.5, 3.0, 7.25])
def test_laminate_tensor_ignores_inactive_scale(laminate, lam2):
    A_hat = effective_tensor(laminate, ORIGIN, (1.0, lam2), resolution=128).matrix
    assert np.allclose(A_hat, np.diag([ROOT3, 2.0]), atol=1e-6)


def test_laminate_corrector_energy(laminate):
    corrector = solve_corrector(laminate, ORIGIN, (1.0, 1.0), resolution=128)
    # mean |chi'|^2 = 3 mean(1/a^2) - 2 sqrt(3) mean(1/a) + 1 for a = 2 + sin
    assert energy_norm(corrector) == pytest.approx(2.0 / ROOT3 - 1.0, abs=1e-8)
    assert corrector.metadata()["lambda"] == [1.0, 1.0]


def test_corrector_distance_to_itself_is_zero(laminate):
    corrector = solve_corrector(laminate, ORIGIN, (1.0, 2.5))
    assert corrector_distance(corrector, corrector) == 0.0


def test_corrector_distance_sees_only_active_scales(laminate):
    c1 = solve_corrector(laminate, ORIGIN, (1.0, 2.0))
    c2 = solve_corrector(laminate, ORIGIN, (1.0, 2.5))
    assert corrector_distance(c1, c2) < 1e-8


def test_corrector_distance_grows_with_lambda_gap():
    spec = family("laminate2", 2)
    base = solve_corrector(spec, ORIGIN, (1.0, 2.0))
    near = solve_corrector(spec, ORIGIN, (1.0, 2.1))
    far = solve_corrector(spec, ORIGIN, (1.0, 3.0))
    assert 0.0 < corrector_distance(base, near) < corrector_distance(base, far)


def test_corrector_distance_rejects_other_resolution(laminate):
    c1 = solve_corrector(laminate, ORIGIN, (1.0, 1.0), resolution=32)
    c2 = solve_corrector(laminate, ORIGIN, (1.0, 1.0), resolution=64)
    with pytest.raises(DimensionError):
        corrector_distance(c1, c2)


def test_voigt_reuss_bounds_of_laminate(laminate):
    lower, upper = voigt_reuss_bounds(laminate, ORIGIN)
    assert np.allclose(lower, ROOT3 * np.eye(2), atol=1e-10)
    assert np.allclose(upper, 2.0 * np.eye(2), atol=1e-12)


def test_voigt_reuss_bounds_need_scalar_coefficient():
    spec = CoefficientSpec(dimension=2, num_scales=1, constant=2.0,
                           terms=(FourierTerm(0.3, ((1, 0),), matrix=((0.0, 1.0), (1.0, 0.0))),))
    with pytest.raises(StructureError):
        voigt_reuss_bounds(spec, ORIGIN)


@settings(deadline=None)
@given(st.floats(min_value=1.0, max_value=4.0))
def test_tensor_is_symmetric_and_between_bounds(lam2):
    spec = family("laminate2", 2)
    A_hat = effective_tensor(spec, ORIGIN, (1.0, lam2)).matrix
    lower, upper = voigt_reuss_bounds(spec, ORIGIN)
    assert np.allclose(A_hat, A_hat.T, atol=1e-12)
    assert np.linalg.eigvalsh(A_hat - lower).min() >= -1e-8
    assert np.linalg.eigvalsh(upper - A_hat).min() >= -1e-8


def test_anisotropic_weights_pass_through():
    A_hat = effective_tensor(family("anisotropic", 2), ORIGIN, (1.0, 1.0)).matrix
    assert np.allclose(A_hat, np.diag([2.0, 3.0]), atol=1e-12)


def test_tensor_field_follows_slow_modulation():
    spec = family("modulated", 2)
    field_ = effective_tensor_field(spec, [[0.0, 1.0], [0.0, 1.0]], (1.0, 1.0), resolution=128, workers=2)
    assert field_.tensors.shape == (2, 2, 2, 2)
    # a = 2 + 0.8 (1 + 0.25 x_1) sin: harmonic mean sqrt(4 - amp^2)
    assert field_.tensors[0, 0, 0, 0] == pytest.approx(np.sqrt(4.0 - 0.64), abs=1e-6)
    assert field_.tensors[1, 0, 0, 0] == pytest.approx(ROOT3, abs=1e-6)
    sample = field_.sampler()(np.array([[0.5, 0.5]]))
    assert sample.shape == (1, 2, 2)
    assert sample[0, 0, 0] == pytest.approx(0.5 * (np.sqrt(3.36) + ROOT3), abs=1e-6)


def test_lambda_below_one_rejected(laminate):
    with pytest.raises(PreconditionError):
        solve_corrector(laminate, ORIGIN, (0.5, 1.0))


@pytest.mark.parametrize("resolution,lam", [(48, (1.0, 1.0)), (8, (1.0, 1.0)), (16, (1.0, 3.0))])
def test_resolution_rules(laminate, resolution, lam):
    with pytest.raises(ResolutionError):
        solve_corrector(laminate, ORIGIN, lam, resolution=resolution)


def test_wrong_slow_point(laminate):
    with pytest.raises(DimensionError):
        solve_corrector(laminate, [0.0], (1.0, 1.0))


def test_quasi_spec_rejected():
    with pytest.raises(StructureError):
        solve_corrector(family("golden_quasi", 1), [0.0], (1.0,))


def test_iteration_cap_raises():
    with pytest.raises(ConvergenceError) as info:
        solve_corrector(family("laminate2", 2), ORIGIN, (1.0, 2.5), maxiter=1)
    assert len(info.value.residuals) == 2


def test_energy_norm_bounded_across_lambda_sweep():
    spec = family("laminate2", 2)
    energies = []
    for lam2 in [1.0, 2.0, 4.5, 16.0, 64.0]:
        resolution = max(64, 8 * int(lam2))
        energies.append(energy_norm(solve_corrector(spec, ORIGIN, (1.0, lam2), resolution=resolution)))
    # mean a |M grad chi_j|^2 <= mean a = 2 per direction and a >= 1
    assert min(energies) > 0.0
    assert max(energies) <= 4.0 + 1e-8


def test_spectral_operators_pass_explicit_axes(laminate):
    with warnings.catch_warnings():
        warnings.simplefilter("error", DeprecationWarning)
        solve_corrector(laminate, ORIGIN, (1.0, 2.5))
