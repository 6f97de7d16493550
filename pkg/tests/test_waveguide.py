import csv
import cmath

import numpy as np
import pytest

from nmlz.analytic import SolvabilityError
from nmlz.model import build_four_mode, build_two_mode, model_from_config
from nmlz.propagator import IntegrationConfig, propagate
from nmlz.waveguide import map_to_waveguide, simulate_waveguide, write_profile_csv


@pytest.fixture(scope="module")
def reference_model():
    return build_four_mode(-1.0, 0.5, 5.0, 1.0, 0.5, 1.0)


def test_couplings_are_imaginary_symmetric_nearest_neighbour(reference_model):
    array = map_to_waveguide(reference_model)
    K = array.couplings
    assert np.abs(K.real).max() == 0.0
    np.testing.assert_allclose(K, K.T)
    # diagonals of the square (1-2 and 3-4) are uncoupled, as are the self terms
    assert K[0, 1] == K[1, 0] == K[2, 3] == K[3, 2] == 0
    np.testing.assert_allclose(np.diag(K), 0.0)
    np.testing.assert_allclose(np.abs(K[0, 2]), 0.5)
    np.testing.assert_allclose(np.abs(K[0, 3]), 1.0)


@pytest.mark.parametrize("z_scale", [1.0, 0.4, 3.0])
def test_intensities_reproduce_model_populations(reference_model, z_scale):
    reference = propagate(reference_model).populations
    array = map_to_waveguide(reference_model, z_scale=z_scale)
    for port in (1, 3):
        result = simulate_waveguide(array, port)
        column = reference[:, port - 1]
        assert np.abs(result.intensities - column).max() < 1e-8 * column.max()


def test_scaling_of_propagation_constants(reference_model):
    array = map_to_waveguide(reference_model, z_scale=2.0)
    z = 3.0
    np.testing.assert_allclose(np.diag(array.coupled_mode_matrix(z)).real, np.diag(reference_model.evaluate(z / 2.0)).real / 2.0)


def test_complex_common_phase_and_theta_pi_map():
    phase = 0.9
    model = build_four_mode(-1.0, 0.5, 5.0, 1.0, 0.5 * cmath.exp(1j * phase), -0.6 * cmath.exp(1j * phase))
    array = map_to_waveguide(model)
    assert np.abs(array.couplings.real).max() == 0.0
    result = simulate_waveguide(array, 1)
    np.testing.assert_allclose(result.intensities, propagate(model).populations[:, 0], rtol=1e-6, atol=1e-10)


def test_unsolvable_and_non_four_mode_models_rejected(reference_model):
    with pytest.raises(SolvabilityError):
        map_to_waveguide(build_four_mode(-1.0, 0.5, 5.0, 1.0, 0.5, 1j))
    with pytest.raises(ValueError):
        map_to_waveguide(build_two_mode(1.0, 0.5))
    with pytest.raises(ValueError):
        map_to_waveguide(reference_model, z_scale=0.0)
    with pytest.raises(ValueError):
        simulate_waveguide(map_to_waveguide(reference_model), 5)


def test_round_trip_and_config(reference_model):
    array = map_to_waveguide(reference_model, z_scale=1.5)
    back = array.to_model()
    np.testing.assert_allclose(back.evaluate(0.3), reference_model.evaluate(0.3))
    cfg = array.to_config()
    assert cfg["kind"] == "waveguide" and cfg["z_scale"] == 1.5
    np.testing.assert_allclose(model_from_config(cfg).evaluate(0.3), reference_model.evaluate(0.3))


def test_large_coupling_bright_ports():
    # slopes of equal sign: the seed meets its gamma partner first and ports 1 and 3 carry the light
    array = map_to_waveguide(build_four_mode(-1.0, -0.5, 0.0, 0.0, 0.6, 0.3))
    intensities = simulate_waveguide(array, 1).intensities
    assert intensities[2] == pytest.approx(intensities[0], rel=0.015)
    assert intensities[3] < 1e-2 * intensities[0]
    assert intensities[1] < 1e-12 * intensities[0]


def test_profile_samples_and_csv(reference_model, tmp_path):
    array = map_to_waveguide(reference_model, z_span=30.0)
    result = simulate_waveguide(array, 1, IntegrationConfig(), samples=31)
    assert result.z[0] == pytest.approx(-30.0) and result.z[-1] == pytest.approx(30.0)
    assert result.profile.shape == (31, 4)
    np.testing.assert_allclose(result.profile[0], [1, 0, 0, 0])
    path = write_profile_csv(result, tmp_path / "profile.csv")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["z", "I1", "I2", "I3", "I4"]
    assert len(rows) == 32
