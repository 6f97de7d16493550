import csv
import cmath
import json
import math

import numpy as np
import pytest

from nmlz.analytic import population_matrix, squeezing_extrema
from nmlz.model import build_four_mode, build_two_mode
from nmlz.observables import (
    bogoliubov_coefficients,
    conservation_residuals,
    population_table,
    quadrature_extrema,
    quadrature_variance,
    spontaneous_populations,
    stimulated_populations,
    write_populations_csv,
    write_quadrature_json,
)
from nmlz.propagator import propagate


def two_mode_squeezer(r: float) -> np.ndarray:
    """Textbook two-mode squeezing transformation, quadrature extrema exp(+-2r) / 2."""
    return np.array([[math.cosh(r), math.sinh(r)], [math.sinh(r), math.cosh(r)]], dtype=complex)


def test_vacuum_variance_is_one_half():
    identity = np.eye(4, dtype=complex)
    phis = np.linspace(0, math.pi, 7)
    for pair in ((0, 1), (0, 2), (2, 3)):
        np.testing.assert_allclose(quadrature_variance(identity, pair, phis), 0.5)
    np.testing.assert_allclose(spontaneous_populations(identity), 0.0)


@pytest.mark.parametrize("r", [0.1, 0.6, 1.3])
def test_two_mode_squeezer_extrema(r):
    report = quadrature_extrema(two_mode_squeezer(r), (0, 1))
    assert report.x_plus_sq == pytest.approx(0.5 * math.exp(2 * r))
    assert report.x_minus_sq == pytest.approx(0.5 * math.exp(-2 * r))
    assert report.shift == pytest.approx(0.0, abs=1e-12)
    assert report.squeezed
    # the grid cross-check brackets the closed form
    assert report.grid_x_minus_sq == pytest.approx(report.x_minus_sq, abs=1e-5 * report.x_plus_sq)
    assert report.grid_x_plus_sq == pytest.approx(report.x_plus_sq, rel=1e-5)


def test_propagated_two_mode_squeezing():
    result = propagate(build_two_mode(1.0, 0.5))
    stay = math.exp(math.pi / 4)
    report = quadrature_extrema(result, (0, 1))
    assert report.x_minus_sq == pytest.approx(stay - 0.5 - math.sqrt(stay * (stay - 1)), rel=1e-6)
    assert report.x_plus_sq * report.x_minus_sq == pytest.approx(0.25, rel=1e-6)
    assert report.pair == ("A_1", "B_1")


def test_optimal_angle_follows_coupling_phase():
    base = quadrature_extrema(propagate(build_two_mode(1.0, 0.5)), (0, 1))
    phase = 0.8
    rotated = quadrature_extrema(propagate(build_two_mode(1.0, 0.5 * cmath.exp(1j * phase))), (0, 1))
    shift = (rotated.optimal_angle - base.optimal_angle) % math.pi
    assert shift == pytest.approx((-phase / 2) % math.pi, abs=1e-6)
    assert rotated.x_minus_sq == pytest.approx(base.x_minus_sq, rel=1e-6)


@pytest.mark.parametrize(
    "b1,b2,gamma",
    [(-1.0, -0.5, 0.4), (-1.0, 0.5, 0.6), (2.0, 0.7, -0.5)],
)
def test_four_mode_pair_extrema_match_closed_form(b1, b2, gamma):
    g = 0.45
    result = propagate(build_four_mode(b1, b2, 1.0, 0.0, g, gamma))
    for name, pair in (("same_spin_AB", (0, 2)), ("cross_spin_AB", (0, 3))):
        plus, minus, shift = squeezing_extrema(name, g, gamma, b1, b2)
        report = quadrature_extrema(result, pair)
        assert report.x_plus_sq == pytest.approx(plus, rel=1e-6)
        assert report.x_minus_sq == pytest.approx(minus, rel=1e-6)
        assert report.shift == pytest.approx(shift, rel=1e-6, abs=1e-9)
    same_block = quadrature_variance(result, (0, 1), np.linspace(0, math.pi, 181))
    assert np.ptp(same_block) < 1e-6


def test_bogoliubov_blocks():
    M = two_mode_squeezer(0.4)
    u, v = bogoliubov_coefficients(M)
    np.testing.assert_allclose(u, np.diag(np.diag(M)))
    np.testing.assert_allclose(v, M - np.diag(np.diag(M)))


def test_populations_and_spontaneous_match_closed_form():
    g, gamma, b1, b2 = 0.5, 0.6, -1.0, 0.5
    result = propagate(build_four_mode(b1, b2, 5.0, 1.0, g, gamma))
    table = population_table(result, n0=3)
    exact = population_matrix(g, gamma, b1, b2)
    assert table.seed_scale == 3
    np.testing.assert_allclose(table.stimulated[:, 0], 3 * exact.stimulated[:, 0], rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(table.spontaneous, exact.spontaneous, rtol=1e-5)
    np.testing.assert_allclose(stimulated_populations(result), result.populations)


def test_conservation_forms_differ_under_same_block_mixing():
    angle = 0.3
    rotation = np.array([[math.cos(angle), math.sin(angle)], [-math.sin(angle), math.cos(angle)]])
    M = np.eye(4, dtype=complex)
    M[:2, :2] = rotation
    residuals = conservation_residuals(M)
    assert residuals.pseudo_unitarity < 1e-15
    np.testing.assert_allclose(residuals.signed_column_residuals, 0.0, atol=1e-15)
    assert residuals.column_residuals[0] == pytest.approx(2 * math.sin(angle) ** 2)


def test_writers(tmp_path):
    g, gamma, b1, b2 = 0.5, 0.6, -1.0, 0.5
    result = propagate(build_four_mode(b1, b2, 5.0, 1.0, g, gamma))
    table = population_table(result)
    path = write_populations_csv(table, tmp_path / "populations.csv", seeds=[0], analytic=population_matrix(g, gamma, b1, b2))
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "mode", "n_stimulated_from_A_up", "n_spontaneous", "analytic_stimulated_from_A_up", "analytic_spontaneous",
    ]
    assert [row[0] for row in rows[1:]] == ["A_up", "A_down", "B_up", "B_down"]
    report = quadrature_extrema(result, (0, 2))
    data = json.loads(write_quadrature_json([report], tmp_path / "quadrature.json").read_text())
    assert data[0]["pair"] == ["A_up", "B_up"]
    assert data[0]["x_minus_sq"] == pytest.approx(report.x_minus_sq)


def test_invalid_pair_raises():
    with pytest.raises(ValueError):
        quadrature_variance(np.eye(2), (0, 0), 0.0)
    with pytest.raises(ValueError):
        quadrature_variance(np.eye(3), (0, 1), 0.0)
