import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blochsim.lattice import (LatticeParams, MeanFieldState, ModeState, bloch_oscillation, energy,
                              k_values, kappa_values, mode_populations, momentum, momentum_modes,
                              momentum_sites, to_modes, to_sites, uniform_state)
from conftest import random_state


def direct_modes(a):
    L = a.size
    return np.array([sum(np.exp(1j * 2 * np.pi * k / L * l) * a[l - 1] for l in range(1, L + 1))
                     for k in k_values(L)]) / math.sqrt(L)


def direct_sites(b):
    L = b.size
    ks = k_values(L)
    return np.array([sum(np.exp(-1j * 2 * np.pi * k / L * l) * b[j] for j, k in enumerate(ks))
                     for l in range(1, L + 1)]) / math.sqrt(L)


class TestParams:
    def test_derived_quantities(self):
        p = LatticeParams(J=1.0, F=0.4, L=5, W=0.1 / 3, N=15)
        assert p.g == pytest.approx(0.1, rel=1e-14)
        assert p.filling == 3
        assert p.T_B == pytest.approx(2 * np.pi / 0.4)
        assert p.T_J == pytest.approx(2 * np.pi)
        assert p.T_W == pytest.approx(60 * np.pi)

    def test_even_L_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            LatticeParams(J=1, g=0.1, F=0.1, L=4)

    def test_inconsistent_g_rejected(self):
        with pytest.raises(ValueError):
            LatticeParams(J=1, g=0.2, F=0.1, L=5, W=0.1 / 3, N=15)

    def test_negative_coupling_rejected(self):
        with pytest.raises(ValueError):
            LatticeParams(J=1, g=-0.1, F=0.1, L=5)


class TestTransforms:
    def test_uniform_maps_to_zero_mode(self):
        b = to_modes(uniform_state(5))
        assert b.modes[b.index_of(0)] == pytest.approx(math.sqrt(5))
        assert np.allclose(np.delete(b.modes, b.index_of(0)), 0, atol=1e-14)

    def test_plane_wave(self):
        L = 5
        a = np.exp(-1j * 2 * np.pi * np.arange(1, L + 1) / L)
        b = to_modes(MeanFieldState(a))
        assert abs(b.modes[b.index_of(1)]) == pytest.approx(math.sqrt(5))
        assert np.allclose(np.delete(b.modes, b.index_of(1)), 0, atol=1e-13)

    def test_parseval_against_direct_sum(self, rng):
        a = random_state(rng, 7)
        b = to_modes(MeanFieldState(a)).modes
        assert np.allclose(b, direct_modes(a), atol=1e-12)
        assert np.sum(abs(b) ** 2) == pytest.approx(np.sum(abs(a) ** 2), rel=1e-12)

    @pytest.mark.parametrize("L", [3, 5, 7, 9])
    def test_round_trip(self, rng, L):
        a = random_state(rng, L, (100,))
        back = to_sites(to_modes(MeanFieldState(a))).amps
        assert np.max(abs(back - a)) < 1e-12

    def test_zero_mode_to_sites(self):
        L = 7
        b = np.zeros(L, complex)
        b[(L - 1) // 2] = math.sqrt(L)
        assert np.allclose(to_sites(ModeState(b)).amps, 1.0, atol=1e-14)

    def test_two_modes_against_direct_inverse(self):
        L = 5
        b = np.zeros(L, complex)
        b[0], b[3] = 1.2 - 0.3j, 0.5j
        assert np.allclose(to_sites(ModeState(b)).amps, direct_sites(b), atol=1e-13)

    def test_k_ordering(self):
        assert list(k_values(5)) == [-2, -1, 0, 1, 2]
        assert kappa_values(3)[2] == pytest.approx(2 * np.pi / 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.lists(st.floats(-3, 3), min_size=26, max_size=26))
def test_round_trip_property(h, vals):
    L = 2 * h + 1
    a = np.array(vals[:L]) + 1j * np.array(vals[13:13 + L])
    back = to_sites(to_modes(MeanFieldState(a))).amps
    assert np.max(abs(back - a)) < 1e-12


class TestMomentum:
    def test_exact_bo_is_minus_sine(self):
        p = LatticeParams(J=1, g=0.1, F=0.4, L=5)
        t = np.linspace(0, 40, 57)
        a = bloch_oscillation(p, t)
        assert np.allclose(momentum_sites(a, p.F, t), -np.sin(p.F * t), atol=1e-13)

    def test_site_and_mode_forms_agree(self, rng):
        L, F = 7, 0.3
        for t in (0.0, 1.3, 17.0):
            b = np.exp(2j * np.pi * rng.random(L))  # equipartition |b_k|^2 = 1
            a = to_sites(ModeState(b, t)).amps
            assert momentum_sites(a, F, t) == pytest.approx(momentum_modes(b, F, t), abs=1e-12)
        a = random_state(rng, 5, (20,))
        ts = rng.random(20) * 10
        ms = momentum_modes(to_modes(MeanFieldState(a)).modes, F, ts)
        assert np.allclose(momentum_sites(a, F, ts), ms, atol=1e-12)

    def test_mode_at_kappa_equal_Ft_has_zero_momentum(self):
        L, F = 5, 0.5
        kap = 2 * np.pi / L
        t = kap / F
        b = np.zeros(L, complex)
        b[3] = math.sqrt(L)
        assert momentum(ModeState(b, t), F) == pytest.approx(0.0, abs=1e-14)

    def test_dispatch(self, rng):
        a = MeanFieldState(random_state(rng, 5), 2.0)
        assert momentum(a, 0.2) == pytest.approx(momentum(to_modes(a), 0.2), abs=1e-12)


class TestPopulationsAndEnergy:
    def test_exact_bo_population(self):
        p = LatticeParams(J=1, g=0.1, F=0.4, L=5)
        pops = mode_populations(to_modes(MeanFieldState(bloch_oscillation(p, 3.3), 3.3)))
        assert np.allclose(pops, [0, 0, 1, 0, 0], atol=1e-14)

    def test_equipartition(self):
        pops = mode_populations(ModeState(np.ones(5, complex)))
        assert np.allclose(pops, 0.2)

    def test_random_sum(self, rng):
        a = random_state(rng, 5)
        pops = mode_populations(to_modes(MeanFieldState(a)))
        assert pops.sum() == pytest.approx(np.sum(abs(a) ** 2) / 5, rel=1e-12)

    def test_energy_uniform(self):
        p = LatticeParams(J=1, g=0.1, F=0.4, L=5)
        assert energy(uniform_state(5), p) == pytest.approx(-5.25, abs=1e-14)

    def test_energy_direct_sum(self, rng):
        p = LatticeParams(J=1, g=0.0, F=0.3, L=5)
        t = np.pi / (2 * p.F)
        a = np.ones(5, complex)
        direct = -0.5 * p.J * sum(np.exp(1j * p.F * t) * np.conj(a[(l + 1) % 5]) * a[l]
                                  + np.exp(-1j * p.F * t) * np.conj(a[l]) * a[(l + 1) % 5]
                                  for l in range(5))
        assert energy(MeanFieldState(a, t), p) == pytest.approx(direct.real, abs=1e-13)
        assert abs(energy(MeanFieldState(a, t), p)) < 1e-12  # cos(pi/2)

        b = random_state(rng, 5)
        pg = p.replace(g=0.7)
        n = abs(b) ** 2
        ref = -0.5 * sum(np.exp(1j * 0.3 * 2.0) * np.conj(b[(l + 1) % 5]) * b[l]
                         + np.exp(-1j * 0.3 * 2.0) * np.conj(b[l]) * b[(l + 1) % 5]
                         for l in range(5)).real + 0.35 * np.sum(n * (n - 2))
        assert energy(MeanFieldState(b, 2.0), pg) == pytest.approx(ref, rel=1e-12)

    def test_energy_zero_state(self):
        p = LatticeParams(J=1, g=0.1, F=0.4, L=5)
        assert energy(MeanFieldState(np.zeros(5, complex)), p) == 0.0
