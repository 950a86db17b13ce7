import cmath
import math

import numpy as np
import pytest

from driftlab.lamb import (
    InconsistentModeError,
    MediumSpec,
    NoRootError,
    NotArrivedError,
    dispersion_residual,
    displacement_wave,
    load_media,
    mode_coefficients,
    mode_matrix,
    normalize_mode_vector,
    propagation_delay,
    solve_dispersion,
    surface_displacement,
)
from driftlab.signals import TWO_PI, Sinusoid

from oracles import scan_dispersion_root

F_OSC = 32768.0


@pytest.fixture(scope="module")
def acrylic():
    return load_media(thickness=5e-3)["acrylic glass"]


@pytest.fixture(scope="module")
def acrylic_mode(acrylic):
    return solve_dispersion(acrylic, F_OSC)


class TestMediumSpec:
    def test_rejects_transverse_faster_than_longitudinal(self):
        with pytest.raises(ValueError):
            MediumSpec("bogus", c_l=1000.0, c_t=2000.0, density=1000.0, thickness=5e-3)

    def test_table_loads_with_converted_density(self):
        media = load_media(thickness=5e-3)
        assert len(media) == 7
        acr = media["acrylic glass"]
        assert acr.c_l == 2700.0
        assert acr.c_t == 1300.0
        assert acr.density == 1180.0  # 1.18 g/cm3 -> kg/m3


class TestSolveDispersion:
    def test_acrylic_root_subsonic_and_tight(self, acrylic, acrylic_mode):
        assert acrylic_mode.c_s < acrylic.c_t
        res = dispersion_residual(acrylic, acrylic_mode.omega, acrylic_mode.k_a)
        assert res < 1e-9

    def test_acrylic_matches_scan_oracle(self, acrylic, acrylic_mode):
        oracle = scan_dispersion_root(F_OSC, acrylic.c_l, acrylic.c_t,
                                      acrylic.thickness / 2)
        assert acrylic_mode.c_s == pytest.approx(oracle, rel=1e-9)

    def test_quartz_glass_root(self):
        quartz = load_media(thickness=5e-3)["quartz glass"]
        mode = solve_dispersion(quartz, F_OSC)
        assert mode.c_s < quartz.c_t
        acrylic = load_media(thickness=5e-3)["acrylic glass"]
        assert mode.c_s < acrylic.c_l
        oracle = scan_dispersion_root(F_OSC, quartz.c_l, quartz.c_t,
                                      quartz.thickness / 2)
        assert mode.c_s == pytest.approx(oracle, rel=1e-9)

    def test_deterministic(self, acrylic):
        a = solve_dispersion(acrylic, F_OSC)
        b = solve_dispersion(acrylic, F_OSC)
        assert a == b  # bitwise-identical dataclass

    def test_thickness_monotonicity(self):
        prev = 0.0
        for d_mm in (5, 10, 15, 20):
            medium = load_media(thickness=d_mm * 1e-3)["acrylic glass"]
            mode = solve_dispersion(medium, F_OSC)
            assert mode.c_s > prev
            prev = mode.c_s

    def test_no_root_reports_range(self, acrylic):
        with pytest.raises(NoRootError, match="scan"):
            # scanning a sliver of velocity space that holds no root
            solve_dispersion(acrylic, F_OSC, scan_start=acrylic.c_t - 2.0)

    def test_full_thickness_convention_also_solves(self, acrylic):
        mode = solve_dispersion(acrylic, F_OSC, thickness_convention="full")
        assert mode.c_s < acrylic.c_t
        assert dispersion_residual(
            acrylic, mode.omega, mode.k_a, thickness_convention="full"
        ) < 1e-9

    def test_rejects_bad_frequency(self, acrylic):
        with pytest.raises(ValueError):
            solve_dispersion(acrylic, 0.0)


class TestModeCoefficients:
    def test_null_space_annihilated(self, acrylic, acrylic_mode):
        a, b = mode_coefficients(acrylic_mode, acrylic)
        m = mode_matrix(acrylic, acrylic_mode.omega, acrylic_mode.k_a)
        vec = np.array([a, b])
        assert np.linalg.norm(m @ vec) < 1e-6
        assert max(abs(a), abs(b)) == pytest.approx(1.0)

    def test_scale_invariant_normalisation(self, acrylic, acrylic_mode):
        a, b = mode_coefficients(acrylic_mode, acrylic)
        a2, b2 = normalize_mode_vector(2.0 * a, 2.0 * b)
        assert a2 == pytest.approx(a, abs=1e-15)
        assert b2 == pytest.approx(b, abs=1e-15)
        a3, b3 = normalize_mode_vector(1j * a, 1j * b)
        assert a3 == pytest.approx(a, abs=1e-15)
        assert b3 == pytest.approx(b, abs=1e-15)

    def test_off_root_rejected(self, acrylic, acrylic_mode):
        from dataclasses import replace

        bogus = replace(acrylic_mode, k_a=acrylic_mode.k_a * 1.5)
        with pytest.raises(InconsistentModeError):
            mode_coefficients(bogus, acrylic)


class TestSurfaceDisplacement:
    def test_zero_drive_gives_prestress(self, acrylic, acrylic_mode):
        drive = Sinusoid(0.0, F_OSC, 0.0)
        out = surface_displacement(
            acrylic_mode, acrylic, drive, z=0.055, t=1.0, prestress=0.25
        )
        assert out == 0.25

    def test_phase_zero_crossing(self, acrylic, acrylic_mode):
        drive = Sinusoid(20.0, F_OSC, 0.0)
        wave, t_t = displacement_wave(acrylic_mode, acrylic, drive, 0.0)
        # pick t where the sine argument is an exact multiple of pi
        n = 40
        t = (n * math.pi - wave.phase) / acrylic_mode.omega
        assert t > t_t
        out = surface_displacement(acrylic_mode, acrylic, drive, 0.0, t)
        assert abs(out) < 1e-9 * wave.amplitude

    def test_against_complex_field_oracle(self, acrylic, acrylic_mode):
        # Re{(alpha A - i k B) V e^(i(w(t - t_T) + phi - k z))} sampled over a
        # period must equal lambda sin(w t + Phi).
        drive = Sinusoid(20.0, F_OSC, 0.7)
        z = 0.055
        coupling = 1e-12
        wave, t_t = displacement_wave(
            acrylic_mode, acrylic, drive, z, coupling=coupling
        )
        a, b = acrylic_mode.coeff_a, acrylic_mode.coeff_b
        omega, k = acrylic_mode.omega, acrylic_mode.k_a
        alpha = cmath.sqrt(complex((omega / acrylic.c_l) ** 2 - k * k))
        coeff = alpha * a - 1j * k * b
        v_eff = drive.amplitude * coupling * acrylic.attenuation_ratio ** z
        for t in np.linspace(t_t * 1.01, t_t * 1.01 + 1.0 / F_OSC, 33):
            field = coeff * v_eff * cmath.exp(
                1j * (omega * (t - t_t) + drive.phase - k * z)
            )
            direct = surface_displacement(
                acrylic_mode, acrylic, drive, z, t, coupling=coupling
            )
            assert direct == pytest.approx(field.real, abs=1e-12 * v_eff + 1e-24)

    def test_linear_in_drive_amplitude(self, acrylic, acrylic_mode):
        w1, _ = displacement_wave(acrylic_mode, acrylic, Sinusoid(10.0, F_OSC, 0.2), 0.1)
        w2, _ = displacement_wave(acrylic_mode, acrylic, Sinusoid(30.0, F_OSC, 0.2), 0.1)
        assert w2.amplitude == pytest.approx(3.0 * w1.amplitude, rel=1e-12)

    def test_not_arrived_raises_unless_quiescent(self, acrylic, acrylic_mode):
        drive = Sinusoid(20.0, F_OSC, 0.0)
        z = 0.2
        t_t = z / acrylic_mode.c_s
        with pytest.raises(NotArrivedError):
            surface_displacement(acrylic_mode, acrylic, drive, z, t_t * 0.5)
        quiet = surface_displacement(
            acrylic_mode, acrylic, drive, z, t_t * 0.5,
            prestress=0.1, quiescent_ok=True,
        )
        assert quiet == 0.1


class TestPropagationDelay:
    def test_zero_distance(self, acrylic):
        assert propagation_delay(acrylic, F_OSC, 0.0) == 0.0

    def test_linear_in_distance(self, acrylic):
        d1 = propagation_delay(acrylic, F_OSC, 0.1)
        d2 = propagation_delay(acrylic, F_OSC, 0.2)
        assert d2 == pytest.approx(2.0 * d1, rel=1e-12)

    def test_matches_solved_velocity(self, acrylic, acrylic_mode):
        assert propagation_delay(acrylic, F_OSC, 0.2) == pytest.approx(
            0.2 / acrylic_mode.c_s, rel=1e-12
        )
