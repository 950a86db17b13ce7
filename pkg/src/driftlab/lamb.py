"""Fundamental antisymmetric plate-wave dispersion and surface response.

The plate carries the injected vibration from the transducer to the crystal.
At the excitation frequencies of interest (tens of kHz) and desk-scale plate
thicknesses, the fundamental antisymmetric mode is subsonic: its phase
velocity sits below the transverse bulk speed, which puts the through-
thickness wavenumbers on the imaginary axis.  All trigonometric factors are
therefore evaluated in complex arithmetic (tan(ix) = i tanh(x)) so a single
code path covers both sides of the bulk-speed cutoffs.

The characteristic equation, in cross-multiplied residual form with
``q = k**2 - beta**2``:

    tan(alpha*h) * q**2  +  4*alpha*beta*k**2 * tan(beta*h)  =  0,

with ``alpha**2 = (w/c_l)**2 - k**2`` and ``beta**2 = (w/c_t)**2 - k**2``.
``h`` is the half plate thickness by default (the tangent arguments span the
mid-plane to the surface); a convention switch evaluates the full thickness
instead for comparison.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .signals import TWO_PI, Sinusoid, wrap_phase

# Bracketing resolution of the phase-velocity scan (m/s) and its lower edge.
SCAN_STEP = 1.0
SCAN_START = 10.0

RESIDUAL_LIMIT = 1e-9
DETERMINANT_LIMIT = 1e-6


class NoRootError(RuntimeError):
    """The phase-velocity scan found no sign change in its bracket."""


class InconsistentModeError(ValueError):
    """Mode coefficients requested at a point that does not satisfy the
    dispersion relation."""


class NotArrivedError(ValueError):
    """Displacement queried before the wavefront reaches the position."""


@dataclass(frozen=True)
class MediumSpec:
    """Solid plate material record.

    Wave speeds in m/s, density in kg/m^3, thickness in metres.
    ``attenuation_ratio`` is the per-metre amplitude decay factor applied as
    ``attenuation_ratio ** z`` along the propagation path.
    """

    name: str
    c_l: float
    c_t: float
    density: float
    thickness: float
    attenuation_ratio: float = 0.9

    def __post_init__(self):
        if self.c_l <= 0.0 or self.c_t <= 0.0:
            raise ValueError("wave speeds must be > 0")
        if self.c_t >= self.c_l:
            raise ValueError(
                f"transverse speed must be below longitudinal "
                f"({self.c_t} >= {self.c_l}) for {self.name!r}"
            )
        if self.density <= 0.0:
            raise ValueError("density must be > 0")
        if self.thickness <= 0.0:
            raise ValueError("thickness must be > 0")
        if not 0.0 < self.attenuation_ratio <= 1.0:
            raise ValueError("attenuation_ratio must lie in (0, 1]")


@dataclass(frozen=True)
class LambMode:
    """Solved fundamental antisymmetric mode at one frequency.

    ``lambda_amp`` is the out-of-plane surface displacement per volt of drive
    at unit transducer coupling; ``phi_offset`` is the drive-independent part
    of the displacement phase.
    """

    omega: float
    k_a: float
    c_s: float
    coeff_a: complex
    coeff_b: complex
    lambda_amp: float
    phi_offset: float


def _half_thickness(medium: MediumSpec, convention: str) -> float:
    if convention == "half":
        return 0.5 * medium.thickness
    if convention == "full":
        return medium.thickness
    raise ValueError(f"unknown thickness convention {convention!r}")


def _wavenumbers(medium: MediumSpec, omega: float, k: float) -> tuple[complex, complex]:
    alpha = cmath.sqrt(complex((omega / medium.c_l) ** 2 - k * k))
    beta = cmath.sqrt(complex((omega / medium.c_t) ** 2 - k * k))
    return alpha, beta


def _characteristic_terms(
    medium: MediumSpec, omega: float, k: float, h: float
) -> tuple[complex, complex]:
    alpha, beta = _wavenumbers(medium, omega, k)
    q = k * k - beta * beta
    t1 = cmath.tan(alpha * h) * q * q
    t2 = 4.0 * alpha * beta * k * k * cmath.tan(beta * h)
    return t1, t2


def dispersion_residual(
    medium: MediumSpec, omega: float, k_a: float, thickness_convention: str = "half"
) -> float:
    """Normalised magnitude of the characteristic equation at (omega, k_a)."""
    h = _half_thickness(medium, thickness_convention)
    t1, t2 = _characteristic_terms(medium, omega, k_a, h)
    denom = abs(t1) + abs(t2)
    if denom == 0.0:
        return math.inf
    return abs(t1 + t2) / denom


def _characteristic_value(medium: MediumSpec, omega: float, c_s: float, h: float) -> float:
    """Real-valued characteristic function used for bracketing.

    Below both bulk speeds the cross-multiplied form is purely imaginary, so
    the imaginary part is the natural scan function; the dominant component
    is selected to stay robust against rounding residue.
    """
    t1, t2 = _characteristic_terms(medium, omega, omega / c_s, h)
    total = t1 + t2
    if abs(total.imag) >= abs(total.real):
        return total.imag
    return total.real


def mode_matrix(
    medium: MediumSpec, omega: float, k_a: float, thickness_convention: str = "half"
) -> np.ndarray:
    """Traction-free boundary system whose null space gives the mode shape."""
    h = _half_thickness(medium, thickness_convention)
    alpha, beta = _wavenumbers(medium, omega, k_a)
    q = k_a * k_a - beta * beta
    return np.array(
        [
            [2j * k_a * alpha * cmath.cos(alpha * h), q * cmath.cos(beta * h)],
            [q * cmath.sin(alpha * h), 2j * k_a * beta * cmath.sin(beta * h)],
        ],
        dtype=complex,
    )


def normalize_mode_vector(a: complex, b: complex) -> tuple[complex, complex]:
    """Scale a null vector so max(|a|, |b|) = 1 with a deterministic phase.

    The component of larger magnitude is rotated onto the positive real axis,
    which makes the normalisation invariant to any complex rescaling of the
    input vector.
    """
    if a == 0 and b == 0:
        raise ValueError("null vector must be nonzero")
    pivot = a if abs(a) >= abs(b) else b
    scale = abs(pivot) / pivot / max(abs(a), abs(b))
    return a * scale, b * scale


def _null_space_coefficients(
    medium: MediumSpec, omega: float, k_a: float, thickness_convention: str
) -> tuple[complex, complex]:
    m = mode_matrix(medium, omega, k_a, thickness_convention)
    scale = np.sqrt((np.abs(m[0]) ** 2).sum() * (np.abs(m[1]) ** 2).sum())
    if scale == 0.0:
        raise InconsistentModeError("degenerate boundary system")
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) / scale > DETERMINANT_LIMIT:
        raise InconsistentModeError(
            f"boundary determinant {abs(det) / scale:.3e} not near zero; "
            "point does not satisfy the dispersion relation"
        )
    _, _, vh = np.linalg.svd(m)
    vec = vh[-1].conj()
    return normalize_mode_vector(vec[0], vec[1])


def mode_coefficients(
    mode: LambMode, medium: MediumSpec, thickness_convention: str = "half"
) -> tuple[complex, complex]:
    """Null-space direction of the boundary system at the solved root."""
    return _null_space_coefficients(medium, mode.omega, mode.k_a, thickness_convention)


def _surface_response(alpha: complex, beta: complex, k_a: float,
                      coeff_a: complex, coeff_b: complex) -> complex:
    # Out-of-plane displacement coefficient at the surface (x = 0).
    return alpha * coeff_a - 1j * k_a * coeff_b


def solve_dispersion(
    medium: MediumSpec,
    f: float,
    *,
    scan_step: float = SCAN_STEP,
    scan_start: float = SCAN_START,
    thickness_convention: str = "half",
) -> LambMode:
    """Locate the fundamental antisymmetric root at frequency ``f``.

    Scans phase velocity upward from ``scan_start`` to the transverse bulk
    speed, brackets the first sign change, then bisects the bracket down to
    machine precision.  Raises NoRootError when the scan sees no sign change.
    """
    if f <= 0.0:
        raise ValueError("frequency must be > 0")
    omega = TWO_PI * f
    h = _half_thickness(medium, thickness_convention)

    lo = scan_start
    f_lo = _characteristic_value(medium, omega, lo, h)
    hi = None
    c = lo
    while c + scan_step < medium.c_t:
        c += scan_step
        f_c = _characteristic_value(medium, omega, c, h)
        if f_lo == 0.0:
            hi = lo
            break
        if f_lo * f_c <= 0.0:
            hi = c
            break
        lo, f_lo = c, f_c
    if hi is None:
        raise NoRootError(
            f"no dispersion root for {medium.name!r} at {f} Hz in phase-velocity "
            f"scan ({scan_start}, {medium.c_t}) m/s with step {scan_step} m/s"
        )

    a, b = lo, hi
    f_a = _characteristic_value(medium, omega, a, h)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        f_mid = _characteristic_value(medium, omega, mid, h)
        if f_mid == 0.0:
            a = b = mid
            break
        if f_a * f_mid < 0.0:
            b = mid
        else:
            a, f_a = mid, f_mid
    c_s = 0.5 * (a + b)
    k_a = omega / c_s

    residual = dispersion_residual(medium, omega, k_a, thickness_convention)
    if residual > RESIDUAL_LIMIT:
        raise NoRootError(
            f"bisection failed to converge for {medium.name!r} at {f} Hz "
            f"(residual {residual:.3e})"
        )

    coeff_a, coeff_b = _null_space_coefficients(medium, omega, k_a, thickness_convention)
    alpha, beta = _wavenumbers(medium, omega, k_a)
    resp = _surface_response(alpha, beta, k_a, coeff_a, coeff_b)
    return LambMode(
        omega=omega,
        k_a=k_a,
        c_s=c_s,
        coeff_a=coeff_a,
        coeff_b=coeff_b,
        lambda_amp=abs(resp),
        phi_offset=cmath.phase(resp) + 0.5 * math.pi,
    )


def propagation_delay(medium: MediumSpec, f: float, z: float, **solve_kwargs) -> float:
    """Travel time of the guided wave over ``z`` metres."""
    if z < 0.0:
        raise ValueError("distance must be >= 0")
    if z == 0.0:
        return 0.0
    mode = solve_dispersion(medium, f, **solve_kwargs)
    return z / mode.c_s


def displacement_wave(
    mode: LambMode,
    medium: MediumSpec,
    drive: Sinusoid,
    z: float,
    *,
    coupling: float = 1.0,
) -> tuple[Sinusoid, float]:
    """Surface displacement sinusoid at distance ``z`` plus its arrival time.

    The drive amplitude is scaled by the transducer coupling (metres of modal
    amplitude per volt) and by the per-metre attenuation of the medium.
    """
    if z < 0.0:
        raise ValueError("distance must be >= 0")
    t_t = z / mode.c_s
    v_eff = drive.amplitude * coupling * medium.attenuation_ratio ** z
    lam = v_eff * mode.lambda_amp
    phi = -mode.omega * t_t + drive.phase - mode.k_a * z + mode.phi_offset
    return Sinusoid(lam, drive.frequency, wrap_phase(phi)), t_t


def surface_displacement(
    mode: LambMode,
    medium: MediumSpec,
    drive: Sinusoid,
    z: float,
    t: float,
    *,
    prestress: float = 0.0,
    coupling: float = 1.0,
    quiescent_ok: bool = False,
) -> float:
    """Out-of-plane surface displacement (metres) at distance ``z``, time ``t``.

    Before the wavefront arrives the plate sits at its prestress offset;
    querying that region raises unless ``quiescent_ok`` is set.
    """
    wave, t_t = displacement_wave(mode, medium, drive, z, coupling=coupling)
    if t <= t_t:
        if quiescent_ok:
            return prestress
        raise NotArrivedError(f"wave reaches z={z} m only at t={t_t:.6g} s (asked {t} s)")
    return prestress + wave.value_at(t)


def load_media(
    thickness: float,
    attenuation_ratio: float = 0.9,
    path=None,
) -> dict[str, MediumSpec]:
    """Load the bundled medium table as MediumSpec records at ``thickness``.

    The table stores wave speeds in m/s and densities in g/cm^3; densities
    are converted to kg/m^3 while loading.
    """
    if path is None:
        source = resources.files("driftlab").joinpath("data/media.csv")
        text = source.read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    media = {}
    reader = csv.DictReader(text.splitlines())
    for row in reader:
        name = row["name"].strip()
        media[name] = MediumSpec(
            name=name,
            c_l=float(row["c_l_m_per_s"]),
            c_t=float(row["c_t_m_per_s"]),
            density=1000.0 * float(row["density_g_per_cm3"]),
            thickness=thickness,
            attenuation_ratio=attenuation_ratio,
        )
    return media
