"""Falsification probes for claimed observability triples (C, T, alpha).

A claimed inequality ||e^{-TH} phi|| <= C (int_0^T ||e^{-tH} phi||_E^2 dt)^{1/2}
+ alpha ||phi|| is universal in phi, so a single well-chosen state refutes
it.  For fractional generators the probe family is the self-similar heat
kernel: with g = F^{-1} e^{-|xi|^s},

    u(t, x; l) = e^{ct} (t + l)^{-n/s} g((x - x0) / (t + l)^{1/s}),

solving (d_t + (-Lap)^{s/2} - c) u = 0 with initial datum concentrated near
x0 at scale l^{1/s}.  Its norm obeys the exact law
||u(t)|| = C2 (t + l)^{-n/(2s)} e^{ct}, and the parameter l0 below balances
the decayed norm at time T against alpha times the initial norm, leaving a
definite gap that only mass of E near x0 can close.  If E is empty near x0
the observation integral stays small and the claim is violated there;
otherwise the probe yields a computable lower bound on |E inside B(x0, L0)|.

For the harmonic oscillator the probe is the ground state
Phi0(x) = pi^{-n/4} e^{-|x|^2 / 2} (the unit-norm convention; the variant
with the positive quarter-power of pi that is sometimes quoted is not
normalized), whose modal flow e^{(c-n)t} Phi0 is exact, so every quantity
in the test has a closed form.

All violation verdicts are rendered against the discretized semigroup
itself, with the same Simpson treatment of the observation integral used by
the certificate checks; the kernel-rescaling shortcut only feeds the
auxiliary local-mass bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .certify import _observation_integrals, _simpson_nodes
from .domain import GridDomain, GridFunction, from_callable, norm as _norm, restrict_norm
from .geometry import SetIndicator
from .operators import FractionalLaplacian, ShiftedHermite, SpectralDecomposition, to_coefficients
from .specineq import restricted_gram

__all__ = [
    "ObservationClaim",
    "KernelProbe",
    "TailProfile",
    "CenterReport",
    "FalsificationReport",
    "HermiteFalsificationReport",
    "build_kernel",
    "make_probe",
    "kernel_probe_solution",
    "choose_l0",
    "observation_tail",
    "falsify_weak_observability",
    "falsify_hermite_ground_state",
    "falsification_to_csv",
]

_KERNEL_CACHE: dict = {}


@dataclass(frozen=True)
class ObservationClaim:
    C: float
    T: float
    alpha: float

    def __post_init__(self):
        if self.C <= 0 or self.T <= 0:
            raise ValueError("claim requires C > 0 and T > 0")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")


@dataclass(frozen=True)
class KernelProbe:
    s: float
    c: float
    x0: tuple
    l: float
    kernel: GridFunction
    c1_bound: float
    c2_norm: float


def build_kernel(s: float, domain: GridDomain) -> GridFunction:
    """Inverse FFT of e^{-|xi|^s} on the midpoint grid, cached per (s, domain).

    The midpoint offset enters as a per-axis phase e^{i pi k (1/m - 1)} on
    the integer frequencies.  The unpaired Nyquist mode leaves an imaginary
    residue of size e^{-|xi_max|^s} / h^n; exceeding 1e-12 means the symbol
    has not decayed across the resolved band (small s on a coarse grid) and
    is raised rather than discarded.
    """
    if not domain.periodic:
        raise ValueError("kernel construction requires a periodic domain")
    if s <= 0:
        raise ValueError("s must be positive")
    key = (float(s), domain)
    cached = _KERNEL_CACHE.get(key)
    if cached is not None:
        return cached
    m = domain.points_per_axis
    k_int = np.fft.fftfreq(m, d=1.0 / m)
    xi = domain.frequency_axis()
    phase = np.exp(1j * np.pi * k_int * (1.0 / m - 1.0))
    if domain.dim == 1:
        sym = np.exp(-np.abs(xi) ** s)
        g = np.fft.ifft(sym * phase) / domain.cell_volume
    else:
        xx, yy = np.meshgrid(xi, xi, indexing="ij")
        sym = np.exp(-(np.sqrt(xx**2 + yy**2)) ** s)
        g = np.fft.ifft2(sym * np.outer(phase, phase)) / domain.cell_volume
    resid = float(np.abs(g.imag).max())
    if resid > 1e-12:
        raise ValueError(
            f"imaginary residue {resid:.3e} in the kernel transform; the symbol has not "
            "decayed across the resolved band, refine the grid or enlarge the domain"
        )
    out = GridFunction(domain, g.real)
    _KERNEL_CACHE[key] = out
    return out


def make_probe(s: float, c: float, domain: GridDomain, x0, l: float) -> KernelProbe:
    """Cache the kernel and measure its two empirical constants.

    c2_norm is the norm prefactor in ||u(t)|| = C2 (t+l)^{-n/(2s)} e^{ct},
    measured once at t = 0; c1_bound is the fitted pointwise envelope
    max |g(x)| (1+|x|^2)^{(n+s)/2} over the grid.
    """
    if l <= 0:
        raise ValueError("l must be positive")
    if c < 0:
        raise ValueError("c must be nonnegative")
    x0 = tuple(float(v) for v in np.atleast_1d(x0))
    if len(x0) != domain.dim:
        raise ValueError(f"center has {len(x0)} components, domain is {domain.dim}-dimensional")
    if any(abs(v) > domain.half_width for v in x0):
        raise ValueError(f"center {x0} outside the box [-R, R]^n")
    kernel = build_kernel(s, domain)
    n = domain.dim
    r2 = domain.radius_grid() ** 2
    c1_bound = float((np.abs(kernel.values) * (1.0 + r2) ** ((n + s) / 2.0)).max())
    probe = KernelProbe(s=float(s), c=float(c), x0=x0, l=float(l), kernel=kernel,
                        c1_bound=c1_bound, c2_norm=0.0)
    phi = kernel_probe_solution(probe, 0.0)
    c2 = float(_norm(phi) * l ** (n / (2.0 * s)))
    return KernelProbe(s=float(s), c=float(c), x0=x0, l=float(l), kernel=kernel,
                       c1_bound=c1_bound, c2_norm=c2)


def kernel_probe_solution(probe: KernelProbe, t: float) -> GridFunction:
    """Evaluate u(t, x; l) by rescaling the cached kernel.

    Linear interpolation on the periodic minimal image of x - x0; arguments
    that land outside the box (only possible while t + l < 1) take the value
    zero, which is accurate to the kernel's tail size.  Once the spatial
    scale (t+l)^{1/s} passes R/2 the probe no longer fits the box and the
    self-similar formula stops describing the periodized evolution, so that
    is an error asking for a larger domain.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    domain = probe.kernel.domain
    n, big_r = domain.dim, domain.half_width
    sigma = (t + probe.l) ** (1.0 / probe.s)
    if sigma > big_r / 2.0:
        raise ValueError(
            f"probe scale (t+l)^(1/s) = {sigma:.4g} exceeds R/2 = {big_r / 2:.4g}; "
            "enlarge the domain half-width"
        )
    axes = domain.axis_coords()
    shifted = [
        np.mod(axes - probe.x0[axis] + big_r, 2.0 * big_r) - big_r
        for axis in range(n)
    ]
    amp = np.exp(probe.c * t) * (t + probe.l) ** (-n / probe.s)
    if n == 1:
        vals = amp * np.interp(shifted[0] / sigma, axes, probe.kernel.values, left=0.0, right=0.0)
    else:
        interp = RegularGridInterpolator(
            (axes, axes), probe.kernel.values, bounds_error=False, fill_value=0.0
        )
        pts = np.stack([(g / sigma).ravel() for g in np.meshgrid(*shifted, indexing="ij")], axis=1)
        vals = amp * interp(pts).reshape(domain.shape)
    return GridFunction(domain, vals)


def choose_l0(T: float, alpha: float, s: float, n: int) -> float:
    """The balancing parameter l0 = T / ((2/(1+alpha))^{2s/n} - 1).

    It is defined by (T + l0)^{-n/(2s)} = ((1 + alpha)/2) l0^{-n/(2s)}, so
    the norm at time T exceeds alpha times the initial norm by the definite
    amount ((1-alpha)/2) l0^{-n/(2s)} (times the c-growth factor).  The
    identity is asserted to 1e-12 at every call.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if T <= 0 or s <= 0 or n < 1:
        raise ValueError("need T > 0, s > 0, n >= 1")
    l0 = T / ((2.0 / (1.0 + alpha)) ** (2.0 * s / n) - 1.0)
    p = -n / (2.0 * s)
    lhs = (T + l0) ** p - alpha * l0**p
    rhs = 0.5 * (1.0 - alpha) * l0**p
    if abs(lhs - rhs) > 1e-12 * max(abs(lhs), abs(rhs), 1e-300):
        raise ArithmeticError(f"l0 defining identity violated: {lhs} vs {rhs}")
    return float(l0)


@dataclass(frozen=True)
class TailProfile:
    radii: tuple
    tail_masses: tuple
    total_mass: float
    peak_density: float


def observation_tail(probe: KernelProbe, T: float, subintervals: int = 128) -> TailProfile:
    """Time-integrated probe mass beyond each grid radius from the center.

    tail(L) = int_0^T int_{|x - x0| > L} |u|^2 dx dt by Simpson in time and
    the grid sum in space; decreasing in L and vanishing at the box scale.
    peak_density is max_x int_0^T |u(t, x)|^2 dt, the constant that converts
    mass bounds into measure bounds.
    """
    domain = probe.kernel.domain
    t_nodes, w = _simpson_nodes(0.0, T, subintervals)
    q = np.zeros(domain.shape)
    for t_i, w_i in zip(t_nodes, w):
        q += w_i * kernel_probe_solution(probe, t_i).values ** 2
    r = domain.radius_grid(center=probe.x0).ravel()
    order = np.argsort(r)
    masses = q.ravel()[order] * domain.cell_volume
    radii = r[order]
    tail = masses.sum() - np.cumsum(masses)
    uniq, last_idx = np.unique(radii[::-1], return_index=True)
    keep = len(radii) - 1 - last_idx
    return TailProfile(
        radii=tuple(float(v) for v in uniq),
        tail_masses=tuple(float(tail[i]) for i in keep),
        total_mass=float(masses.sum()),
        peak_density=float(q.max()),
    )


@dataclass(frozen=True)
class CenterReport:
    center: tuple
    l0: float
    probe_norm: float
    lhs: float
    gap: float
    observation: float
    margin: float
    violated: bool
    half_mass_radius: Optional[float]
    local_mass_bound: Optional[float]


@dataclass(frozen=True)
class FalsificationReport:
    claim: ObservationClaim
    centers: tuple
    any_violation: bool


def falsify_weak_observability(
    dec: SpectralDecomposition,
    e: SetIndicator,
    claim: ObservationClaim,
    centers: Sequence,
) -> FalsificationReport:
    """Test the claimed (C, T, alpha) against kernel probes at each center.

    The verdict per center compares, on the discretized semigroup, the
    decayed norm ||e^{-TH} phi|| against C (observation integral)^{1/2}
    + alpha ||phi|| for the probe phi = u(0, .; l0).  A negative margin is
    a witnessed violation.  Centers that do not violate get the implied
    local-mass bound: whatever part of the observation integral the far
    tail cannot supply must come from E inside the probe's half-mass ball,
    giving |E intersect B(x0, L0)| >= (gap/C)^2 - tail(L0), divided by the
    peak time-integrated density.
    """
    if not isinstance(dec.spec, FractionalLaplacian):
        raise TypeError("kernel probes apply to the fractional kind only")
    s, c = dec.spec.s, dec.spec.c
    domain = dec.domain
    n = domain.dim
    l0 = choose_l0(claim.T, claim.alpha, s, n)
    if (claim.T + l0) ** (1.0 / s) > domain.half_width / 2.0:
        raise ValueError(
            f"probe scale (T+l0)^(1/s) = {(claim.T + l0) ** (1.0 / s):.4g} exceeds R/2; "
            "enlarge the domain half-width"
        )
    probes = [make_probe(s, c, domain, x0, l0) for x0 in centers]
    phis = [kernel_probe_solution(p, 0.0) for p in probes]
    coeffs = np.stack([to_coefficients(dec, phi) for phi in phis], axis=1)
    phi_norms = np.array([_norm(phi) for phi in phis])
    lams = dec.eigenvalues
    with np.errstate(under="ignore"):
        lhs = np.sqrt((np.abs(coeffs) ** 2 * np.exp(-2.0 * claim.T * lams)[:, None]).sum(axis=0))
    gram = restricted_gram(dec, np.arange(domain.cell_count), e)
    obs, _ = _observation_integrals(gram, lams, coeffs, 0.0, claim.T, 128)
    obs = np.maximum(obs, 0.0)
    margins = claim.C * np.sqrt(obs) + claim.alpha * phi_norms - lhs
    reports = []
    for i, probe in enumerate(probes):
        gap = float(lhs[i] - claim.alpha * phi_norms[i])
        violated = bool(margins[i] < 0.0)
        half_mass_radius = None
        local_mass_bound = None
        if not violated and gap > 0.0:
            profile = observation_tail(probe, claim.T)
            half = 0.5 * profile.total_mass
            for radius, tail in zip(profile.radii, profile.tail_masses):
                if tail <= half:
                    half_mass_radius = radius
                    needed = (gap / claim.C) ** 2 - tail
                    if needed > 0.0 and profile.peak_density > 0.0:
                        local_mass_bound = float(needed / profile.peak_density)
                    else:
                        local_mass_bound = 0.0
                    break
        reports.append(
            CenterReport(
                center=probe.x0,
                l0=l0,
                probe_norm=float(phi_norms[i]),
                lhs=float(lhs[i]),
                gap=gap,
                observation=float(obs[i]),
                margin=float(margins[i]),
                violated=violated,
                half_mass_radius=half_mass_radius,
                local_mass_bound=local_mass_bound,
            )
        )
    return FalsificationReport(
        claim=claim,
        centers=tuple(reports),
        any_violation=any(r.violated for r in reports),
    )


@dataclass(frozen=True)
class HermiteFalsificationReport:
    claim: ObservationClaim
    lhs: float
    observation: float
    margin: float
    violated: bool
    analytic_lhs: float
    analytic_rhs: float
    analytic_violated: bool


def falsify_hermite_ground_state(
    dec: SpectralDecomposition, e: SetIndicator, claim: ObservationClaim
) -> HermiteFalsificationReport:
    """Ground-state probe for the harmonic kind: everything in closed form.

    The flow of Phi0 is e^{(c-n)t} Phi0 exactly, so the claim reduces to

        e^{(c-n)T} - alpha <= C ( I_T ||Phi0||_E^2 )^{1/2},
        I_T = (e^{2(c-n)T} - 1) / (2(c-n))   (= T when c = n),

    and a set with tiny Gaussian mass makes the right side arbitrarily
    small.  The discrete verdict (margin, violated) uses the grid semigroup
    and Simpson integral; the analytic pair is reported alongside.
    """
    if not isinstance(dec.spec, ShiftedHermite):
        raise TypeError("the ground-state probe applies to the harmonic kind only")
    domain = dec.domain
    n, c = domain.dim, dec.spec.c
    phi0 = from_callable(
        domain,
        lambda *xs: np.pi ** (-n / 4.0) * np.exp(-0.5 * sum(x**2 for x in xs)),
    )
    phi0 = GridFunction(domain, phi0.values / _norm(phi0))
    coeffs = to_coefficients(dec, phi0)
    lams = dec.eigenvalues
    with np.errstate(under="ignore"):
        lhs = float(np.sqrt((np.abs(coeffs) ** 2 * np.exp(-2.0 * claim.T * lams)).sum()))
    gram = restricted_gram(dec, np.arange(domain.cell_count), e)
    obs, _ = _observation_integrals(gram, lams, coeffs[:, None], 0.0, claim.T, 128)
    obs_val = float(max(obs[0], 0.0))
    margin = float(claim.C * np.sqrt(obs_val) + claim.alpha - lhs)
    rate = c - n
    analytic_lhs = float(np.exp(rate * claim.T) - claim.alpha)
    if rate == 0.0:
        time_integral = claim.T
    else:
        time_integral = (np.exp(2.0 * rate * claim.T) - 1.0) / (2.0 * rate)
    analytic_rhs = float(claim.C * np.sqrt(time_integral) * restrict_norm(phi0, e))
    return HermiteFalsificationReport(
        claim=claim,
        lhs=lhs,
        observation=obs_val,
        margin=margin,
        violated=bool(margin < 0.0),
        analytic_lhs=analytic_lhs,
        analytic_rhs=analytic_rhs,
        analytic_violated=bool(analytic_rhs < analytic_lhs),
    )


def falsification_to_csv(report: FalsificationReport) -> str:
    lines = ["x0,lhs,observation,violated"]
    for r in report.centers:
        x0 = ":".join(repr(float(v)) for v in r.center)
        lines.append(f"{x0},{float(r.lhs)!r},{float(r.observation)!r},{int(r.violated)}")
    return "\n".join(lines) + "\n"
