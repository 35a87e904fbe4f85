"""Coupling of the slow modulations to the tracked eigenspace, its average
along group-velocity rays, and the accumulated fluctuation integral.

The coupling field is the kappa x kappa map

    gamma(t, x) = (Pi A0 Pi)^{-1} Pi (i omega A0^1(t,x) + M(t,x)) Pi,

a finite trigonometric polynomial sum_eta a_eta exp(i eta.(t,x)) because the
modulations are.  Splitting its modes by the ray divisor eta.(1, V) gives

  * resonant modes (divisor = 0): the ray average, a function of x - V t,
  * non-resonant modes: integrated exactly along rays into g(t, x) with
    g(0, x) = 0, solving (d_t + V.d_x) g = gamma - mean(x - V t).

For finite sums g is bounded, so the growth exponent beta is 0; empirical_beta
estimates the exponent numerically as a cross-check and as the hook for
richer almost-periodic coefficient classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .bands import BlochBand, ProjectorPair
from .dispersion import projected_mass
from .errors import BetaFitError, SmallDivisorWarning
from .fourier import LatticeCutoff, MaterialSpec, modulation_apply

Eta = Tuple[float, float, float, float]

EXACT_RESONANCE_TOL = 1e-13
DEFAULT_DIVISOR_TOL = 1e-9


@dataclass
class CouplingField:
    """Finitely supported map eta -> kappa x kappa matrix: the coupling as a
    trigonometric polynomial in (t, x)."""

    modes: Dict[Eta, np.ndarray]
    kappa: int

    def at(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros((self.kappa, self.kappa), dtype=complex)
        for eta, a in self.modes.items():
            out += a * np.exp(1j * (eta[0] * t + np.dot(eta[1:], x)))
        return out


@dataclass
class RayAverageData:
    """Resonant/non-resonant split of a coupling field along rays.

    mean_modes: spatial frequency -> kappa x kappa; the ray average as a
        function of the comoving coordinate x - V t.
    fluctuation_modes: eta -> raw coupling coefficient of each non-resonant
        mode (divisors are re-derived at evaluation time, so reconstructing
        the original field from the two parts is exact).
    beta: growth exponent of the fluctuation integral; 0 for finite sums.
    """

    V: np.ndarray
    kappa: int
    mean_modes: Dict[Tuple[float, float, float], np.ndarray]
    fluctuation_modes: Dict[Eta, np.ndarray]
    beta: float = 0.0

    def mean_at(self, x_comoving) -> np.ndarray:
        x = np.asarray(x_comoving, dtype=float)
        out = np.zeros((self.kappa, self.kappa), dtype=complex)
        for k, a in self.mean_modes.items():
            out += a * np.exp(1j * np.dot(k, x))
        return out

    def fluctuation_at(self, t: float, x) -> np.ndarray:
        """g(t, x): exact integral of the non-resonant part along the ray
        through (t, x), vanishing at t = 0."""
        x = np.asarray(x, dtype=float)
        out = np.zeros((self.kappa, self.kappa), dtype=complex)
        for eta, a in self.fluctuation_modes.items():
            div = 1j * _ray_divisor(eta, self.V)
            full = np.exp(1j * (eta[0] * t + np.dot(eta[1:], x)))
            comoving = np.exp(1j * np.dot(eta[1:], x - self.V * t))
            out += (a / div) * (full - comoving)
        return out

    def fluctuation_terms(self) -> List[Tuple[Eta, np.ndarray]]:
        """(eta, a_eta / (i eta.(1,V))) pairs: the closed-form g as the
        difference of a full-phase and a comoving-phase trigonometric sum."""
        return [
            (eta, a / (1j * _ray_divisor(eta, self.V)))
            for eta, a in self.fluctuation_modes.items()
        ]

    def reconstruct(self) -> CouplingField:
        """Merge the two parts back into the original coupling field."""
        modes: Dict[Eta, np.ndarray] = {}
        for k, a in self.mean_modes.items():
            eta = (-float(np.dot(k, self.V)), *k)
            modes[eta] = modes.get(eta, 0.0) + a
        for eta, a in self.fluctuation_modes.items():
            modes[eta] = modes.get(eta, 0.0) + a
        return CouplingField(modes=modes, kappa=self.kappa)


def _ray_divisor(eta, V) -> float:
    return float(eta[0] + np.dot(eta[1:], V))


# ---------------------------------------------------------------------------
# Coupling assembly
# ---------------------------------------------------------------------------

def build_gamma(band: BlochBand, projectors: ProjectorPair, spec: MaterialSpec,
                cutoff: LatticeCutoff) -> CouplingField:
    """Assemble the coupling field mode by mode.

    For each (t, x)-frequency eta of the modulations, the y-multiplication
    operator i*omega*A0^1(eta,.) + M(eta,.) is sandwiched between the band
    eigenvectors (all integrals done in coefficient space) and premultiplied
    by the inverse of the projected mass matrix.
    """
    psi = band.eigvecs
    n = projected_mass(band, spec, cutoff)
    modes: Dict[Eta, np.ndarray] = {}
    for eta in spec.modulation_frequencies():
        sandwich = np.empty((band.kappa, band.kappa), dtype=complex)
        for a in range(band.kappa):
            col = modulation_apply(spec, eta, cutoff, psi[:, a].reshape(-1, 6), band.omega)
            sandwich[:, a] = psi.conj().T @ col.reshape(-1)
        modes[eta] = np.linalg.solve(n, sandwich)
    return CouplingField(modes=modes, kappa=band.kappa)


# ---------------------------------------------------------------------------
# Ray averaging
# ---------------------------------------------------------------------------

def ray_average(gamma: CouplingField, V, divisor_tol: float = DEFAULT_DIVISOR_TOL) -> RayAverageData:
    """Partition the coupling modes by the ray divisor eta.(1, V).

    Exactly resonant modes form the ray average (re-expressed in x - V t);
    modes with divisor >= divisor_tol integrate into the fluctuation part.
    Modes caught in between are nearly resonant: averaging them would hide a
    slowly accumulating drift, so they are a hard error (SmallDivisorWarning)
    and the caller must refine the setup.
    """
    V = np.asarray(V, dtype=float)
    mean: Dict[Tuple[float, float, float], np.ndarray] = {}
    fluct: Dict[Eta, np.ndarray] = {}
    offenders = []
    for eta, a in gamma.modes.items():
        div = _ray_divisor(eta, V)
        scale = max(1.0, float(np.linalg.norm(eta)) * (1.0 + float(np.linalg.norm(V))))
        if abs(div) <= EXACT_RESONANCE_TOL * scale:
            k = tuple(eta[1:])
            mean[k] = mean.get(k, 0.0) + a
        elif abs(div) < divisor_tol:
            offenders.append((eta, abs(div)))
        else:
            fluct[eta] = a
    if offenders:
        raise SmallDivisorWarning(offenders)
    return RayAverageData(V=V, kappa=gamma.kappa, mean_modes=mean,
                          fluctuation_modes=fluct, beta=0.0)


# ---------------------------------------------------------------------------
# Empirical growth exponent
# ---------------------------------------------------------------------------

def empirical_beta(gamma: CouplingField, V, T_list, x_samples=None,
                   steps_per_unit: int = 64) -> float:
    """Numerical estimate of the fluctuation growth exponent.

    Integrates gamma - mean along rays (trapezoid prefix sums at a resolution
    set by the fastest ray oscillation) and records, per horizon T, the
    running sup of ||g|| over [T/2, T] -- the point value g(T) oscillates for
    bounded fluctuations and would alias phase into the fit.  The slope of
    log sup-norm against log T is returned, clipped at zero.  If the
    fluctuation is negligible (< 1e-12) at every horizon the exponent is 0 by
    convention; a non-finite fit raises BetaFitError.
    """
    V = np.asarray(V, dtype=float)
    data = ray_average(gamma, V)
    if x_samples is None:
        x_samples = [np.zeros(3), np.array([0.7, -0.3, 0.2]), np.array([-1.1, 0.4, 0.9])]
    T_list = sorted(float(t) for t in T_list)
    if len(T_list) < 2:
        raise ValueError("need at least two horizons to fit a growth exponent")

    # fastest oscillation along the ray sets the quadrature resolution
    divisors = [abs(_ray_divisor(eta, V)) for eta in gamma.modes] + [1.0]
    dt = 2 * np.pi / (steps_per_unit * max(divisors))
    T_max = T_list[-1]
    nsteps = int(np.ceil(T_max / dt))
    ts = np.linspace(0.0, T_max, nsteps + 1)

    norms = []
    for x0 in x_samples:
        mean_x0 = data.mean_at(x0)
        vals = np.stack([gamma.at(t, x0 + V * t) - mean_x0 for t in ts])
        inc = 0.5 * (vals[1:] + vals[:-1]) * (ts[1] - ts[0])
        prefix = np.concatenate([np.zeros((1, gamma.kappa, gamma.kappa)),
                                 np.cumsum(inc, axis=0)])
        gnorm = np.linalg.norm(prefix, axis=(1, 2))
        norms.append(gnorm)
    gnorm = np.max(norms, axis=0)

    sups = []
    for T in T_list:
        sel = (ts >= T / 2) & (ts <= T)
        sups.append(float(gnorm[sel].max()))
    sups = np.asarray(sups)
    if np.all(sups < 1e-12):
        return 0.0
    slope = np.polyfit(np.log(T_list), np.log(np.maximum(sups, 1e-300)), 1)[0]
    if not np.isfinite(slope):
        raise BetaFitError("growth-exponent fit did not converge")
    return float(max(slope, 0.0))
