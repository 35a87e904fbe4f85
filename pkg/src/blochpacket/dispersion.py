"""Group velocity and dispersion Hessian from eigenvalue perturbation theory,
with independent finite-difference oracles and the propagation speed-limit
certificate.

For a multiplicity-kappa cluster the first- and second-order kappa x kappa
forms must be scalar multiples of the projected mass matrix Pi A0 Pi; the
deviation from scalarity is computed and shipped as a runtime certificate
(scalar_check) rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bands import BlochBand, ProjectorPair, solve_bands
from .errors import MultiplicityInconsistent, SpeedLimitViolation
from .fourier import (
    LatticeCutoff,
    MaterialSpec,
    apply_constant_symbol,
    base_material_matrix,
    cross_matrix,
)

SCALAR_TOL = 1e-8


@dataclass
class DispersionData:
    theta: np.ndarray
    omega: float
    V: np.ndarray                # group velocity, -grad_theta omega
    hessian: np.ndarray          # 3x3 real symmetric, d^2 omega / d theta^2
    scalar_check: np.ndarray     # worst kappa x kappa deviation matrix
    scalar_residual: float       # max relative deviation from scalarity


# ---------------------------------------------------------------------------
# kappa x kappa building blocks
# ---------------------------------------------------------------------------

def projected_mass(band: BlochBand, spec: MaterialSpec, cutoff: LatticeCutoff,
                   a0: Optional[np.ndarray] = None) -> np.ndarray:
    """kappa x kappa matrix of Pi A0 Pi in the band's eigenbasis.  Positive
    definite (the projected material is an isomorphism of the eigenspace)."""
    if a0 is None:
        a0 = base_material_matrix(spec, cutoff)
    psi = band.eigvecs
    n = psi.conj().T @ a0 @ psi
    return 0.5 * (n + n.conj().T)


def _scalar_part(f: np.ndarray, n: np.ndarray):
    """Decompose f ~ s*n: returns (s, deviation matrix).  Callers normalize the
    deviation by the scale of the whole family of forms, so that identically
    vanishing entries (zero Hessian directions) do not read as non-scalar."""
    kappa = f.shape[0]
    s = np.trace(np.linalg.solve(n, f)) / kappa
    return s, f - s * n


def _apply_symbol_block(xi, block: np.ndarray) -> np.ndarray:
    """Apply the mode-diagonal 6x6 symbol [[0,-xi^],[xi^,0]] to a (6K, m) block."""
    k6, m = block.shape
    arr = block.T.reshape(m, k6 // 6, 6)
    out = np.empty_like(arr)
    for a in range(m):
        out[a] = apply_constant_symbol(xi, arr[a])
    return out.reshape(m, k6).T


def _pencil_derivative_apply(xi, domega_xi: float, a0: np.ndarray,
                             block: np.ndarray) -> np.ndarray:
    """theta-derivative of the Bloch pencil in direction xi applied to a block:
    i * [ (xi.grad omega) A0 + [[0,-xi^],[xi^,0]] ]."""
    return 1j * (domega_xi * (a0 @ block) + _apply_symbol_block(xi, block))


# ---------------------------------------------------------------------------
# Group velocity (first-order perturbation)
# ---------------------------------------------------------------------------

def group_velocity(band: BlochBand, projectors: ProjectorPair, spec: MaterialSpec,
                   cutoff: LatticeCutoff, scalar_tol: float = SCALAR_TOL) -> np.ndarray:
    """V = -grad_theta omega from first-order perturbation theory.

    Per direction e_j the kappa x kappa form Psi^H [[0,-e_j^],[e_j^,0]] Psi
    equals -(d_j omega) * Pi A0 Pi; the scalar multiple is extracted and the
    deviation from scalarity must stay below scalar_tol.
    """
    a0 = base_material_matrix(spec, cutoff)
    n = projected_mass(band, spec, cutoff, a0)
    psi = band.eigvecs
    v = np.zeros(3)
    forms = []
    for j in range(3):
        ej = np.zeros(3)
        ej[j] = 1.0
        f = psi.conj().T @ _apply_symbol_block(ej, psi)
        s, dev = _scalar_part(f, n)
        forms.append((j, f, s, dev))
        # f ~ -(d_j omega) N, so d_j omega = -s and V_j = -d_j omega = s
        v[j] = np.real(s)
    scale = max(max(np.linalg.norm(f) for _j, f, _s, _d in forms), np.linalg.norm(n))
    for j, _f, _s, dev in forms:
        rel = np.linalg.norm(dev) / scale
        if rel > scalar_tol:
            raise MultiplicityInconsistent(
                f"first-order form along axis {j} is not scalar on the cluster "
                f"(relative deviation {rel:.3e})"
            )
    return v


def first_order_identity_residual(band: BlochBand, spec: MaterialSpec,
                                  cutoff: LatticeCutoff, xi, V) -> float:
    """Norm of the projected pencil derivative Pi L'(xi) Pi given a group
    velocity V (from either the perturbation or the finite-difference route).
    Vanishes under constant multiplicity."""
    a0 = base_material_matrix(spec, cutoff)
    psi = band.eigvecs
    xi = np.asarray(xi, dtype=float)
    domega = -float(np.dot(xi, V))
    lp = _pencil_derivative_apply(xi, domega, a0, psi)
    return float(np.linalg.norm(psi.conj().T @ lp))


# ---------------------------------------------------------------------------
# Hessian (second-order perturbation)
# ---------------------------------------------------------------------------

def hessian(band: BlochBand, projectors: ProjectorPair, spec: MaterialSpec,
            cutoff: LatticeCutoff, scalar_tol: float = SCALAR_TOL) -> DispersionData:
    """Dispersion Hessian d^2 omega/d theta^2 via second-order perturbation:
    the symmetrized form Psi^H L'(e_i) Q L'(e_j) Psi equals (i/2) H_ij Pi A0 Pi,
    so H_ij = -2i * scalar part."""
    a0 = base_material_matrix(spec, cutoff)
    n = projected_mass(band, spec, cutoff, a0)
    v = group_velocity(band, projectors, spec, cutoff, scalar_tol)
    psi = band.eigvecs
    q = projectors.Q

    axes = np.eye(3)
    lp_psi = [_pencil_derivative_apply(axes[j], -v[j], a0, psi) for j in range(3)]
    q_lp_psi = [q @ b for b in lp_psi]

    h = np.zeros((3, 3))
    devs = []
    for i in range(3):
        for j in range(i, 3):
            m_ij = psi.conj().T @ _pencil_derivative_apply(axes[i], -v[i], a0, q_lp_psi[j])
            m_ji = psi.conj().T @ _pencil_derivative_apply(axes[j], -v[j], a0, q_lp_psi[i])
            sym = 0.5 * (m_ij + m_ji)
            s, dev = _scalar_part(sym, n)
            devs.append((np.linalg.norm(sym), dev))
            h[i, j] = h[j, i] = np.real(-2j * s)
    scale = max(max(ns for ns, _d in devs), np.linalg.norm(n))
    worst_rel, worst_dev = 0.0, np.zeros_like(n)
    for ns, dev in devs:
        rel = float(np.linalg.norm(dev) / scale)
        if rel > worst_rel:
            worst_rel, worst_dev = rel, dev
    if worst_rel > scalar_tol:
        raise MultiplicityInconsistent(
            f"second-order form is not scalar on the cluster (relative deviation {worst_rel:.3e})"
        )
    return DispersionData(
        theta=band.theta,
        omega=band.omega,
        V=v,
        hessian=0.5 * (h + h.T),
        scalar_check=worst_dev,
        scalar_residual=worst_rel,
    )


# ---------------------------------------------------------------------------
# Finite-difference oracles
# ---------------------------------------------------------------------------

def _omega_near(spec, cutoff, theta, band: BlochBand) -> float:
    """Eigenvalue of the band's continuation at a shifted theta.

    Matched by eigenvector overlap, not eigenvalue proximity: layered media
    have symmetry-allowed exact crossings where the nearest eigenvalue hops
    branches and would poison the finite-difference stencils.  theta is used
    unwrapped so the coefficient representation stays aligned across the cell
    boundary.
    """
    bands = solve_bands(spec, cutoff, theta, 4 * cutoff.num_modes)
    window = [b for b in bands if abs(b.omega - band.omega) < 0.2 * max(1.0, abs(band.omega))]
    if not window:
        window = bands

    def overlap(cand):
        s = np.linalg.svd(cand.eigvecs.conj().T @ band.eigvecs, compute_uv=False)
        return s.min() if len(s) >= band.kappa else 0.0

    best = max(window, key=overlap)
    if best.kappa != band.kappa:
        raise MultiplicityInconsistent(
            f"multiplicity changed to {best.kappa} at theta={tuple(theta)} in the "
            "finite-difference stencil"
        )
    return best.omega


def fd_group_velocity(spec: MaterialSpec, cutoff: LatticeCutoff, band: BlochBand,
                      step: float = 1e-3, richardson: bool = True) -> np.ndarray:
    """Central finite differences of the tracked eigenvalue (one Richardson
    level by default): V = -grad omega."""

    def stencil(hstep):
        grad = np.zeros(3)
        for j in range(3):
            e = np.zeros(3)
            e[j] = hstep
            wp = _omega_near(spec, cutoff, band.theta + e, band)
            wm = _omega_near(spec, cutoff, band.theta - e, band)
            grad[j] = (wp - wm) / (2 * hstep)
        return grad

    g1 = stencil(step)
    if not richardson:
        return -g1
    g2 = stencil(step / 2)
    return -(4 * g2 - g1) / 3


def fd_hessian(spec: MaterialSpec, cutoff: LatticeCutoff, band: BlochBand,
               step: float = 1e-2, richardson: bool = True) -> np.ndarray:
    """Second-order central differences of omega(theta), one Richardson level."""

    def stencil(h):
        hess = np.zeros((3, 3))
        w0 = band.omega
        for i in range(3):
            ei = np.zeros(3)
            ei[i] = h
            wp = _omega_near(spec, cutoff, band.theta + ei, band)
            wm = _omega_near(spec, cutoff, band.theta - ei, band)
            hess[i, i] = (wp - 2 * w0 + wm) / h**2
        for i in range(3):
            for j in range(i + 1, 3):
                ei = np.zeros(3)
                ej = np.zeros(3)
                ei[i] = h
                ej[j] = h
                wpp = _omega_near(spec, cutoff, band.theta + ei + ej, band)
                wpm = _omega_near(spec, cutoff, band.theta + ei - ej, band)
                wmp = _omega_near(spec, cutoff, band.theta - ei + ej, band)
                wmm = _omega_near(spec, cutoff, band.theta - ei - ej, band)
                hess[i, j] = hess[j, i] = (wpp - wpm - wmp + wmm) / (4 * h**2)
        return hess

    h1 = stencil(step)
    if not richardson:
        return h1
    h2 = stencil(step / 2)
    return (4 * h2 - h1) / 3


# ---------------------------------------------------------------------------
# Speed limit
# ---------------------------------------------------------------------------

def _material_samples(coefs, y_samples: int, axes_used) -> np.ndarray:
    """Sample a coefficient reconstruction on a grid collapsed along axes the
    coefficients do not depend on (exact by translation invariance)."""
    sizes = [y_samples if used else 1 for used in axes_used]
    ys = [np.linspace(0.0, 2 * np.pi, s, endpoint=False) for s in sizes]
    g1, g2, g3 = np.meshgrid(*ys, indexing="ij")
    out = np.zeros(g1.shape + (3, 3), dtype=complex)
    for n, mat in coefs.items():
        phase = np.exp(1j * (n[0] * g1 + n[1] * g2 + n[2] * g3))
        out += phase[..., None, None] * mat
    return out.reshape(-1, 3, 3)


def _pencil_tables(spec: MaterialSpec, y_samples: int):
    axes_used = [
        any(n[a] != 0 for coefs in (spec.eps0, spec.mu0) for n in coefs)
        for a in range(3)
    ]
    eps = _material_samples(spec.eps0, y_samples, axes_used)
    mu = _material_samples(spec.mu0, y_samples, axes_used)
    eps = 0.5 * (eps + np.conj(np.swapaxes(eps, -1, -2)))
    mu = 0.5 * (mu + np.conj(np.swapaxes(mu, -1, -2)))
    w, u = np.linalg.eigh(eps)
    eps_inv_sqrt = np.einsum("nij,nj,nkj->nik", u, 1.0 / np.sqrt(w), u.conj())
    return eps_inv_sqrt, np.linalg.inv(mu)


def _tau_max_from_tables(xi, eps_inv_sqrt, inv_mu) -> float:
    cx = cross_matrix(xi)
    k = np.einsum("ij,njk,kl->nil", cx.conj().T, inv_mu, cx)
    m = np.einsum("nij,njk,nkl->nil", eps_inv_sqrt, k, eps_inv_sqrt)
    m = 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
    tau2 = np.linalg.eigvalsh(m)[:, -1]
    return float(np.sqrt(max(tau2.max(), 0.0)))


def tau_max(spec: MaterialSpec, xi, y_samples: int = 17) -> float:
    """Largest root of the constant-coefficient symbol pencil, maximized over
    a y-sample grid.

    Per point the nonzero roots satisfy tau^2 eps e = cross(xi)^T mu^{-1}
    cross(xi) e, a 3x3 Hermitian-definite problem.  The grid maximum is a
    lower bound of the true sup, exact up to grid resolution for smooth specs
    (the grid collapses along axes the coefficients do not depend on).
    """
    eps_inv_sqrt, inv_mu = _pencil_tables(spec, y_samples)
    return _tau_max_from_tables(np.asarray(xi, dtype=float), eps_inv_sqrt, inv_mu)


def speed_limit_check(spec: MaterialSpec, V, num_samples: int = 1000,
                      y_samples: int = 17, tol: float = 1e-9, seed: int = 0) -> dict:
    """Verify xi.V <= tau_max(-xi) + tol over random unit directions.

    Returns {'worst_margin', 'worst_xi', 'num_samples'}; raises
    SpeedLimitViolation if any margin drops below -tol (a solver bug: the
    packet cannot outrun the medium).
    """
    rng = np.random.default_rng(seed)
    v = np.asarray(V, dtype=float)
    eps_inv_sqrt, inv_mu = _pencil_tables(spec, y_samples)
    worst = np.inf
    worst_xi = None
    for _ in range(num_samples):
        xi = rng.standard_normal(3)
        xi /= np.linalg.norm(xi)
        margin = _tau_max_from_tables(-xi, eps_inv_sqrt, inv_mu) - float(np.dot(xi, v))
        if margin < worst:
            worst, worst_xi = margin, xi
    if worst < -tol:
        raise SpeedLimitViolation(
            f"group velocity violates the propagation bound: margin {worst:.3e} "
            f"along xi={tuple(np.round(worst_xi, 6))}"
        )
    return {"worst_margin": float(worst), "worst_xi": worst_xi, "num_samples": num_samples}
