"""Bloch eigenproblem for the periodic Maxwell operator at fixed theta.

The spectral problem  i*omega*A0*psi = G*psi  (A0 the block material, G the
curl block at theta) is solved on the dynamic subspace, i.e. on fields whose
E and B parts satisfy the discrete divergence constraints div(eps0 E) =
div(mu0 B) = 0.  That subspace is the A0-orthogonal complement of the curl
kernel; restricted there the problem is Hermitian definite and has no zero
eigenvalues.

Eigenvalues are returned grouped into multiplicity clusters.  Band numbering
counts nonzero eigenvalues outward from zero: positive frequencies ascending
get indices +1, +2, ..., negative frequencies by increasing distance from
zero get -1, -2, ... (each index counts multiplicity; a cluster carries the
index of its first member).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.linalg

from .errors import (
    CutoffMismatch,
    GapViolation,
    MaterialError,
    MultiplicityInconsistent,
)
from .fourier import (
    FourierField6,
    LatticeCutoff,
    MaterialSpec,
    base_material_matrix,
    curl_matrix,
    longitudinal_field_basis,
    transverse_field_basis,
    _check_theta,
)

DEFAULT_GAP_TOL = 1e-6
RESIDUAL_TOL = 1e-9


class ClusterStraddle(UserWarning):
    """num_bands landed inside a multiplicity cluster; the cluster was kept whole."""


def default_cluster_tol(omega: float) -> float:
    return 1e-8 * max(1.0, abs(omega))


@dataclass
class BlochBand:
    """One eigenfrequency cluster: omega, multiplicity kappa, and a
    plain-orthonormal eigenvector block of shape (6K, kappa)."""

    theta: np.ndarray
    omega: float
    kappa: int
    eigvecs: np.ndarray
    band_index: int
    residual: float = 0.0

    def eigvec_field(self, cutoff: LatticeCutoff, a: int) -> FourierField6:
        return FourierField6(cutoff, self.theta, self.eigvecs[:, a].reshape(-1, 6))


@dataclass
class ProjectorPair:
    """Plain-orthogonal projector onto the eigenspace and the partial inverse
    of the Bloch pencil i*omega*A0 - G.

    Pi and Q satisfy Pi^2 = Pi = Pi^H, Q Pi = Pi Q = 0 and
    (i*omega*A0 - G) Q = I - Pi.
    """

    Pi: np.ndarray
    Q: np.ndarray
    basis: np.ndarray  # (6K, kappa), the gauge actually used downstream
    omega: float
    theta: np.ndarray


# ---------------------------------------------------------------------------
# Operator assembly
# ---------------------------------------------------------------------------

def operator_matrices(spec: MaterialSpec, cutoff: LatticeCutoff, theta):
    """Dense (A0, G) pair at this cutoff and Bloch frequency."""
    theta = _check_theta(theta)
    a0 = base_material_matrix(spec, cutoff)
    g = curl_matrix(cutoff, theta)
    return a0, g


def dynamic_subspace_basis(spec: MaterialSpec, cutoff: LatticeCutoff, theta,
                           a0: Optional[np.ndarray] = None) -> np.ndarray:
    """Columns spanning {v : div(eps0 E)=div(mu0 B)=0}, built by
    A0-orthogonalizing the transverse fields against the curl kernel."""
    if a0 is None:
        a0 = base_material_matrix(spec, cutoff)
    t = transverse_field_basis(cutoff, theta)
    ell = longitudinal_field_basis(cutoff, theta)
    a0_ell = a0 @ ell
    gram = ell.conj().T @ a0_ell
    coup = a0_ell.conj().T @ t
    return t - ell @ np.linalg.solve(gram, coup)


# ---------------------------------------------------------------------------
# Eigen solve
# ---------------------------------------------------------------------------

def solve_bands(spec: MaterialSpec, cutoff: LatticeCutoff, theta, num_bands: int,
                cluster_tol: Optional[float] = None) -> List[BlochBand]:
    """Bands sorted by |omega| (negative first on ties), clustered by
    multiplicity.  num_bands counts eigenvalues including multiplicity; a
    cluster straddling the cut is kept whole (with a warning)."""
    theta = _check_theta(theta)
    a0, g = operator_matrices(spec, cutoff, theta)
    dyn = dynamic_subspace_basis(spec, cutoff, theta, a0)
    if num_bands > dyn.shape[1]:
        raise ValueError(
            f"num_bands={num_bands} exceeds the dynamic subspace dimension {dyn.shape[1]}"
        )

    herm = dyn.conj().T @ (-1j * g) @ dyn
    herm = 0.5 * (herm + herm.conj().T)
    mass = dyn.conj().T @ a0 @ dyn
    mass = 0.5 * (mass + mass.conj().T)
    try:
        scipy.linalg.cholesky(mass)
    except scipy.linalg.LinAlgError as exc:
        raise MaterialError("material mass matrix is not positive definite") from exc

    vals, vecs = scipy.linalg.eigh(herm, mass)
    order = np.lexsort((np.sign(vals), np.abs(vals)))
    vals, vecs = vals[order], vecs[:, order]

    clusters = _cluster(vals, cluster_tol)
    bands: List[BlochBand] = []
    count = 0
    indices = _band_indices(vals)
    for sel in clusters:
        if count >= num_bands:
            break
        if count + len(sel) > num_bands:
            warnings.warn(
                f"band cut {num_bands} falls inside a multiplicity-{len(sel)} "
                "cluster; returning the whole cluster",
                ClusterStraddle,
            )
        count += len(sel)
        omega = float(np.mean(vals[sel]))
        psi = dyn @ vecs[:, sel]
        psi = _orthonormalize(psi)
        psi = _fix_gauge(psi)
        resid = _residual(a0, g, psi, omega)
        bands.append(
            BlochBand(
                theta=theta,
                omega=omega,
                kappa=len(sel),
                eigvecs=psi,
                band_index=indices[sel[0]],
                residual=resid,
            )
        )
    return bands


def _cluster(vals: np.ndarray, cluster_tol: Optional[float]) -> List[List[int]]:
    """Group indices of sorted-by-|omega| eigenvalues into clusters of equal
    omega.  The branches are tracked separately so that +-pairs interleaved
    by rounding still cluster correctly; branches never merge."""
    clusters: List[List[int]] = []
    open_cluster = {1: None, -1: None}
    for i in range(len(vals)):
        sgn = 1 if vals[i] >= 0 else -1
        cur = open_cluster[sgn]
        if cur is not None:
            ref = vals[cur[0]]
            tol = cluster_tol if cluster_tol is not None else default_cluster_tol(ref)
            if abs(vals[i] - ref) < tol:
                cur.append(i)
                continue
        cur = [i]
        clusters.append(cur)
        open_cluster[sgn] = cur
    clusters.sort(key=lambda sel: (abs(vals[sel[0]]), np.sign(vals[sel[0]])))
    return clusters


def _band_indices(vals: np.ndarray) -> np.ndarray:
    """Signed band index per eigenvalue in the |omega|-sorted array."""
    idx = np.empty(len(vals), dtype=int)
    pos = neg = 0
    for i, v in enumerate(vals):
        if v >= 0:
            pos += 1
            idx[i] = pos
        else:
            neg += 1
            idx[i] = -neg
    return idx


def _orthonormalize(psi: np.ndarray) -> np.ndarray:
    # thin SVD keeps the span, returns plain-orthonormal columns
    u, _s, vh = np.linalg.svd(psi, full_matrices=False)
    return u @ vh


def _fix_gauge(psi: np.ndarray) -> np.ndarray:
    """For kappa = 1, rotate the phase so the largest-magnitude entry is real
    positive.  Multi-dimensional clusters keep the orthonormal basis as is."""
    if psi.shape[1] == 1:
        j = np.argmax(np.abs(psi[:, 0]))
        phase = psi[j, 0] / abs(psi[j, 0])
        psi = psi / phase
    return psi


def _residual(a0, g, psi, omega) -> float:
    r = 1j * omega * (a0 @ psi) - g @ psi
    return float(np.linalg.norm(r) / max(np.linalg.norm(psi), 1e-300))


# ---------------------------------------------------------------------------
# Projector and partial inverse
# ---------------------------------------------------------------------------

def build_projectors(band: BlochBand, spec: MaterialSpec, cutoff: LatticeCutoff,
                     kernel_tol: Optional[float] = None) -> ProjectorPair:
    """Projector onto ker(i*omega*A0 - G) and the Moore-Penrose partial inverse.

    The pencil L = i*omega*A0 - G is anti-Hermitian, so -iL is Hermitian and
    a single eigendecomposition yields both the kernel projector and the
    pseudo-inverse with the exact defining identities.
    """
    if band.residual > RESIDUAL_TOL:
        raise ValueError(
            f"band residual {band.residual:.3e} exceeds {RESIDUAL_TOL:.0e}; refuse to build projectors"
        )
    a0, g = operator_matrices(spec, cutoff, band.theta)
    herm = band.omega * a0 + 1j * g  # -i * (i omega A0 - G)
    herm = 0.5 * (herm + herm.conj().T)
    s, u = np.linalg.eigh(herm)
    scale = np.abs(s).max()
    tol = kernel_tol if kernel_tol is not None else 1e-8 * scale
    null = np.abs(s) <= tol
    if null.sum() != band.kappa:
        raise MultiplicityInconsistent(
            f"discrete kernel dimension {int(null.sum())} != kappa {band.kappa}; "
            "check the cluster tolerance"
        )
    psi = band.eigvecs
    pi = psi @ psi.conj().T
    nz = ~null
    q = (u[:, nz] * (1.0 / (1j * s[nz]))) @ u[:, nz].conj().T
    return ProjectorPair(Pi=pi, Q=q, basis=psi, omega=band.omega, theta=band.theta)


# ---------------------------------------------------------------------------
# Band tracking along a theta path
# ---------------------------------------------------------------------------

def track_band(spec: MaterialSpec, cutoff: LatticeCutoff, band: BlochBand,
               theta_path, gap_tol: float = DEFAULT_GAP_TOL,
               cluster_tol: Optional[float] = None,
               max_step: float = 0.1) -> List[BlochBand]:
    """Follow the multiplicity-kappa cluster along a theta path.

    Successive eigenbases are aligned by the maximal-overlap unitary
    (subspace Procrustes).  If the cluster's gap to the rest of the spectrum
    drops below gap_tol the constant-multiplicity assumption failed and
    GapViolation is raised with the offending theta.
    """
    path = [np.asarray(t, dtype=float).reshape(3) for t in theta_path]
    for a, b in zip(path[:-1], path[1:]):
        if np.linalg.norm(b - a) > max_step:
            raise ValueError("theta path step exceeds the tracking bound")

    tracked: List[BlochBand] = []
    prev = band
    for theta in path:
        if not tracked and np.allclose(theta, band.theta, rtol=0, atol=1e-15):
            tracked.append(band)
            prev = band
            continue
        cur = _resolve_near(spec, cutoff, theta, prev, gap_tol, cluster_tol)
        cur = _align(prev, cur)
        tracked.append(cur)
        prev = cur
    return tracked


def _resolve_near(spec, cutoff, theta, prev: BlochBand, gap_tol, cluster_tol) -> BlochBand:
    dyn_dim = 4 * cutoff.num_modes
    bands = solve_bands(spec, cutoff, theta, dyn_dim, cluster_tol=cluster_tol)
    all_vals = np.concatenate([[b.omega] * b.kappa for b in bands])
    best = min(bands, key=lambda b: abs(b.omega - prev.omega))
    if best.kappa != prev.kappa:
        raise MultiplicityInconsistent(
            f"tracked cluster multiplicity changed from {prev.kappa} to {best.kappa} "
            f"at theta={tuple(theta)}"
        )
    outside = np.abs(all_vals - best.omega) > 1e-12 * max(1.0, abs(best.omega))
    gap = np.min(np.abs(all_vals[outside] - best.omega)) if outside.any() else np.inf
    if gap < gap_tol:
        raise GapViolation(theta, gap, gap_tol)
    return best


def _align(prev: BlochBand, cur: BlochBand) -> BlochBand:
    """Rotate cur's eigenbasis by the unitary maximizing overlap with prev's."""
    overlap = cur.eigvecs.conj().T @ prev.eigvecs
    u, _s, vh = np.linalg.svd(overlap)
    rot = u @ vh
    return BlochBand(
        theta=cur.theta,
        omega=cur.omega,
        kappa=cur.kappa,
        eigvecs=cur.eigvecs @ rot,
        band_index=cur.band_index,
        residual=cur.residual,
    )


def weighted_overlap(a: BlochBand, b: BlochBand) -> float:
    """Smallest singular value of the subspace overlap (1 = identical spans)."""
    if a.eigvecs.shape != b.eigvecs.shape:
        raise CutoffMismatch("bands from different discretizations")
    s = np.linalg.svd(a.eigvecs.conj().T @ b.eigvecs, compute_uv=False)
    return float(s.min())
