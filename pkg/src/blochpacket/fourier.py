"""Plane-wave representation of periodic 6-component fields and the basic
operators acting on them: the curl block at Bloch frequency theta, material
multiplication (coefficient-space convolution), and the transverse /
longitudinal mode splitting.

Conventions
-----------
Fields live on the torus of period 2*pi.  A field at Bloch frequency
theta in [0,1)^3 is

    u(y) = exp(i theta.y) * sum_n c(n) exp(i n.y),    n in Z^3, |n_a| <= N_a,

with c(n) in C^6 ordered as (E, B).  A general wavevector xi in R^3 splits
uniquely as xi = n + theta with n integer, which fixes the (unit-free)
theta in [0,1)^3 convention used throughout; note this is NOT the
[-pi,pi)^3 Brillouin-zone normalization common in solid-state codes.

The plain L2 inner product is normalized by the cell volume, so it equals
the Euclidean inner product of the coefficient stacks (Parseval).  All
Hermitian/anti-Hermitian statements below refer to this product.

Mode enumeration is the fixed lexicographic bijection

    index(n) = ((n1+N1)*(2*N2+1) + (n2+N2))*(2*N3+1) + (n3+N3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .errors import CutoffMismatch, GammaPointError, MaterialError

Mode = Tuple[int, int, int]
ModKey = Tuple[Tuple[float, float, float, float], Mode]

# y-grid used to validate reconstructed material positivity
_POSITIVITY_GRID = 9
_POSITIVITY_TOL = 1e-10


# ---------------------------------------------------------------------------
# Lattice cutoff and mode bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeCutoff:
    """Truncated reciprocal lattice: modes n with |n_a| <= nmax[a].

    The symmetric cutoff N (same bound on each axis) is the documented
    default; per-axis bounds are supported so layered problems can be
    refined along the structured axis only (the operator is block diagonal
    over the transverse mode indices for layered media, so an anisotropic
    truncation solves exact sub-blocks of the full problem).
    """

    nmax: Tuple[int, int, int]

    def __init__(self, n):
        if np.isscalar(n):
            nmax = (int(n),) * 3
        else:
            nmax = tuple(int(v) for v in n)
        if len(nmax) != 3 or any(v < 0 for v in nmax):
            raise ValueError(f"invalid cutoff {n!r}")
        object.__setattr__(self, "nmax", nmax)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(2 * b + 1 for b in self.nmax)

    @property
    def num_modes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def modes(self) -> np.ndarray:
        """(K, 3) integer array in enumeration order."""
        grids = [np.arange(-b, b + 1) for b in self.nmax]
        n1, n2, n3 = np.meshgrid(*grids, indexing="ij")
        return np.stack([n1.ravel(), n2.ravel(), n3.ravel()], axis=-1)

    def index_of(self, n) -> int:
        n = tuple(int(v) for v in n)
        if not self.contains(n):
            raise KeyError(f"mode {n} outside cutoff {self.nmax}")
        s = self.shape
        return ((n[0] + self.nmax[0]) * s[1] + (n[1] + self.nmax[1])) * s[2] + (
            n[2] + self.nmax[2]
        )

    def contains(self, n) -> bool:
        return all(abs(int(v)) <= b for v, b in zip(n, self.nmax))

    def shift_indices(self, k) -> Tuple[np.ndarray, np.ndarray]:
        """Index pairs (src, dst) with mode(dst) = mode(src) + k, both in range."""
        modes = self.modes
        shifted = modes + np.asarray(k, dtype=int)
        ok = np.all(np.abs(shifted) <= np.asarray(self.nmax), axis=1)
        src = np.nonzero(ok)[0]
        s = self.shape
        off = shifted[src] + np.asarray(self.nmax)
        dst = (off[:, 0] * s[1] + off[:, 1]) * s[2] + off[:, 2]
        return src, dst


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass
class FourierField6:
    """(E, B) field at Bloch frequency theta as a (K, 6) coefficient array."""

    cutoff: LatticeCutoff
    theta: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).reshape(3)
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.cutoff.num_modes, 6):
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} != ({self.cutoff.num_modes}, 6)"
            )

    def copy(self) -> "FourierField6":
        return FourierField6(self.cutoff, self.theta, self.coeffs.copy())

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)


def zero_field(cutoff: LatticeCutoff, theta) -> FourierField6:
    return FourierField6(cutoff, theta, np.zeros((cutoff.num_modes, 6), dtype=complex))


def random_field(cutoff: LatticeCutoff, theta, rng) -> FourierField6:
    c = rng.standard_normal((cutoff.num_modes, 6)) + 1j * rng.standard_normal(
        (cutoff.num_modes, 6)
    )
    return FourierField6(cutoff, theta, c)


def _check_compatible(f: FourierField6, g: FourierField6):
    if f.cutoff != g.cutoff or not np.allclose(f.theta, g.theta, atol=0, rtol=0):
        raise CutoffMismatch("fields built on different cutoffs or Bloch frequencies")


def inner(f: FourierField6, g: FourierField6) -> complex:
    """Plain L2 inner product <f, g>, linear in f, conjugate-linear in g."""
    _check_compatible(f, g)
    return complex(np.sum(f.coeffs * np.conj(g.coeffs)))


def norm(f: FourierField6) -> float:
    return float(np.linalg.norm(f.coeffs))


def wavevectors(cutoff: LatticeCutoff, theta) -> np.ndarray:
    """(K, 3) array of theta + n over the cutoff set."""
    return np.asarray(theta, dtype=float)[None, :] + cutoff.modes


# ---------------------------------------------------------------------------
# Curl block at Bloch frequency theta
# ---------------------------------------------------------------------------

def cross_matrix(v) -> np.ndarray:
    """3x3 matrix of u -> v ^ u."""
    v = np.asarray(v)
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]], dtype=complex
    )


def apply_curl_block(f: FourierField6) -> FourierField6:
    """Curl block: per mode n, (E, B)(n) -> (i(theta+n)^B(n), -i(theta+n)^E(n)).

    Anti-Hermitian in the plain coefficient inner product.
    """
    v = wavevectors(f.cutoff, f.theta)
    e, b = f.coeffs[:, :3], f.coeffs[:, 3:]
    out = np.empty_like(f.coeffs)
    out[:, :3] = 1j * np.cross(v, b)
    out[:, 3:] = -1j * np.cross(v, e)
    return FourierField6(f.cutoff, f.theta, out)


def curl_matrix(cutoff: LatticeCutoff, theta) -> np.ndarray:
    """Dense (6K, 6K) matrix of apply_curl_block; mode-major ordering."""
    k = cutoff.num_modes
    v = wavevectors(cutoff, theta)
    mat = np.zeros((6 * k, 6 * k), dtype=complex)
    for i in range(k):
        cx = cross_matrix(v[i])
        mat[6 * i : 6 * i + 3, 6 * i + 3 : 6 * i + 6] = 1j * cx
        mat[6 * i + 3 : 6 * i + 6, 6 * i : 6 * i + 3] = -1j * cx
    return mat


def constant_curl_symbol(xi) -> np.ndarray:
    """6x6 symbol sum_j xi_j A_j = [[0, -xi^],[xi^, 0]] of the constant-coefficient
    curl part (the first-order symbol contracted with a direction xi)."""
    cx = cross_matrix(xi)
    out = np.zeros((6, 6), dtype=complex)
    out[:3, 3:] = -cx
    out[3:, :3] = cx
    return out


def apply_constant_symbol(xi, coeffs: np.ndarray) -> np.ndarray:
    """Apply the mode-diagonal 6x6 symbol [[0,-xi^],[xi^,0]] to a (K, 6) array."""
    e, b = coeffs[:, :3], coeffs[:, 3:]
    out = np.empty_like(coeffs)
    xi = np.asarray(xi, dtype=float)
    out[:, :3] = -np.cross(np.broadcast_to(xi, e.shape), b)
    out[:, 3:] = np.cross(np.broadcast_to(xi, e.shape), e)
    return out


def apply_curl_direction(j: int, coeffs: np.ndarray) -> np.ndarray:
    """Apply the 6x6 block [[0, e_j^],[-e_j^, 0]] (the coefficient of d/dx_j in
    the curl block) to a (K, 6) array."""
    ej = np.zeros(3)
    ej[j] = 1.0
    return -apply_constant_symbol(ej, coeffs)


# ---------------------------------------------------------------------------
# Transverse / longitudinal splitting
# ---------------------------------------------------------------------------

def _check_theta(theta):
    """theta = 0 (and any integer vector, which represents the same point of
    the unit cell [0,1)^3) is rejected: the curl kernel is not complemented
    there and the tracked eigenfrequency must be nonzero.  Values outside the
    canonical [0,1)^3 range are accepted and interpreted on the same mode
    lattice -- derivative stencils need to cross the cell boundary without
    re-indexing coefficients."""
    theta = np.asarray(theta, dtype=float).reshape(3)
    if np.all(theta == np.round(theta)):
        raise GammaPointError(
            "theta on the integer lattice is excluded: the curl kernel is not "
            "complemented there and the tracked eigenfrequency must be nonzero "
            "(the constant-multiplicity setting requires theta != 0)"
        )
    return theta


def transverse_basis(cutoff: LatticeCutoff, theta) -> np.ndarray:
    """Orthonormal pair spanning (theta+n)^perp for each mode.

    Returns (K, 2, 3): rows [i, 0] and [i, 1] are u1, u2 with
    u1 ^ u2 = v_hat.  Tie-break: let a be the coordinate axis least parallel
    to v (lowest index on ties); u2 = normalize(v_hat ^ e_a), u1 = u2 ^ v_hat.
    Deterministic and continuous in theta away from axis switches.
    """
    theta = _check_theta(theta)
    v = wavevectors(cutoff, theta)
    vn = np.linalg.norm(v, axis=1)
    # theta != 0 guarantees theta + n != 0 for every integer n
    vhat = v / vn[:, None]
    axis = np.argmin(np.abs(vhat), axis=1)
    ea = np.eye(3)[axis]
    u2 = np.cross(vhat, ea)
    u2 /= np.linalg.norm(u2, axis=1)[:, None]
    u1 = np.cross(u2, vhat)
    return np.stack([u1, u2], axis=1)


def longitudinal_unit(cutoff: LatticeCutoff, theta) -> np.ndarray:
    """(K, 3) unit vectors along theta + n (the per-mode curl kernel direction)."""
    theta = _check_theta(theta)
    v = wavevectors(cutoff, theta)
    return v / np.linalg.norm(v, axis=1)[:, None]


def transverse_field_basis(cutoff: LatticeCutoff, theta) -> np.ndarray:
    """(6K, 4K) matrix whose columns are the transverse E/B unit fields.

    Column order: per mode (E,u1), (E,u2), (B,u1), (B,u2).  The span is the
    plain-orthogonal complement of the discrete curl kernel.
    """
    k = cutoff.num_modes
    u = transverse_basis(cutoff, theta)
    cols = np.zeros((6 * k, 4 * k), dtype=complex)
    for i in range(k):
        cols[6 * i : 6 * i + 3, 4 * i + 0] = u[i, 0]
        cols[6 * i : 6 * i + 3, 4 * i + 1] = u[i, 1]
        cols[6 * i + 3 : 6 * i + 6, 4 * i + 2] = u[i, 0]
        cols[6 * i + 3 : 6 * i + 6, 4 * i + 3] = u[i, 1]
    return cols


def longitudinal_field_basis(cutoff: LatticeCutoff, theta) -> np.ndarray:
    """(6K, 2K) matrix of the per-mode curl-kernel fields (E and B along theta+n)."""
    k = cutoff.num_modes
    vhat = longitudinal_unit(cutoff, theta)
    cols = np.zeros((6 * k, 2 * k), dtype=complex)
    for i in range(k):
        cols[6 * i : 6 * i + 3, 2 * i + 0] = vhat[i]
        cols[6 * i + 3 : 6 * i + 6, 2 * i + 1] = vhat[i]
    return cols


# ---------------------------------------------------------------------------
# Materials
# ---------------------------------------------------------------------------

@dataclass
class MaterialSpec:
    """Finitely supported Fourier description of the medium.

    eps0, mu0 : {n: 3x3 complex} -- cell-periodic base permittivities.
    eps1, mu1 : {(eta, n): 3x3 complex} -- slow modulations; eta in R^{1+3} is
        the (t, x) frequency of the trigonometric mode exp(i eta.(t,x)), n the
        cell harmonic.  Callers wanting real modulations supply +-eta pairs.
    lower_order : {(eta, n): 6x6 complex} -- zero-order term (e.g. Ohmic loss,
        conductivity sigma in the top-left block).

    Base coefficients must satisfy coef(-n) = coef(n)^H so the reconstructed
    matrices are Hermitian pointwise; reconstructed eps0, mu0 must be positive
    definite (checked on a 9^3 sample grid, smallest eigenvalue > 1e-10).
    """

    eps0: Dict[Mode, np.ndarray] = field(default_factory=dict)
    mu0: Dict[Mode, np.ndarray] = field(default_factory=dict)
    eps1: Dict[ModKey, np.ndarray] = field(default_factory=dict)
    mu1: Dict[ModKey, np.ndarray] = field(default_factory=dict)
    lower_order: Dict[ModKey, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.eps0 = {_mode_key(n): np.asarray(m, dtype=complex) for n, m in self.eps0.items()}
        self.mu0 = {_mode_key(n): np.asarray(m, dtype=complex) for n, m in self.mu0.items()}
        self.eps1 = {_mod_key(k): np.asarray(m, dtype=complex) for k, m in self.eps1.items()}
        self.mu1 = {_mod_key(k): np.asarray(m, dtype=complex) for k, m in self.mu1.items()}
        self.lower_order = {
            _mod_key(k): np.asarray(m, dtype=complex) for k, m in self.lower_order.items()
        }

    # -- validation --------------------------------------------------------

    def validate(self):
        for name, coefs in (("eps0", self.eps0), ("mu0", self.mu0)):
            for n, m in coefs.items():
                if m.shape != (3, 3):
                    raise MaterialError(f"{name}[{n}] is not 3x3")
                neg = tuple(-v for v in n)
                partner = coefs.get(neg)
                if partner is None or not np.allclose(partner, m.conj().T, atol=1e-12):
                    raise MaterialError(
                        f"{name}: coefficient at {neg} must equal the conjugate "
                        f"transpose of the coefficient at {n}"
                    )
            grid = material_on_grid(coefs, _POSITIVITY_GRID)
            herm = 0.5 * (grid + np.conj(np.swapaxes(grid, -1, -2)))
            eigs = np.linalg.eigvalsh(herm)
            if eigs.min() <= _POSITIVITY_TOL:
                raise MaterialError(
                    f"{name} reconstruction is not positive definite "
                    f"(min eigenvalue {eigs.min():.3e} on a {_POSITIVITY_GRID}^3 grid)"
                )
        for name, coefs, dim in (
            ("eps1", self.eps1, 3),
            ("mu1", self.mu1, 3),
            ("lower_order", self.lower_order, 6),
        ):
            for (eta, n), m in coefs.items():
                if m.shape != (dim, dim):
                    raise MaterialError(f"{name}[{eta},{n}] is not {dim}x{dim}")
        return self

    # -- modulation access --------------------------------------------------

    def modulation_frequencies(self):
        """Sorted list of all (t, x)-frequencies eta carried by the modulations."""
        etas = set()
        for coefs in (self.eps1, self.mu1, self.lower_order):
            etas.update(eta for (eta, _n) in coefs)
        return sorted(etas)

    def modulation_at(self, eta):
        """Per-eta cell-harmonic maps (eps1_n, mu1_n, lower_n) for frequency eta."""
        eta = tuple(float(v) for v in eta)
        pick = lambda coefs: {n: m for (e, n), m in coefs.items() if e == eta}
        return pick(self.eps1), pick(self.mu1), pick(self.lower_order)

    def is_static(self) -> bool:
        return not (self.eps1 or self.mu1 or self.lower_order)


def _mode_key(n) -> Mode:
    return tuple(int(v) for v in n)


def _mod_key(key) -> ModKey:
    eta, n = key
    return tuple(float(v) for v in eta), _mode_key(n)


# ---------------------------------------------------------------------------
# Coefficient-space convolution (Galerkin truncated)
# ---------------------------------------------------------------------------

def conv_apply(coefs: Dict[Mode, np.ndarray], cutoff: LatticeCutoff, arr: np.ndarray) -> np.ndarray:
    """(A f)(m) = sum_k A(k) f(m-k), projected back onto the cutoff set.

    arr has shape (K, d); each coefficient is d x d.
    """
    out = np.zeros_like(arr)
    for k, mat in coefs.items():
        src, dst = cutoff.shift_indices(k)
        out[dst] += arr[src] @ mat.T
    return out


def conv_matrix(coefs: Dict[Mode, np.ndarray], cutoff: LatticeCutoff, dim: int) -> np.ndarray:
    """Dense (dim*K, dim*K) matrix of conv_apply."""
    k = cutoff.num_modes
    mat = np.zeros((dim * k, dim * k), dtype=complex)
    for key, block in coefs.items():
        src, dst = cutoff.shift_indices(key)
        for s, d in zip(src, dst):
            mat[dim * d : dim * d + dim, dim * s : dim * s + dim] += block
    return mat


def apply_material(spec: MaterialSpec, which: str, f: FourierField6) -> FourierField6:
    """Multiply by a base material: 'eps0' acts on the E block, 'mu0' on the B
    block, 'A0' block-diagonally on both.  The untouched block passes through."""
    out = f.coeffs.copy()
    if which in ("eps0", "A0"):
        out[:, :3] = conv_apply(spec.eps0, f.cutoff, f.coeffs[:, :3])
    if which in ("mu0", "A0"):
        out[:, 3:] = conv_apply(spec.mu0, f.cutoff, f.coeffs[:, 3:])
    if which not in ("eps0", "mu0", "A0"):
        raise ValueError(f"unknown material selector {which!r}")
    return FourierField6(f.cutoff, f.theta, out)


def base_material_matrix(spec: MaterialSpec, cutoff: LatticeCutoff) -> np.ndarray:
    """Dense (6K, 6K) matrix of the block-diagonal base material (eps0 on E,
    mu0 on B)."""
    k = cutoff.num_modes
    mat = np.zeros((6 * k, 6 * k), dtype=complex)
    for coefs, off in ((spec.eps0, 0), (spec.mu0, 3)):
        for key, block in coefs.items():
            src, dst = cutoff.shift_indices(key)
            for s, d in zip(src, dst):
                mat[6 * d + off : 6 * d + off + 3, 6 * s + off : 6 * s + off + 3] += block
    return mat


def modulation_apply(spec: MaterialSpec, eta, cutoff: LatticeCutoff, arr: np.ndarray,
                     omega: float) -> np.ndarray:
    """Apply i*omega*A0^1(eta, .) + lower_order(eta, .) to a (K, 6) array.

    This is the y-multiplication operator carried by a single (t, x)-frequency
    of the slow modulations.
    """
    eps_n, mu_n, low_n = spec.modulation_at(eta)
    out = np.zeros_like(arr)
    if eps_n:
        out[:, :3] += 1j * omega * conv_apply(eps_n, cutoff, arr[:, :3])
    if mu_n:
        out[:, 3:] += 1j * omega * conv_apply(mu_n, cutoff, arr[:, 3:])
    if low_n:
        out += conv_apply(low_n, cutoff, arr)
    return out


# ---------------------------------------------------------------------------
# Grid reconstruction (used for validation and test oracles)
# ---------------------------------------------------------------------------

def cell_grid(samples: int) -> np.ndarray:
    """Uniform y-grid on [0, 2pi)^3, shape (S, S, S, 3)."""
    y = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    y1, y2, y3 = np.meshgrid(y, y, y, indexing="ij")
    return np.stack([y1, y2, y3], axis=-1)


def material_on_grid(coefs: Dict[Mode, np.ndarray], samples: int) -> np.ndarray:
    """Reconstruct sum_n coef(n) exp(i n.y) on an S^3 grid; shape (S,S,S,3,3)."""
    grid = cell_grid(samples)
    out = np.zeros(grid.shape[:3] + next(iter(coefs.values())).shape, dtype=complex)
    for n, mat in coefs.items():
        phase = np.exp(1j * (grid @ np.asarray(n, dtype=float)))
        out += phase[..., None, None] * mat
    return out


def field_on_grid(f: FourierField6, samples: int, bloch_phase: bool = True) -> np.ndarray:
    """Evaluate the field on an S^3 y-grid; shape (S, S, S, 6).

    With bloch_phase the full theta-quasi-periodic field exp(i theta.y) * (...)
    is returned; without it only the 2*pi-periodic part.
    """
    y = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    c = f.coeffs.reshape(f.cutoff.shape + (6,))
    phases = [np.exp(1j * np.outer(y, np.arange(-b, b + 1))) for b in f.cutoff.nmax]
    out = np.einsum("xa,yb,zc,abcd->xyzd", phases[0], phases[1], phases[2], c,
                    optimize=True)
    if bloch_phase:
        grid = cell_grid(samples)
        out = out * np.exp(1j * (grid @ f.theta))[..., None]
    return out


def grid_inner(u: np.ndarray, v: np.ndarray) -> complex:
    """Cell-averaged L2 inner product of two (S,S,S,d) grid fields."""
    return complex(np.sum(u * np.conj(v)) / np.prod(u.shape[:3]))
