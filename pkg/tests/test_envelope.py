"""Envelope stepper: closed-form propagation, conservation, splitting order,
and the box guards."""

import numpy as np
import pytest

from blochpacket.envelope import (
    EnvelopeGrid,
    EnvelopeState,
    dispersion_multiplier,
    evolve,
    gaussian_state,
    l2_norm,
    weighted_norm,
)
from blochpacket.errors import BoxTooSmall


def _free_gaussian_exact(grid, hess_diag, T):
    """Closed-form solution with initial data exp(-sum x_a^2/2) and a diagonal
    Hessian: per-axis (1 - i h_a T)^{-1/2} exp(-x_a^2 / (2 (1 - i h_a T)))."""
    xs = grid.meshgrid()
    out = np.ones(grid.shape, dtype=complex)
    for a in range(3):
        if grid.shape[a] == 1:
            continue
        za = 1.0 - 1j * hess_diag[a] * T
        out = out * za**-0.5 * np.exp(-xs[a] ** 2 / (2 * za))
    return out


def test_free_gaussian_closed_form():
    """Isotropic spreading Gaussian at M=64, dT=1e-3, T=1: max error <= 1e-8.
    The box must pad >= 8 widths of the spread packet or the shell guard
    (correctly) aborts."""
    grid = EnvelopeGrid((24.0, 24.0, 24.0), (64, 64, 64))
    st = gaussian_state(grid, (1.0, 1.0, 1.0), [1.0])
    out = evolve(st, np.eye(3), None, 1e-3, 1000)
    exact = _free_gaussian_exact(grid, (1.0, 1.0, 1.0), 1.0)
    assert np.max(np.abs(out.values[0] - exact)) <= 1e-8


def test_constant_potential_scalar_factor():
    grid = EnvelopeGrid((1.0, 32.0, 1.0), (1, 128, 1))
    st = gaussian_state(grid, (1.0, 1.0, 1.0), [1.0])
    c = 0.3 + 0.2j
    hess = np.diag([0.0, 1.0, 0.0])
    free = evolve(st, hess, None, 1e-3, 500)
    damped = evolve(st, hess, {(0.0, 0.0, 0.0): c * np.eye(1)}, 1e-3, 500)
    T = 0.5
    assert np.allclose(damped.values, free.values * np.exp(-c * T), atol=1e-10)


def test_anisotropic_hessian_freezes_flat_axis():
    """hessian diag(0, a, a): no dispersion along the first axis; the solution
    factorizes and the transverse factor follows the 1D closed form."""
    grid = EnvelopeGrid((24.0, 24.0, 1.0), (48, 48, 1))
    st = gaussian_state(grid, (1.0, 1.2, 1.0), [1.0])
    hess = np.diag([0.0, 1 / 0.3, 0.0])
    T = 0.4
    out = evolve(st, hess, None, 2e-3, 200)
    xs = grid.meshgrid()
    za = 1.0 - 1j * (1 / 0.3) * T / 1.2**2
    exact = np.exp(-xs[0] ** 2 / 2.0) * za**-0.5 * np.exp(-xs[1] ** 2 / (2 * 1.2**2 * za))
    assert np.max(np.abs(out.values[0] - exact)) < 1e-9


def test_weighted_norm_zero_field():
    grid = EnvelopeGrid((8.0, 8.0, 8.0), (8, 8, 8))
    st = EnvelopeState(grid, np.zeros((2, 8, 8, 8), dtype=complex))
    assert weighted_norm(st, np.eye(2)) == 0.0


def test_conservation_long_run(modulated_pipe):
    """Zero-order-free, real symmetric modulation: drift of the weighted norm
    over 1000 Strang steps stays at roundoff (<= 1e-10 relative)."""
    from blochpacket.dispersion import projected_mass
    from blochpacket.presets import identity_material, with_cos_modulation
    from blochpacket.rays import build_gamma, ray_average

    pipe = modulated_pipe
    spec = with_cos_modulation(identity_material(), (0.0, 0.0, 0.25, 0.0),
                               amplitude=0.1, target="eps1")
    gamma = build_gamma(pipe.band, pipe.projectors, spec, pipe.cutoff)
    ray = ray_average(gamma, pipe.dispersion.V)
    mass = projected_mass(pipe.band, spec, pipe.cutoff)
    grid = EnvelopeGrid((1.0, 16 * np.pi, 1.0), (1, 128, 1))
    st = gaussian_state(grid, (1.0, 1.5, 1.0), [1.0, 0.5j])
    n0 = weighted_norm(st, mass)
    out = evolve(st, pipe.dispersion.hessian, ray.mean_modes, 1e-3, 1000)
    n1 = weighted_norm(out, mass)
    assert abs(n1 - n0) / n0 <= 1e-10


def test_dissipative_norm_decreases(modulated_pipe):
    """Ohmic loss makes the weighted norm strictly decreasing."""
    from blochpacket.dispersion import projected_mass
    from blochpacket.presets import identity_material, with_ohmic_loss
    from blochpacket.rays import build_gamma, ray_average

    pipe = modulated_pipe
    spec = with_ohmic_loss(identity_material(), 0.05)
    gamma = build_gamma(pipe.band, pipe.projectors, spec, pipe.cutoff)
    ray = ray_average(gamma, pipe.dispersion.V)
    mass = projected_mass(pipe.band, spec, pipe.cutoff)
    grid = EnvelopeGrid((1.0, 16 * np.pi, 1.0), (1, 96, 1))
    st = gaussian_state(grid, (1.0, 1.5, 1.0), [1.0, 0.5j])
    norms = [weighted_norm(st, mass)]
    cur = st
    for _ in range(4):
        cur = evolve(cur, pipe.dispersion.hessian, ray.mean_modes, 1e-3, 100)
        norms.append(weighted_norm(cur, mass))
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_strang_second_order(modulated_pipe):
    """Error against a fine-step reference decays as dT^2 (slope 2.0 +- 0.1).
    Needs an x-dependent potential so the splitting error is nonzero."""
    pipe = modulated_pipe
    grid = EnvelopeGrid((1.0, 16 * np.pi, 1.0), (1, 96, 1))
    st = gaussian_state(grid, (1.0, 1.5, 1.0), [1.0, 0.5j])
    T = 0.32
    ref = evolve(st, pipe.dispersion.hessian, pipe.ray.mean_modes, T / 1024, 1024)
    errs = []
    dts = [T / 16, T / 32, T / 64]
    for n in (16, 32, 64):
        out = evolve(st, pipe.dispersion.hessian, pipe.ray.mean_modes, T / n, n)
        errs.append(float(np.max(np.abs(out.values - ref.values))))
    slope = -np.polyfit(np.log([16, 32, 64]), np.log(errs), 1)[0]
    assert abs(slope - 2.0) <= 0.1


def test_dispersion_multiplier_unitary(identity_pipe):
    grid = EnvelopeGrid((1.0, 16 * np.pi, 1.0), (1, 64, 1))
    mult = dispersion_multiplier(grid, identity_pipe.dispersion.hessian, 1e-3)
    assert np.max(np.abs(np.abs(mult) - 1.0)) < 1e-15


def test_spectral_resolution_saturated(identity_pipe):
    """Doubling the grid changes the solution by < 1e-10 for band-limited
    Gaussian data."""
    hess = identity_pipe.dispersion.hessian
    out = {}
    for m in (96, 192):
        grid = EnvelopeGrid((1.0, 16 * np.pi, 1.0), (1, m, 1))
        st = gaussian_state(grid, (1.0, 1.5, 1.0), [1.0, 0.0])
        out[m] = evolve(st, hess, None, 1e-3, 200)
    coarse = out[96].values[:, :, :, 0]
    fine = out[192].values[:, :, ::2, 0]
    assert np.max(np.abs(coarse - fine)) < 1e-10


def test_growth_bound(modulated_pipe):
    """||w(T)|| <= exp(||mean||_inf T) ||w(0)|| on the grid."""
    pipe = modulated_pipe
    grid = EnvelopeGrid((1.0, 16 * np.pi, 1.0), (1, 96, 1))
    st = gaussian_state(grid, (1.0, 1.5, 1.0), [1.0, 0.5j])
    from blochpacket.envelope import potential_on_grid

    pot = potential_on_grid(grid, pipe.ray.mean_modes, pipe.band.kappa)
    bound_rate = float(np.linalg.norm(pot.reshape(-1, 2, 2), ord=2, axis=(1, 2)).max())
    T = 0.8
    out = evolve(st, pipe.dispersion.hessian, pipe.ray.mean_modes, 2e-3, 400)
    assert l2_norm(out) <= np.exp(bound_rate * T) * l2_norm(st) * (1 + 1e-12)


def test_box_guard_rejects_wide_packet():
    grid = EnvelopeGrid((1.0, 16.0, 1.0), (1, 64, 1))
    st = gaussian_state(grid, (1.0, 3.0, 1.0), [1.0])  # 16/4 = 4 < 2 sigma
    with pytest.raises(BoxTooSmall):
        evolve(st, np.diag([0.0, 1.0, 0.0]), None, 1e-3, 10)
