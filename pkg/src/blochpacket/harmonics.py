"""Harmonic-resolved fields and semiclassical norms.

A fast-oscillatory field on a periodic box is stored per cell harmonic:

    u(x) = sum_n exp(i (theta + n).x / h) D_n(x),

with envelope-scale profiles D_n on the box grid.  When the carrier
frequencies (theta + n)/h are commensurate with the box (arranged by the
validation configs) the harmonics occupy disjoint frequency ranges, so L2
norms and the semiclassical seminorms

    || x^beta (h d_x)^delta u ||_{L2}

are computed per harmonic and summed: (h d_x) acts per harmonic as
i (theta + n) + h * (spectral derivative), and the polynomial weight
multiplies the envelope values directly (meaningful while the packet stays
inside the box).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Dict, List, Tuple

import numpy as np

from .envelope import EnvelopeGrid

Harmonics = Dict[Tuple[int, int, int], np.ndarray]


@dataclass
class HarmonicField:
    theta: np.ndarray
    h: float
    t: float
    grid: EnvelopeGrid
    data: Harmonics  # n -> (6, M1, M2, M3)

    def copy(self) -> "HarmonicField":
        return HarmonicField(self.theta, self.h, self.t, self.grid,
                             {n: d.copy() for n, d in self.data.items()})


def difference(a: HarmonicField, b: HarmonicField) -> HarmonicField:
    if a.h != b.h or a.grid != b.grid:
        raise ValueError("harmonic fields live on different grids or scales")
    keys = set(a.data) | set(b.data)
    zero = None
    out = {}
    for n in keys:
        da = a.data.get(n)
        db = b.data.get(n)
        if da is None:
            out[n] = -db
        elif db is None:
            out[n] = da.copy()
        else:
            out[n] = da - db
    return HarmonicField(a.theta, a.h, a.t, a.grid, out)


def l2_norm(field: HarmonicField) -> float:
    dv = field.grid.cell_volume
    total = sum(float(np.sum(np.abs(d) ** 2)) for d in field.data.values())
    return float(np.sqrt(total * dv))


def weighted_indices(order: int, axes: Tuple[int, ...]) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """All (beta, delta) pairs with |beta| + |delta| <= order, weights beta
    restricted to the packet's varying axes."""
    symbols = [("x", a) for a in axes] + [("d", a) for a in range(3)]
    out = [((0, 0, 0), (0, 0, 0))]
    for total in range(1, order + 1):
        for combo in combinations_with_replacement(symbols, total):
            beta = [0, 0, 0]
            delta = [0, 0, 0]
            for kind, a in combo:
                if kind == "x":
                    beta[a] += 1
                else:
                    delta[a] += 1
            out.append((tuple(beta), tuple(delta)))
    return sorted(set(out))


def seminorm(field: HarmonicField, beta, delta) -> float:
    """|| x^beta (h d_x)^delta u ||_{L2}, derivatives applied before weights."""
    grid = field.grid
    ks = grid.wave_meshgrid()
    xs = grid.meshgrid()
    weight = np.ones(grid.shape)
    for a in range(3):
        for _ in range(int(beta[a])):
            weight = weight * xs[a]
    dv = grid.cell_volume
    total = 0.0
    for n, d in field.data.items():
        carrier = field.theta + np.asarray(n, dtype=float)
        cur = d
        for a in range(3):
            for _ in range(int(delta[a])):
                hat = np.fft.fftn(cur, axes=(1, 2, 3))
                dcur = np.fft.ifftn(1j * ks[a][None] * hat, axes=(1, 2, 3))
                cur = 1j * carrier[a] * cur + field.h * dcur
        total += float(np.sum(np.abs(weight[None] * cur) ** 2))
    return float(np.sqrt(total * dv))
