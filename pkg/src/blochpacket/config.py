"""Run configuration: a single JSON document driving every CLI command."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import presets
from .envelope import EnvelopeGrid
from .errors import ConfigError
from .fieldio import material_from_dict
from .fourier import LatticeCutoff, MaterialSpec

DEFAULT_TOLERANCES = {
    "cluster_tol": None,      # None: 1e-8 * max(1, |omega|)
    "gap_tol": 1e-6,
    "divisor_tol": 1e-9,
    "scalar_tol": 1e-8,
}


@dataclass
class PacketConfig:
    widths: Tuple[float, float, float] = (1.0, 1.5, 1.0)
    weights: Optional[np.ndarray] = None   # None: first basis vector
    axes: Tuple[int, ...] = (1,)
    support_sigmas: float = 6.0


@dataclass
class RunConfig:
    material: MaterialSpec
    cutoff: LatticeCutoff
    theta: np.ndarray
    band_selector: dict
    num_bands: int
    packet: PacketConfig
    h_list: Tuple[float, ...]
    horizon: float
    grid: EnvelopeGrid
    envelope_dT: float
    tolerances: dict
    seeding: str
    seed: int
    output: str
    time_domain: dict
    raw: dict = field(default_factory=dict)


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(doc, base_dir=Path(path).parent)


def parse_config(doc: dict, base_dir: Optional[Path] = None) -> RunConfig:
    material = _parse_material(doc.get("material"), base_dir)
    cutoff = LatticeCutoff(doc.get("cutoff", 1))

    theta = np.asarray(doc.get("theta", [0.3, 0.0, 0.0]), dtype=float)
    _require(theta.shape == (3,), "theta must have 3 components")
    _require(np.any(theta != 0.0), "theta must be nonzero (the tracked band needs a nonzero Bloch frequency)")
    _require(np.all((theta >= 0.0) & (theta < 1.0)), "theta components must lie in [0, 1)")

    h_list = tuple(float(h) for h in doc.get("h_list", [1 / 8, 1 / 16, 1 / 32]))
    _require(len(h_list) >= 1 and all(h > 0 for h in h_list), "h_list must contain positive scales")
    _require(all(a > b for a, b in zip(h_list, h_list[1:])), "h_list must be strictly decreasing")

    tol = dict(DEFAULT_TOLERANCES)
    tol.update(doc.get("tolerances", {}))
    for name, val in tol.items():
        if val is not None:
            _require(val > 0, f"tolerance {name} must be positive")

    horizon = float(doc.get("horizon", 1.0))
    _require(horizon > 0, "horizon must be positive")

    grid_doc = doc.get("grid", {"lengths": [16 * np.pi] * 3, "shape": [1, 192, 1]})
    grid = EnvelopeGrid(grid_doc["lengths"], grid_doc["shape"])

    pk = doc.get("packet", {})
    weights = pk.get("weights")
    if weights is not None:
        weights = np.array([complex(c[0], c[1]) for c in weights])
    packet = PacketConfig(
        widths=tuple(pk.get("widths", (1.0, 1.5, 1.0))),
        weights=weights,
        axes=tuple(pk.get("axes", (1,))),
        support_sigmas=float(pk.get("support_sigmas", 6.0)),
    )
    _require(all(0 <= a <= 2 for a in packet.axes), "packet axes must be in {0,1,2}")
    _require(all(w > 0 for w in packet.widths), "packet widths must be positive")

    seeding = doc.get("seeding", "full_profile")
    _require(seeding in ("full_profile", "leading_only"),
             "seeding must be 'full_profile' or 'leading_only'")

    return RunConfig(
        material=material,
        cutoff=cutoff,
        theta=theta,
        band_selector=doc.get("band", {"index": 1}),
        num_bands=int(doc.get("num_bands", 8)),
        packet=packet,
        h_list=h_list,
        horizon=horizon,
        grid=grid,
        envelope_dT=float(doc.get("envelope_dT", 1e-3)),
        tolerances=tol,
        seeding=seeding,
        seed=int(doc.get("seed", 0)),
        output=doc.get("output", "out"),
        time_domain=doc.get("time_domain", {}),
        raw=doc,
    )


def _parse_material(entry, base_dir: Optional[Path]) -> MaterialSpec:
    if entry is None:
        return presets.identity_material()
    if isinstance(entry, str):
        path = Path(entry)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read material {path}: {exc}") from exc
        return material_from_dict(doc)
    if "preset" in entry:
        name = entry["preset"]
        params = entry.get("params", {})
        factory = {
            "identity": presets.identity_material,
            "scaled_identity": presets.scaled_identity,
            "layered": presets.layered,
            "layered_anisotropic": presets.layered_anisotropic,
        }.get(name)
        _require(factory is not None, f"unknown material preset {name!r}")
        spec = factory(**params)
        for mod in entry.get("modulations", []):
            kind = mod.get("kind", "cos")
            _require(kind in ("cos", "ohmic"), f"unknown modulation kind {kind!r}")
            if kind == "ohmic":
                spec = presets.with_ohmic_loss(spec, float(mod["sigma"]))
            else:
                spec = presets.with_cos_modulation(
                    spec,
                    tuple(mod["eta"]),
                    amplitude=float(mod.get("amplitude", 0.1)),
                    cell_mode=tuple(mod.get("cell_mode", (0, 0, 0))),
                    target=mod.get("target", "eps1"),
                )
        return spec
    return material_from_dict(entry)
