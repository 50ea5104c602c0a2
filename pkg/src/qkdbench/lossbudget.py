"""Optical loss chains and light-injection estimates.

Components carry per-wavelength insertion loss in dB for each propagation
direction. A path is an ordered list of legs starting at the quantum-channel
port and walking into the device. Single-pass paths give the power that
reaches an inner element; double-pass paths model the Trojan-horse geometry
where everything behind the last element is taken to reflect totally and the
light retraces the chain back out.

Example:
    >>> cat = load_catalog("table2")
    >>> round(path_loss(cat.paths["trojan_alice"], 1548.51), 2)
    172.15
"""
from __future__ import annotations

import bisect
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigInvalid, InvalidGeometry, MissingSpectralData

#: Planck constant times speed of light, J*m, rounded as in the reference estimate.
HC = 1.99e-25
#: Injected power assumed limited by fibre damage.
DEFAULT_W_IN = 100.0
WAVELENGTH_RANGE_NM = (350.0, 2400.0)

CATALOG_PATH_ENV = "QKDBENCH_CATALOG_PATH"

_OPPOSITE = {"forward": "reverse", "reverse": "forward"}


def db_to_linear(loss_db: float) -> float:
    """Transmittance of a loss given in dB.

    >>> db_to_linear(10.0)
    0.1
    """
    if not math.isfinite(loss_db):
        raise ValueError(f"loss must be finite, got {loss_db!r}")
    return 10.0 ** (-loss_db / 10.0)


def linear_to_db(transmittance: float) -> float:
    """Loss in dB of a transmittance in (0, 1]."""
    if not transmittance > 0.0:
        raise ValueError(f"transmittance must be positive, got {transmittance!r}")
    return -10.0 * math.log10(transmittance)


def _check_wavelength(wl):
    lo, hi = WAVELENGTH_RANGE_NM
    if not lo <= wl <= hi:
        raise ValueError(f"wavelength {wl} nm outside {lo}-{hi} nm")


@dataclass(frozen=True)
class ComponentSpec:
    """Insertion loss table of one optical component.

    Tables map wavelength in nm to loss in dB. Between table points the loss
    is interpolated linearly in dB; outside the covered span there is no data.
    """

    name: str
    loss_forward: Mapping[float, float]
    loss_reverse: Mapping[float, float]

    def __post_init__(self):
        for label, table in (("forward", self.loss_forward), ("reverse", self.loss_reverse)):
            if not table:
                raise ValueError(f"{self.name}: empty {label} loss table")
            for wl, db in table.items():
                _check_wavelength(float(wl))
                if not (math.isfinite(db) and db >= 0.0):
                    raise ValueError(f"{self.name}: {label} loss at {wl} nm must be >= 0 dB, got {db}")
        object.__setattr__(self, "loss_forward", _freeze_table(self.loss_forward))
        object.__setattr__(self, "loss_reverse", _freeze_table(self.loss_reverse))

    @classmethod
    def symmetric(cls, name, table):
        return cls(name, table, table)

    def loss(self, direction: str, wavelength_nm: float) -> float:
        if direction == "forward":
            table = self.loss_forward
        elif direction == "reverse":
            table = self.loss_reverse
        else:
            raise ValueError(f"direction must be 'forward' or 'reverse', got {direction!r}")
        return _interp_db(self.name, direction, table, wavelength_nm)

    def with_loss(self, direction: str, wavelength_nm: float, loss_db: float) -> "ComponentSpec":
        """Copy with one table point replaced (or added)."""
        fwd, rev = dict(self.loss_forward), dict(self.loss_reverse)
        (fwd if direction == "forward" else rev)[float(wavelength_nm)] = float(loss_db)
        return ComponentSpec(self.name, fwd, rev)


def _freeze_table(table):
    return dict(sorted((float(k), float(v)) for k, v in table.items()))


def _interp_db(name, direction, table, wl):
    wls = list(table)
    if wl in table:
        return table[wl]
    i = bisect.bisect_left(wls, wl)
    if i == 0 or i == len(wls):
        raise MissingSpectralData(
            f"{name} ({direction}) has data only for {wls[0]}-{wls[-1]} nm, not {wl} nm"
        )
    w0, w1 = wls[i - 1], wls[i]
    f = (wl - w0) / (w1 - w0)
    return table[w0] + f * (table[w1] - table[w0])


@dataclass(frozen=True)
class Leg:
    component: ComponentSpec
    direction: str = "forward"
    passes: int = 1

    def __post_init__(self):
        if self.direction not in _OPPOSITE:
            raise ValueError(f"direction must be 'forward' or 'reverse', got {self.direction!r}")
        if self.passes not in (1, 2):
            raise ValueError(f"passes must be 1 or 2, got {self.passes}")

    def loss(self, wavelength_nm):
        there = self.component.loss(self.direction, wavelength_nm)
        if self.passes == 1:
            return there
        return there + self.component.loss(_OPPOSITE[self.direction], wavelength_nm)


@dataclass(frozen=True)
class OpticalPath:
    """Ordered legs from the channel port inwards.

    ``direction`` is the direction of the inbound traversal. A leg with
    ``passes=2`` is crossed inbound and then outbound in the opposite
    direction, which is only meaningful when ``reflection`` declares a
    reflector behind the innermost leg; in that case every leg is
    double-passed.
    """

    legs: tuple[Leg, ...] = ()
    reflection: bool = False
    connector_loss_db: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(self.legs))
        if self.connector_loss_db < 0:
            raise ValueError("connector loss must be >= 0 dB")
        double = [leg.passes == 2 for leg in self.legs]
        if any(double) and not self.reflection:
            raise InvalidGeometry("passes=2 requires a declared reflection behind the path")
        if self.reflection and not all(double):
            raise InvalidGeometry("a reflecting path must double-pass every leg")

    @property
    def is_double_pass(self) -> bool:
        return self.reflection and bool(self.legs)

    def __add__(self, other: "OpticalPath") -> "OpticalPath":
        if self.reflection != other.reflection or self.connector_loss_db != other.connector_loss_db:
            raise InvalidGeometry("only paths of the same geometry can be concatenated")
        return OpticalPath(self.legs + other.legs, self.reflection, self.connector_loss_db)

    def replace_component(self, component: ComponentSpec) -> "OpticalPath":
        legs = tuple(
            Leg(component, leg.direction, leg.passes) if leg.component.name == component.name else leg
            for leg in self.legs
        )
        return OpticalPath(legs, self.reflection, self.connector_loss_db)


def path_loss(path: OpticalPath, wavelength_nm: float) -> float:
    """Total loss of ``path`` in dB at ``wavelength_nm``."""
    total = 0.0
    for leg in path.legs:
        total += leg.loss(wavelength_nm) + leg.passes * path.connector_loss_db
    return total


def photons_per_pulse(w_in: float, f_p: float, wavelength_nm: float) -> float:
    """Mean photon number per pulse of a power ``w_in`` split into pulses at ``f_p``.

    >>> f"{photons_per_pulse(100.0, 312.5e6, 1550.0):.3g}"
    '2.49e+12'
    """
    if not f_p > 0:
        raise ValueError(f"pulse rate must be positive, got {f_p}")
    if w_in < 0:
        raise ValueError(f"power must be >= 0, got {w_in}")
    return (w_in / f_p) * (wavelength_nm * 1e-9 / HC)


@dataclass(frozen=True)
class InjectionScenario:
    path: OpticalPath
    wavelength_nm: float
    w_in: float = DEFAULT_W_IN
    f_p: float = 312.5e6

    def __post_init__(self):
        if self.w_in < 0:
            raise ValueError("W_in must be >= 0")
        if not self.f_p > 0:
            raise ValueError("f_p must be positive")
        _check_wavelength(self.wavelength_nm)


@dataclass(frozen=True)
class LeakageResult:
    total_loss_db: float
    delivered_power_w: float
    mean_photons_out: float
    mean_photons_in: float = field(default=float("nan"))

    def as_record(self) -> dict:
        return {
            "total_loss_db": self.total_loss_db,
            "delivered_power_w": self.delivered_power_w,
            "mean_photons_out": self.mean_photons_out,
            "mean_photons_in": self.mean_photons_in,
        }


def delivered_power(scn: InjectionScenario) -> float:
    """Power in W reaching the innermost element of a single-pass path."""
    if scn.path.is_double_pass:
        raise InvalidGeometry("delivered_power expects a single-pass injection path")
    return scn.w_in * db_to_linear(path_loss(scn.path, scn.wavelength_nm))


def trojan_leakage(scn: InjectionScenario) -> LeakageResult:
    """Mean photon number per pulse that leaves the device after a round trip."""
    if not scn.path.is_double_pass:
        raise InvalidGeometry("trojan_leakage expects a double-pass path with a reflection")
    return evaluate(scn)


def evaluate(scn: InjectionScenario) -> LeakageResult:
    """Loss, output power and output photon number for either geometry."""
    loss = path_loss(scn.path, scn.wavelength_nm)
    t = db_to_linear(loss)
    n_in = photons_per_pulse(scn.w_in, scn.f_p, scn.wavelength_nm)
    return LeakageResult(loss, scn.w_in * t, t * n_in, n_in)


# --- catalogs -----------------------------------------------------------------


@dataclass(frozen=True)
class Catalog:
    name: str
    wavelength_nm: float
    components: Mapping[str, ComponentSpec]
    paths: Mapping[str, OpticalPath]
    description: str = ""


def _component_from_json(name, spec):
    if "loss" in spec:
        return ComponentSpec.symmetric(name, spec["loss"])
    return ComponentSpec(name, spec["forward"], spec["reverse"])


def catalog_from_dict(doc: Mapping) -> Catalog:
    """Build a catalog from its JSON form.

    ``base`` names another catalog whose components are inherited;
    ``overrides`` then replaces single table points, e.g.
    ``{"Iso2": {"reverse": 26}}`` at the catalog wavelength.
    """
    try:
        wl = float(doc["wavelength_nm"])
        comps: dict[str, ComponentSpec] = {}
        paths_doc = {}
        if "base" in doc:
            base = load_catalog(doc["base"])
            comps.update(base.components)
            paths_doc.update(_paths_to_dict(base.paths))
        for name, spec in doc.get("components", {}).items():
            comps[name] = _component_from_json(name, spec)
        for name, over in doc.get("overrides", {}).items():
            comp = comps[name]
            for direction, db in over.items():
                if direction == "loss":
                    comp = comp.with_loss("forward", wl, db).with_loss("reverse", wl, db)
                else:
                    comp = comp.with_loss(direction, wl, db)
            comps[name] = comp
        paths_doc.update(doc.get("paths", {}))
        paths = {name: _path_from_dict(p, comps) for name, p in paths_doc.items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"catalog {doc.get('name', '?')}: {exc}") from exc
    return Catalog(doc.get("name", "unnamed"), wl, comps, paths, doc.get("description", ""))


def _path_from_dict(p, comps):
    legs = []
    for entry in p["legs"]:
        name, direction, passes = entry
        if name not in comps:
            raise KeyError(f"path references unknown component {name!r}")
        legs.append(Leg(comps[name], direction, int(passes)))
    return OpticalPath(tuple(legs), bool(p.get("reflection", False)), float(p.get("connector_loss_db", 0.0)))


def _paths_to_dict(paths):
    return {
        name: {
            "reflection": p.reflection,
            "connector_loss_db": p.connector_loss_db,
            "legs": [[leg.component.name, leg.direction, leg.passes] for leg in p.legs],
        }
        for name, p in paths.items()
    }


def catalog_search_path() -> list[Path]:
    env = os.environ.get(CATALOG_PATH_ENV, "")
    return [Path(p) for p in env.split(os.pathsep) if p]


def find_catalog(ref: str, extra_dirs: Iterable[Path] = ()) -> Path | None:
    """Resolve a catalog reference: an existing file, or a name searched in
    ``extra_dirs``, the env search path and finally the bundled catalogs."""
    p = Path(ref)
    if p.suffix == ".json" and p.is_file():
        return p
    fname = ref if ref.endswith(".json") else ref + ".json"
    for d in [*extra_dirs, *catalog_search_path()]:
        cand = Path(d) / fname
        if cand.is_file():
            return cand
    bundled = resources.files("qkdbench") / "data" / "catalogs" / fname
    if bundled.is_file():
        return Path(str(bundled))
    return None


def load_catalog(ref: str, extra_dirs: Iterable[Path] = ()) -> Catalog:
    path = find_catalog(ref, extra_dirs)
    if path is None:
        raise ConfigInvalid(f"catalog {ref!r} not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"catalog {path}: {exc}") from exc
    return catalog_from_dict(doc)
