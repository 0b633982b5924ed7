"""Named scenarios and presets read from INI-style configuration."""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources

from .correlation import SystemParams
from .evaluation import Scenario, build_tech_scenario
from .simulation import ScenarioConfig

DECIMATE_ABOVE = 100.0

_PARAM_KEYS = {"mu": float, "ell": int, "nu": float, "alpha": float, "kappa": float,
               "density": float}
_CONFIG_KEYS = {"side": float, "length_mode": str, "placement": str, "thin_r": float,
                "thin_k": int, "sinusoids": int}


def parse_deltas(text: str) -> tuple:
    """'1-10' or '1,2,5' or '1-4,8' -> sorted tuple of horizons."""
    out = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.update(range(int(lo), int(hi) + 1))
        else:
            out.add(int(part))
    if not out or min(out) < 1:
        raise ValueError(f"invalid horizon list {text!r}")
    return tuple(sorted(out))


@dataclass(frozen=True)
class Defaults:
    realizations: int = 1000
    full_realizations: int = 10000
    slots: int = 1000
    deltas: tuple = tuple(range(1, 11))


class PresetBook:
    """Scenario and preset definitions from one configuration file."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        d = parser["defaults"] if parser.has_section("defaults") else {}
        self.defaults = Defaults(
            realizations=int(d.get("realizations", 1000)),
            full_realizations=int(d.get("full_realizations", 10000)),
            slots=int(d.get("slots", 1000)),
            deltas=parse_deltas(d.get("deltas", "1-10")),
        )

    @classmethod
    def load(cls, path=None) -> "PresetBook":
        """Built-in definitions, overlaid by the sections of ``path`` if given."""
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        parser.read_string(resources.files(__package__).joinpath("presets.ini").read_text())
        if path is not None:
            with open(path) as fh:
                parser.read_file(fh)
        return cls(parser)

    def presets(self) -> list:
        return sorted(s.split(":", 1)[1] for s in self.parser.sections() if s.startswith("preset:"))

    def scenario_names(self, preset: str) -> list:
        sec = f"preset:{preset}"
        if not self.parser.has_section(sec):
            raise KeyError(f"unknown preset {preset!r}; choose from {self.presets()}")
        return [s.strip() for s in self.parser[sec]["scenarios"].split(",") if s.strip()]

    def _raw(self, name: str, seen=()) -> dict:
        sec = f"scenario:{name}"
        if not self.parser.has_section(sec):
            raise KeyError(f"unknown scenario {name!r}")
        if name in seen:
            raise ValueError(f"scenario {name!r} inherits from itself")
        own = dict(self.parser[sec])
        base = own.pop("base", None)
        merged = self._raw(base, seen + (name,)) if base else {}
        merged.update(own)
        return merged

    def scenario(self, name: str, seed: int = 1, realizations: int | None = None,
                 slots: int | None = None) -> Scenario:
        raw = self._raw(name)
        prm = {k: conv(raw[k]) for k, conv in _PARAM_KEYS.items() if k in raw}
        decimate = None
        if "tech" in raw:
            tech = build_tech_scenario(raw["tech"])
            prm.update(mu=tech.mu, ell=tech.ell, nu=tech.nu)
            decimate = DECIMATE_ABOVE
        cfg = {k: conv(raw[k]) for k, conv in _CONFIG_KEYS.items() if k in raw}
        config = ScenarioConfig(
            params=SystemParams(**prm),
            horizon=self.defaults.slots if slots is None else slots,
            seed=seed,
            realizations=self.defaults.realizations if realizations is None else realizations,
            **cfg,
        )
        return Scenario(name, config, decimate)

    def preset(self, name: str, **kwargs) -> list:
        return [self.scenario(s, **kwargs) for s in self.scenario_names(name)]
