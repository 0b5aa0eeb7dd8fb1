"""Problem configuration: a sectioned key = value text format.

Sections: [model], [payoff], [grid], [solve], [mc], [output]. Repeated
``g1_piece``/``g2_piece`` keys accumulate; pieces are written as
``(lo, hi, c0, c1, c2, c3)`` with ``inf`` allowed for the last upper bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .catalog import catalog_names, get_entry
from .errors import ConfigError, DynkinError
from .payoffs import PayoffPair, PiecewisePolynomial

_SECTIONS = ("model", "payoff", "grid", "solve", "mc", "output")

_DEFAULTS = {
    "model": {"family": "gbm", "beta": 0.05, "sigma": 0.3,
              "integrability_42": True},
    "payoff": {},
    "grid": {"x_min": None, "x_max": None, "n_points": 2001, "x_ref": None},
    "solve": {"tol_fix_rel": 1e-12, "gap_threshold_rel": 1e-4,
              "force_numeric_fundamental": False, "boundary": "natural"},
    "mc": {"enabled": False, "n_paths": 20000, "dt": 1e-3, "horizon": None,
           "seed": 20060816, "probe_barriers": (), "antithetic": False},
    "output": {"dir": ".", "csv": "", "json": "", "plot_data": ""},
}


def _parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("inf", "+inf"):
        return math.inf
    if low in ("none", ""):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _parse_value(text: str):
    t = text.strip()
    if "," in t and not t.startswith("("):
        return tuple(_parse_scalar(p) for p in t.split(",") if p.strip() != "")
    return _parse_scalar(t)


def _parse_piece(text: str, where: str):
    t = text.strip()
    if not (t.startswith("(") and t.endswith(")")):
        raise ConfigError(f"{where}: piece must look like (lo, hi, c0, c1, c2, c3)")
    parts = [p.strip() for p in t[1:-1].split(",")]
    if len(parts) != 6:
        raise ConfigError(f"{where}: piece needs exactly 6 entries, got {len(parts)}")
    vals = []
    for p in parts:
        v = _parse_scalar(p)
        if not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: non-numeric entry {p!r}")
        vals.append(float(v))
    return tuple(vals)


@dataclass
class ProblemConfig:
    model: dict = field(default_factory=dict)
    payoff: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    solve: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    g1_pieces: tuple = ()
    g2_pieces: tuple = ()

    def resolved(self) -> dict:
        """Plain nested dict with defaults applied (hashable as canonical JSON)."""
        out = {}
        for sec in _SECTIONS:
            merged = dict(_DEFAULTS[sec])
            merged.update(getattr(self, sec))
            out[sec] = merged
        out["payoff"]["g1_pieces"] = [list(p) for p in self.g1_pieces]
        out["payoff"]["g2_pieces"] = [list(p) for p in self.g2_pieces]
        return out

    def build_payoffs(self) -> PayoffPair:
        name = self.payoff.get("catalog")
        if name:
            if name not in catalog_names():
                raise ConfigError(f"unknown catalog name {name!r}")
            entry = get_entry(name, self._catalog_params())
            return entry.payoffs
        if not self.g1_pieces or not self.g2_pieces:
            raise ConfigError("payoff section needs a catalog name or explicit pieces")
        try:
            g1 = PiecewisePolynomial(self.g1_pieces)
            g2 = PiecewisePolynomial(self.g2_pieces)
        except DynkinError as exc:
            raise ConfigError(f"invalid payoff pieces: {exc}") from exc
        return PayoffPair(g1, g2)

    _CATALOG_KEYS = {"k": "K", "strike": "K", "eps": "eps", "penalty": "eps",
                     "c": "C", "scale": "C", "beta": "beta", "sigma": "sigma"}

    def _catalog_params(self) -> dict:
        p = {}
        for key, value in self.payoff.items():
            if key == "catalog":
                continue
            canon = self._CATALOG_KEYS.get(key.lower())
            if canon is None:
                raise ConfigError(f"unknown catalog parameter {key!r}")
            p[canon] = value
        p.setdefault("beta", self.model.get("beta", _DEFAULTS["model"]["beta"]))
        p.setdefault("sigma", self.model.get("sigma", _DEFAULTS["model"]["sigma"]))
        return p

    def catalog_entry(self):
        name = self.payoff.get("catalog")
        if not name:
            return None
        return get_entry(name, self._catalog_params())


def parse_config(text: str) -> ProblemConfig:
    cfg = ProblemConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if key in ("g1_piece", "g2_piece"):
            piece = _parse_piece(value, f"line {lineno}")
            if key == "g1_piece":
                cfg.g1_pieces = cfg.g1_pieces + (piece,)
            else:
                cfg.g2_pieces = cfg.g2_pieces + (piece,)
            continue
        getattr(cfg, section)[key] = _parse_value(value)
    validate_config(cfg)
    return cfg


def load_config(path: str) -> ProblemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def validate_config(cfg: ProblemConfig):
    r = cfg.resolved()
    g = r["grid"]
    if g["x_min"] is not None and g["x_max"] is not None:
        if not (0 < g["x_min"] < g["x_max"]):
            raise ConfigError(f"grid needs 0 < x_min < x_max, got [{g['x_min']}, {g['x_max']}]")
    if g["n_points"] < 101:
        raise ConfigError(f"grid needs n_points >= 101, got {g['n_points']}")
    fam = r["model"]["family"]
    if fam not in ("gbm", "beta_drift_general_vol", "custom"):
        raise ConfigError(f"unknown model family {fam!r}")
    if r["model"].get("beta", 0) <= 0:
        raise ConfigError("model beta must be positive")
    # MC parameter validation happens at run time (a distinct failure mode
    # from config parsing: the solve can succeed while the MC stage cannot)
    # payoff structural validation happens on a probe grid at build time
    payoffs = cfg.build_payoffs()
    if g["x_min"] is not None and g["x_max"] is not None:
        import numpy as np
        probe = np.geomspace(g["x_min"], g["x_max"], 257)
        probe = np.unique(np.concatenate([probe, [k for k in payoffs.kinks
                                                  if g["x_min"] < k < g["x_max"]]]))
        try:
            payoffs.check_on_grid(probe)
        except DynkinError as exc:
            raise ConfigError(str(exc)) from exc
