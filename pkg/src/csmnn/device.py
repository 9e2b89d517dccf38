"""Analytic FET model used as the characterization oracle.

DC current follows a piecewise alpha-power law with channel-length modulation;
terminal capacitances follow a smoothed Meyer partition plus bias-dependent
junction capacitance.  Every function accepts scalars or numpy arrays.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericInputError

TECH_ENV = "CSMNN_TECH_DIR"
TECH_FILE = "tech_cards.json"

FAMILIES = ("MOS-HP", "MOS-LP", "Fin-HP", "Fin-LP")
CORNER_NAMES = ("TT", "FF", "SS", "FFHT", "SSHT")

# (vdd, temp, phi_m, n_a, t) offsets in sigmas; temperature is handled as a flag.
_CORNER_SIGMAS = {
    "TT": (0, False, 0, 0, 0),
    "FF": (+3, False, -3, +3, -3),
    "SS": (-3, False, +3, -3, +3),
    "FFHT": (+3, True, -3, +3, -3),
    "SSHT": (-3, True, +3, -3, +3),
}

CAP_SMOOTH_BAND = 0.020
THERMAL_VOLTAGE = 0.02585
LEAK_I0_PER_K = 1.0e-3  # leakage current at vgs = vth, per unit kprime (V^alpha)
JUNCTION_PB = 0.8
JUNCTION_MJ = 0.5
JUNCTION_VREV_MIN = -0.2


@dataclass(frozen=True)
class FetParams:
    polarity: str
    vth0: float
    kprime: float
    lam: float = 0.0
    alpha: float = 2.0
    ss_leak: Optional[float] = None
    cgs0: float = 0.0
    cgd0: float = 0.0
    cg_ch: float = 0.0
    width_mult: float = 1.0
    cj0: float = 0.0

    def __post_init__(self):
        if self.polarity not in ("N", "P"):
            raise ConfigError(f"polarity must be 'N' or 'P', got {self.polarity!r}")
        if not self.kprime > 0:
            raise ConfigError("kprime must be positive")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if not 1.0 <= self.alpha <= 2.0:
            raise ConfigError("alpha must lie in [1, 2]")
        if min(self.cgs0, self.cgd0, self.cg_ch, self.cj0) < 0:
            raise ConfigError("capacitance constants must be non-negative")
        if self.width_mult <= 0:
            raise ConfigError("width_mult must be positive")
        if self.ss_leak is not None and self.ss_leak <= 0:
            raise ConfigError("ss_leak must be positive or None")

    def mirrored(self) -> "FetParams":
        """Same card with the opposite polarity."""
        return replace(self, polarity="P" if self.polarity == "N" else "N")


@dataclass(frozen=True)
class Corner:
    name: str
    vdd: float
    temp: float
    d_phi: float
    d_na: float
    d_t: float


# ----------------------------------------------------------------------------
# technology cards


def _card_path(path=None) -> Path:
    if path is not None:
        p = Path(path)
        return p / TECH_FILE if p.is_dir() else p
    env = os.environ.get(TECH_ENV)
    if env:
        return Path(env) / TECH_FILE
    return Path(str(resources.files("csmnn") / "data" / TECH_FILE))


def load_tech_cards(path=None) -> dict:
    """Read the technology card file (JSON, schema ``csmnn-tech/1``)."""
    p = _card_path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"technology card file not found: {p}") from exc
    if data.get("schema") != "csmnn-tech/1":
        raise ConfigError(f"{p}: unsupported schema {data.get('schema')!r}")
    return data


def make_corner(tech: str, name: str, cards: Optional[dict] = None) -> Corner:
    cards = cards or load_tech_cards()
    fam = _family(cards, tech)
    if name not in _CORNER_SIGMAS:
        raise ConfigError(f"unknown corner {name!r}; expected one of {CORNER_NAMES}")
    s_vdd, hot, s_phi, s_na, s_t = _CORNER_SIGMAS[name]
    sens = cards["sensitivity"]
    mu, sigma = fam["pvt"]["vdd"]
    vdd = round(mu + s_vdd * sigma, 12)
    temp = sens["temp_high"] if hot else sens["temp_nominal"]
    if fam["pvt"].get("n_a") is None:
        s_na = 0
    return Corner(name, vdd, temp, float(s_phi), float(s_na), float(s_t))


def _family(cards: dict, tech: str) -> dict:
    try:
        return cards["families"][tech]
    except KeyError:
        raise ConfigError(
            f"unknown technology {tech!r}; expected one of {sorted(cards['families'])}"
        ) from None


def corner_params(tech: str, corner, cards: Optional[dict] = None):
    """Return ``(nfet, pfet, vdd)`` for a technology family at a PVT corner.

    ``corner`` may be a :class:`Corner` or a corner name.
    """
    cards = cards or load_tech_cards()
    if isinstance(corner, str):
        corner = make_corner(tech, corner, cards)
    elif corner.name not in _CORNER_SIGMAS:
        raise ConfigError(f"unknown corner {corner.name!r}")
    fam = _family(cards, tech)
    sens = cards["sensitivity"]

    dvth = sens["vth_per_sigma_phi"] * corner.d_phi - sens["vth_per_sigma_na"] * corner.d_na
    dvth += sens["dvth_dtemp"] * (corner.temp - sens["temp_nominal"])
    kscale = 1.0 - sens["kprime_per_3sigma_t"] * corner.d_t / 3.0
    t_ref = sens["temp_nominal"] + 273.15
    kscale *= ((corner.temp + 273.15) / t_ref) ** sens["mobility_temp_exp"]

    out = []
    for key, pol in (("nfet", "N"), ("pfet", "P")):
        c = dict(fam[key])
        c["vth0"] = c["vth0"] + dvth
        c["kprime"] = c["kprime"] * kscale
        out.append(FetParams(polarity=pol, **c))
    return out[0], out[1], corner.vdd


# ----------------------------------------------------------------------------
# DC current


def _check_finite(*xs):
    for x in xs:
        if not np.all(np.isfinite(x)):
            raise NumericInputError("non-finite voltage passed to device model")


def _n_forward(p: FetParams, vgs, vds):
    """Current and partials for an N-type card with vds >= 0."""
    k = p.kprime * p.width_mult
    a = p.alpha
    vov = vgs - p.vth0
    on = vov > 0
    v = np.where(on, vov, 1.0)
    isat = 0.5 * k * v**a
    disat = 0.5 * k * a * v ** (a - 1.0)
    x = vds / v
    tri = vds < v
    f = np.where(tri, x * (2.0 - x), 1.0)
    df_dx = np.where(tri, 2.0 - 2.0 * x, 0.0)
    i0 = isat * f
    di0_dvds = isat * df_dx / v
    di0_dvov = disat * f - isat * df_dx * vds / (v * v)
    clm = 1.0 + p.lam * vds
    i = np.where(on, i0 * clm, 0.0)
    g_ds = np.where(on, di0_dvds * clm + i0 * p.lam, 0.0)
    g_m = np.where(on, di0_dvov * clm, 0.0)

    if p.ss_leak is not None:
        i_leak0 = LEAK_I0_PER_K * k
        sub = np.where(on, 1.0, 10.0 ** (np.minimum(vov, 0.0) / p.ss_leak))
        dsub = np.where(on, 0.0, sub * np.log(10.0) / p.ss_leak)
        e = np.exp(-vds / THERMAL_VOLTAGE)
        i = i + i_leak0 * sub * (1.0 - e)
        g_m = g_m + i_leak0 * dsub * (1.0 - e)
        g_ds = g_ds + i_leak0 * sub * e / THERMAL_VOLTAGE
    return i, g_m, g_ds


def _n_current(p: FetParams, vgs, vds):
    """N-convention current with source/drain swap for vds < 0."""
    rev = vds < 0
    vgs_e = np.where(rev, vgs - vds, vgs)
    vds_e = np.abs(vds)
    i, gm, gds = _n_forward(p, vgs_e, vds_e)
    i_out = np.where(rev, -i, i)
    gm_out = np.where(rev, -gm, gm)
    gds_out = np.where(rev, gm + gds, gds)
    return i_out, gm_out, gds_out


def ids_derivs(p: FetParams, vgs, vds):
    """Return ``(ids, d ids/d vgs, d ids/d vds)``.

    Current is positive when flowing drain to source.
    """
    vgs = np.asarray(vgs, dtype=float)
    vds = np.asarray(vds, dtype=float)
    _check_finite(vgs, vds)
    if p.polarity == "N":
        return _n_current(p, vgs, vds)
    i, gm, gds = _n_current(p, -vgs, -vds)
    return -i, gm, gds


def ids(p: FetParams, vgs, vds):
    """Drain-to-source current (A)."""
    i = ids_derivs(p, vgs, vds)[0]
    return float(i) if np.ndim(i) == 0 else i


# ----------------------------------------------------------------------------
# capacitances


def _ramp(x, band=CAP_SMOOTH_BAND):
    return np.clip(x / band + 0.5, 0.0, 1.0)


def terminal_caps(p: FetParams, vgs, vds):
    """Smoothed Meyer gate capacitances ``(cgs, cgd)`` in farads."""
    vgs = np.asarray(vgs, dtype=float)
    vds = np.asarray(vds, dtype=float)
    _check_finite(vgs, vds)
    if p.polarity == "P":
        vgs, vds = -vgs, -vds
    rev = vds < 0
    vgs_e = np.where(rev, vgs - vds, vgs)
    vds_e = np.abs(vds)
    vov = vgs_e - p.vth0
    on = _ramp(vov)
    sat = _ramp(vds_e - vov)
    ch_src = p.cg_ch * on * (sat * (2.0 / 3.0) + (1.0 - sat) * 0.5)
    ch_drn = p.cg_ch * on * (1.0 - sat) * 0.5
    # channel share follows the electrical role; overlap stays on its terminal
    w = p.width_mult
    cgs = w * (p.cgs0 + np.where(rev, ch_drn, ch_src))
    cgd = w * (p.cgd0 + np.where(rev, ch_src, ch_drn))
    if cgs.ndim == 0:
        return float(cgs), float(cgd)
    return cgs, cgd


def junction_cap(p: FetParams, v_rev):
    """Drain/source junction capacitance at reverse bias ``v_rev`` (V)."""
    v = np.maximum(np.asarray(v_rev, dtype=float), JUNCTION_VREV_MIN)
    c = p.cj0 * p.width_mult * (1.0 + v / JUNCTION_PB) ** (-JUNCTION_MJ)
    return float(c) if c.ndim == 0 else c


@dataclass(frozen=True)
class DeviceSet:
    """N/P cards plus supply for one technology at one corner."""

    nfet: FetParams
    pfet: FetParams
    vdd: float
    tech: str = ""
    corner: str = ""

    @classmethod
    def for_corner(cls, tech: str, corner: str, cards: Optional[dict] = None) -> "DeviceSet":
        n, p, vdd = corner_params(tech, corner, cards)
        return cls(n, p, vdd, tech, corner)

    def card(self, polarity: str) -> FetParams:
        return self.nfet if polarity == "N" else self.pfet
