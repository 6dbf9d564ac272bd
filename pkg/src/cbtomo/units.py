"""Physical constants and the unit table used by the circuit engine.

Circuit energies are frequencies E/h in GHz, capacitances in fF and
inductances in nH. The ``*_GHZ`` constants turn SI energies into GHz.
"""

from scipy import constants as _c

e = _c.e
h = _c.h
hbar = _c.hbar

fF = 1e-15
nH = 1e-9
GHz = 1e9
MHz = 1e6
ns = 1e-9

# e^2 / (h * 1 fF) in GHz
E2_OVER_H_FF_GHZ = e**2 / (h * fF) / GHz


def joule_to_ghz(E: float) -> float:
    return E / h / GHz


def ghz_to_joule(f: float) -> float:
    return f * GHz * h


def charging_energy_ghz(C_fF: float) -> float:
    """e^2 / 2C as E/h in GHz."""
    return E2_OVER_H_FF_GHZ / (2.0 * C_fF)
