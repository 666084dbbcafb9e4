"""Unit system and physical constants.

Internal units: energies in eV, positions in nm, temperatures in K with an
explicit Boltzmann constant, time in hbar/eV (hbar = 1), rates in eV.
Masses are stored in the derived unit hbar^2/(eV nm^2).
"""

# Boltzmann constant [eV/K]
KB = 8.617333262e-5

# hbar [eV s]; one internal time unit is this many seconds
HBAR_EV_S = 6.582119569e-16

# 1 eV [J]
EV_J = 1.602176634e-19

# 1 N = 1 J/m expressed per nm: force unit conversion N -> eV/nm.
# Also converts stiffness N/nm -> eV/nm^2.
NEWTON_TO_EV_PER_NM = 1.0 / EV_J * 1e-9  # = 6.241509074e9

# Internal mass unit hbar^2/(eV nm^2) expressed in kg, then in g.
_MASS_UNIT_KG = EV_J * HBAR_EV_S**2 / 1e-18
MASS_UNIT_G = _MASS_UNIT_KG * 1e3


def mass_from_grams(m_g: float) -> float:
    """Convert a mass in grams to internal units hbar^2/(eV nm^2)."""
    return m_g / MASS_UNIT_G


def rate_from_per_second(r: float) -> float:
    """Convert a rate in 1/s to internal units (eV, hbar = 1)."""
    return r * HBAR_EV_S
