"""Physical constants shared across the package."""

import math

#: Vacuum permittivity, F/m.
EPS0 = 1.0e-9 / (36.0 * math.pi)

#: Vacuum permeability, H/m.
MU0 = 4.0e-7 * math.pi

#: Speed of light derived from the above (exactly 3e8 m/s).
C0 = 1.0 / math.sqrt(EPS0 * MU0)

#: Free-space impedance sqrt(mu0/eps0), ohms.
Z0 = math.sqrt(MU0 / EPS0)
