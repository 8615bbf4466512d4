"""Material description of a circular-section elastic rod."""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic linear-elastic rod material with a circular cross section.

    Cross-section area and second moment of area are derived from the rod
    radius, so they can never drift out of sync with it.

    Attributes:
        young_modulus: Young's modulus E in Pa.
        rod_radius: cross-section radius in m.
        density: volumetric density in kg/m^3.
    """

    young_modulus: float
    rod_radius: float
    density: float

    def __post_init__(self):
        for name in ("young_modulus", "rod_radius", "density"):
            value = getattr(self, name)
            if not (value > 0.0) or not math.isfinite(value):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    @property
    def area(self) -> float:
        """Cross-section area pi*r^2 in m^2."""
        return math.pi * self.rod_radius**2

    @property
    def moment_inertia(self) -> float:
        """Second moment of area pi*r^4/4 in m^4."""
        return math.pi * self.rod_radius**4 / 4.0

    @property
    def stretch_stiffness(self) -> float:
        """Axial stiffness EA in N."""
        return self.young_modulus * self.area

    @property
    def bend_stiffness(self) -> float:
        """Bending stiffness EI in N*m^2."""
        return self.young_modulus * self.moment_inertia

    @property
    def linear_density(self) -> float:
        """Mass per unit length rho*A in kg/m."""
        return self.density * self.area
