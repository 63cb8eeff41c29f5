"""Physical constants, SI units throughout the package."""

G = 6.67430e-11  # gravitational constant, m^3 kg^-1 s^-2
