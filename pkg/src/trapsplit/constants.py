"""Physical constants used throughout the package (SI units)."""

HBAR = 1.054571817e-34  # J s
M_RB87 = 1.44316060e-25  # kg, atomic mass of 87Rb
