"""Numerical laboratory for a PT-symmetric three-level lattice model:
spectral topology and degeneracy atlas, Hermitian dilation, NV-center
pulse synthesis, measurement pipeline and parameter-loop experiments."""

__version__ = "0.1.0"
