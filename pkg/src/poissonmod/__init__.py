"""Modular classes of Poisson manifolds, Poisson maps, submanifolds and quotients.

Symbolic expressions live in :mod:`poissonmod.expr`; multivector calculus in
:mod:`poissonmod.mvf`; Poisson structures, modular fields and hamiltonian
witnesses in :mod:`poissonmod.poisson`; maps in :mod:`poissonmod.maps`;
cotangent paths in :mod:`poissonmod.paths`; linear holonomy of Poisson
submanifolds in :mod:`poissonmod.holonomy`; group actions and reduction in
:mod:`poissonmod.reduction`; the manifest-driven front end in
:mod:`poissonmod.cli`.
"""

__version__ = "0.1.0"

from .expr import Chart, parse, to_text, is_zero  # noqa: E402
from .poisson import PoissonStructure, VolumeDensity, make_poisson, modular_vf, hamiltonian_vf  # noqa: E402

__all__ = [
    "__version__",
    "Chart",
    "parse",
    "to_text",
    "is_zero",
    "PoissonStructure",
    "VolumeDensity",
    "make_poisson",
    "modular_vf",
    "hamiltonian_vf",
]
