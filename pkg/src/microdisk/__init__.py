"""Whispering-gallery-mode microcavity simulator and analysis toolkit.

Submodules:
    device   parametric geometry, materials, permittivity rasterization
    fdtd     body-of-revolution FDTD engine
    modes    harmonic inversion and resonant-mode analysis
    slab     analytic effective-index / cavity oracles
    cqed     cavity-QED parameter chain
    spectra  photoluminescence spectrum synthesis and line fitting
    jobs     batch orchestration behind the CLI
"""

__version__ = "0.1.0"
