"""cellmech: homogenized nonlinear mechanics of periodic microstructures.

Pipeline: parametric unit cells -> periodic FEM equilibria -> homogenized
(strain, stress, energy-density) samples -> smooth neural energy surrogate
-> bi-level inverse design with analytic sensitivities.
"""

__version__ = "0.1.0"
