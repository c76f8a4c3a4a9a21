"""Synthetic-benchmark laboratory for modality-prioritized gradient modulation.

Subpackages:
    numkit    dense float64 math, seeded RNG, finite-difference oracle
    datagen   controllable synthetic multimodal datasets + Bayes oracle
    model     multimodal MLP family with exact analytic backward
    modulate  gradient modulation strategies and contribution diagnostics
    analyze   modality analysis (dominance profiling) and MI diagnostics
    harness   training loop, sweeps, strategy comparisons, CSV logs
"""

from .kernels import backend_name

__version__ = "0.1.0"
__all__ = ["backend_name", "__version__"]
