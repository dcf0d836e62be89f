"""Desk-scale laboratory for tree expansions of renormalized spectral
water-wave profiles: exact interaction symbols, signed-tree and couple
combinatorics, oscillatory simplex integrals, the two-step renormalization,
molecule counting with the cutting algorithm, brute-force resonance
counting, and a truncated spectral simulator for cross validation."""

from .lattice import (
    FrequencyLattice,
    RandomDraw,
    SimConfig,
    SpectralField,
    build_lattice,
    initial_data_u,
    norm_H,
    norm_W,
    sample_gaussians,
)
from .amplitudes import GaugeRecord, eval_JT, eval_KQ, gamma1_solve
from .config import load_config
from .trees import Couple, PairedTree, enumerate_couples, enumerate_trees

__version__ = "0.1.0"
