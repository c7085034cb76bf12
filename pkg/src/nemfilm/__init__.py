"""Q-tensor energies, reductions and solvers for thin nematic films."""

__version__ = "0.1.0"
