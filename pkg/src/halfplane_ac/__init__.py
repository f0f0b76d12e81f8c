"""Vector Allen-Cahn minimizers in the upper half plane: potentials, metrics, solvers, diagnostics."""

__version__ = "0.1.0"
