"""Seeded simulation of a quantum-secured, entanglement-triggered multi-robot control stack."""

__version__ = "0.1.0"

from . import (bb84, control, errors, formation, manipulator, perturbation, qubit, rigid_body, rng,  # noqa: E402
               schrodinger, spdc)

__all__ = ["bb84", "control", "errors", "formation", "manipulator", "perturbation", "qubit", "rigid_body",
           "rng", "schrodinger", "spdc", "__version__"]
