"""Non-intrusive POD-GPR reduced order models for uncertainty quantification."""

__version__ = "0.1.0"
