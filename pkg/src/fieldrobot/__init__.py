"""Field robot path tracking with learned traction, and stand counting."""

__version__ = "0.1.0"
