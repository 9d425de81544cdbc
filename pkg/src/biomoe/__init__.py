"""Biosignal embedding pipeline: signal prep, image representations, the
two-encoder embedding model, compute budgeting, and training-schedule math."""

__version__ = "0.1.0"
