"""Stationary scattering on desk-scale rigged operator models."""
