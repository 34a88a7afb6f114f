"""Rotationally symmetric scalar-curvature geometry: spectral membership,
collars, Schwarzschild gluing, Bartnik sequences, smoothing and Ricci flow."""

__version__ = "0.1.0"
