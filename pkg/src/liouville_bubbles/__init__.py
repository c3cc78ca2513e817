"""Multi-bubble approximate solutions of Liouville systems on a flat torus."""

__version__ = "0.1.0"
