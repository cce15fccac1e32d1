"""Geographic-fairness simulator for spectrum sharing over LEO constellations."""

__version__ = "0.1.0"
