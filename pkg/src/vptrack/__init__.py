"""vptrack: target-less virtual point tracking of wheel-rail lateral displacement."""

__version__ = "0.1.0"
