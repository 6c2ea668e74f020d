"""Lattice Jackiw-Rebbi model: lambda-phi^4 solitons with staggered fermions."""

__version__ = "0.1.0"
