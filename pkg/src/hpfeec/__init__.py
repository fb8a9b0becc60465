"""hp-adaptive finite element exterior calculus on simplicial complexes."""

__version__ = "0.1.0"
