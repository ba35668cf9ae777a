"""harmolib: jointly infer derivations of chord progressions and a shared
library of reusable harmonic patterns, by CYK parsing into an e-graph,
anti-unification, and minimum-description-length library selection."""

__version__ = "0.1.0"
