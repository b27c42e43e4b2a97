"""Exact and integral-based SO(3) tensor products."""
