"""Smale horseshoes near a Silnikov homoclinic orbit, built and checked numerically."""
__version__ = "0.1.0"
