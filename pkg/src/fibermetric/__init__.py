"""Relative Ricci-flat and twisted Kahler-Einstein metrics on families of tori."""

__version__ = "0.1.0"
