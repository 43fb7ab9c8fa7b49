"""Tests for the coarse surrogate feature slices."""
