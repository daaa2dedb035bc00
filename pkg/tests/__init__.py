"""Tests for the motion-evolve package."""
