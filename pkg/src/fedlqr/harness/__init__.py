"""Experiment drivers, configuration and CSV output."""
