"""Experiment orchestration: config, CLI commands, manifest, reports."""
