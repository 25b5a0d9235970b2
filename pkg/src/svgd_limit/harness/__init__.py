"""Experiment orchestration and the ``svgd-lab`` command line."""
