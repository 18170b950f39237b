"""Convergence-study harness: configs, presets, reports, plots and the CLI"""
