"""
Command-line entry point (`python -m cli`) and experiment configuration.
"""
