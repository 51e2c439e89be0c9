"""Tests for the latent confidence engines, baselines, harness and CLI."""
