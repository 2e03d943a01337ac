"""Tests for sidecheck."""
