"""Tests for chargelearn."""
