"""Tests for uav-vision-kit."""
