"""Tests for ESA Helpers application"""
