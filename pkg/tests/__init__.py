"""Test Suite for the RAW planner workbench"""
