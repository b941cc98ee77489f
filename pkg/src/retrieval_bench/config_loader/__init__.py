"""Loads and validates run configurations"""
