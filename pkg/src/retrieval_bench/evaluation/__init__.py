"""Retrieval metrics and run evaluation"""
