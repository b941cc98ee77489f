"""Command line jobs"""
