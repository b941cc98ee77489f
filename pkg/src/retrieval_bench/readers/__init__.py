"""Readers for transcripts and pipeline artifacts"""
