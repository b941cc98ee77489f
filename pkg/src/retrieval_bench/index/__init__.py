"""Native vector indexes: exact flat scan, HNSW and IVF-Flat"""
