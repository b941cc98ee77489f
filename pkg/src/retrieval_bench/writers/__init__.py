"""Writers for pipeline artifacts and reports"""
