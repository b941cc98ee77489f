"""Text transformations: normalizing, chunking, embedding, reranking and
question generation"""
