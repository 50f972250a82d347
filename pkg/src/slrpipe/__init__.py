"""Local-first literature-review pipeline.

Turns a bibliography plus plain-text documents into a ranked, screened,
annotated and exportable review corpus: bag-of-words preprocessing, tf-idf
and co-occurrence embeddings, per-question relevance ranking, screening
decisions with provenance, and markdown/graph/knowledge-graph exports.
"""

__version__ = "0.1.0"
