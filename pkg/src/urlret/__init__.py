"""Desk-scale two-stage generative retrieval over tokenized URL identifiers.

A query is first mapped to a passage text by one seq2seq model, then the
passage is mapped to a URL by a second model. Includes a byte-level BPE
tokenizer, a BM25 baseline, evaluation metrics, and scaling/ablation
harnesses.
"""

__version__ = "0.1.0"
