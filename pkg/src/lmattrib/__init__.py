"""Toolkit for attributing black-box fine-tuned text generators to base models.

Interrogates every model with a shared query corpus over HTTP and pairs each
fine-tuned model with the base model whose responses are most similar, using
translation metrics (BLEU/TER), a TF-IDF vector space, a multiclass n-gram
classifier, or per-base binary classifiers with abstention.
"""

__version__ = "0.1.0"
