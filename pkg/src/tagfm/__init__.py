"""Graph foundation modeling over text-attributed graphs.

Pipeline: typed graph ingestion, unified text-embedding space, random-walk
context sampling, harmonic path encoding, a context-adaptive graph
transformer with mixture-of-experts routing, and a multi-job trainer for
node classification and link prediction.
"""

__version__ = "0.1.0"
