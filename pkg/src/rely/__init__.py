"""Journal self-citation analysis with embedding-based relevance scores."""

from .corpus import CorpusConfig, Publication, normalize_issn, parse_records
from .embedding import EmbeddingVector, VectorStore, cosine, embed_publication, load_vectors
from .graph import CitationGraph, EdgeClass, JournalStats, build_graph, filter_eligible, journal_stats, self_citation_ratio
from .metrics import (
    RelyResult,
    SimilarityProfile,
    avg_similarity,
    compute_profiles,
    pearson,
    rely_journal,
    rely_publication,
)
from .report import HistogramSpec, extremes, histogram

__version__ = "0.1.0"
