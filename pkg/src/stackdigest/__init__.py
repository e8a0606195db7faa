"""stackdigest: mine Stack Exchange dumps for topics and Q/A summaries."""

__version__ = "0.1.0"

from .embed import BuiltinEmbedder, EmbeddingCache, HttpEmbedder, cosine_similarity, embed_texts
from .ingest import PostStore, RawPost, filter_posts, load_store, parse_dump, save_store
from .pipeline import PipelineConfig, cmd_ingest, cmd_run, cmd_summarize, cmd_topics
from .preprocess import CleanDocument, preprocess_post
from .summarize import extractive_summarize, filter_answers
from .topics import Topic, build_topics, compute_ctfidf, dbscan, fit_reduction, kmeans

__all__ = [
    "BuiltinEmbedder",
    "CleanDocument",
    "EmbeddingCache",
    "HttpEmbedder",
    "PipelineConfig",
    "PostStore",
    "RawPost",
    "Topic",
    "build_topics",
    "cmd_ingest",
    "cmd_run",
    "cmd_summarize",
    "cmd_topics",
    "compute_ctfidf",
    "cosine_similarity",
    "dbscan",
    "embed_texts",
    "extractive_summarize",
    "filter_answers",
    "filter_posts",
    "fit_reduction",
    "kmeans",
    "load_store",
    "parse_dump",
    "preprocess_post",
    "save_store",
]
