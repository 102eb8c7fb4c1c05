from .build import CorpusBuild, build_corpus, dump_manifest, split_document_instance, write_corpus
from .config import ConfigError, CorpusConfig, load_corpus_config
from .ingest import (
    NEGATIVE_RELATION,
    DatasetDescriptor,
    Domain,
    Format,
    IngestError,
    MalformedRecord,
    SchemaMismatch,
    Split,
    bio_to_spans,
    ingest,
    read_brat,
    read_conll_bio,
    read_jsonl_native,
)
from .sampling import EmptyTaskPool, SamplingPlan, filter_summarization, sample_budget, sample_with_report, word_count
from .sentences import Sentence, context_window, excerpt_context, merge_spans, split_sentences

__all__ = [
    "NEGATIVE_RELATION",
    "ConfigError",
    "CorpusBuild",
    "CorpusConfig",
    "DatasetDescriptor",
    "Domain",
    "EmptyTaskPool",
    "Format",
    "IngestError",
    "MalformedRecord",
    "SamplingPlan",
    "SchemaMismatch",
    "Sentence",
    "Split",
    "bio_to_spans",
    "build_corpus",
    "context_window",
    "dump_manifest",
    "excerpt_context",
    "filter_summarization",
    "ingest",
    "load_corpus_config",
    "merge_spans",
    "read_brat",
    "read_conll_bio",
    "read_jsonl_native",
    "sample_budget",
    "sample_with_report",
    "split_document_instance",
    "split_sentences",
    "word_count",
]
