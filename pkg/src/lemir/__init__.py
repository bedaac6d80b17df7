"""Lemmatization rules, disambiguation, and BM25 retrieval toolkit."""

from .candidates import (
    Candidate,
    CandidateLattice,
    CandidateSet,
    DictionaryGenerator,
    DO_NOTHING_RULE,
    build_dictionary_generator,
    generate_candidates,
    import_candidates,
    oracle_accuracy,
)
from .corpus_io import (
    Document,
    Sentence,
    Token,
    TokenSpan,
    load_jsonl_corpus,
    load_qrels,
    load_run,
    parse_conllu,
    tokenize,
    write_run,
)
from .disambig import (
    DisambiguationResult,
    FrequencyModel,
    HmmModel,
    ReferenceSpanScorer,
    SpanMatcherConfig,
    TokenChoice,
    freq_disambiguate,
    hmm_disambiguate,
    oracle_disambiguate,
    span_match_disambiguate,
    train_frequency,
    train_hmm,
)
from .editscript import (
    DO_NOTHING,
    EditOp,
    TransformationRule,
    apply_rule,
    extract_rule,
    format_rule,
    parse_rule,
    rule_frequency_table,
    scalar_lower,
    verbalize_rule,
)
from .errors import (
    AlignmentError,
    CorpusFormatError,
    InvalidInputError,
    LemirError,
    RuleIncompatibleError,
    RuleParseError,
)
from .ireval import (
    MetricsReport,
    ap_at_k,
    evaluate_run,
    recall_at_k,
    relevant_set,
    success_at_k,
)
from .lemeval import (
    AccuracyReport,
    SentenceStat,
    accuracy,
    bootstrap_ci,
    evaluate_corpus,
    lemmatize_text,
    score_sentences,
)
from .retrieval import (
    NormalizationPipeline,
    RetrievalIndex,
    bm25_score,
    build_index,
    identity_pipeline,
    lemmatizer_pipeline,
    load_index,
    save_index,
    search,
    stemmer_pipeline,
)
from .scorer_bridge import (
    ScoreRequest,
    ScoreResponse,
    ScorerClient,
    ScorerError,
    connect_stdio,
    connect_tcp,
)

__version__ = "0.1.0"
