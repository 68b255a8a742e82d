"""refsmith: monotonic pseudo-reference tooling for simultaneous translation.

The package decodes full-sentence translation models under wait-k
schedules to produce pseudo-references with fewer long-distance
reorderings, filters them by sentence BLEU, and measures corpus
anticipation and hypothesis hallucination through word alignments.
"""

from .aligner import (
    EmConfig,
    Model2Params,
    NULL_TOKEN,
    TranslationTable,
    load_model2_params,
    load_table,
    model2_viterbi_align,
    save_table,
    train_model1,
    train_model2_diag,
    viterbi_align,
)
from .corpus import (
    Alignment,
    CorpusFormatError,
    ScoredSentence,
    Sentence,
    SentencePair,
    Token,
    load_alignment_file,
    load_parallel_corpus,
    load_score_table,
    parse_alignment_line,
    render_alignment_line,
    write_alignment_file,
    write_parallel_corpus,
    write_score_table,
)
from .decoder import (
    Candidate,
    DecodeError,
    END_TOKEN,
    Hypothesis,
    LexicalModel,
    ModelQuery,
    ModelResponse,
    NoisyLexicalModel,
    WaitKSchedule,
    beam_waitk_decode,
    beam_waitk_search,
    greedy_waitk_decode,
    schedule_g,
    validate_response,
)
from .metrics import (
    AnticipationReport,
    BleuStats,
    HallucinationReport,
    anticipation_rate,
    anticipation_report,
    bleu_histogram,
    corpus_bleu,
    hallucination_rate,
    hallucination_report,
    k_anticipated,
    sentence_bleu,
)
from .pipeline import (
    FilterPolicy,
    GenerationRun,
    PipelineError,
    augment_corpus,
    filter_top,
    generate_pseudo_refs,
)
from .wire import (
    ExternalModelClient,
    MalformedRecord,
    ModelProtocolError,
    ModelTimeout,
    ResponseViolation,
)

__version__ = "0.1.0"
