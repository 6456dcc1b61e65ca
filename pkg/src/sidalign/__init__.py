"""sidalign: checkpoint-compatible semantic-ID refresh.

Rebuild item tokenizations from fresh interaction logs, align them
bijectively into a previous token space so existing retriever state stays
usable, and evaluate the update policies under strict chronological splits.
"""

from .alignment import (
    align,
    complete_mapping,
    compute_cooccurrence,
    rewrite,
    solve_greedy,
    solve_hungarian,
)
from .core import (
    CodebookSpec,
    CooccurrenceMatrix,
    InteractionEvent,
    ItemEmbeddingTable,
    SemanticId,
    SidAssignment,
    TemporalBlocks,
    TokenMapping,
    validate_assignment,
)
from .harness import EvalReport, PolicyConfig, PolicyResult, run_policy, run_rolling
from .metrics import ndcg_at_k, recall_at_k, wilcoxon_paired
from .quantizer import RqCodebooks, encode, fit, quantization_error
from .retriever import (
    NGramSidModel,
    SidTrie,
    beam_decode,
    build_trie,
    next_token_dist,
    train,
    warm_update,
)
from .simulate import drift_report, gen_benchmark, make_benchmark
from .temporal import chronological_blocks, five_core_filter, user_histories

__version__ = "0.1.0"
