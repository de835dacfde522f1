"""Step-labeled reasoning data factory and PRM-guided search harness for
graph computational problems."""

from .graphs import (
    DensityReport, GenerationExhaustedError, Graph, GraphSpec, density,
    generate_graph, render_edgelist,
)
from .tasks import (
    AnswerType, ExecutionTrace, TaskInstance, TaskKind, answer_to_text,
    build_prompt, clustering_coefficient, max_flow, pagerank_top_node, solve,
)
from .trajectories import (
    STEP_TOKEN, LabeledStep, PerturbationPlan, StepSequence,
    decode_training_record, encode_training_record, perturb, render_trace,
    segment_steps,
)
from .evaluation import (
    Judgement, evaluate_run, exact_match, extract_boxed, judge_text,
)
from .gateway import (
    GenerationRequest, HttpChatBackend, HttpStepScorer, OracleGenerator,
    OracleScorer, ScriptedBackend, SyntheticPoolBackend, oracle_entries,
)
from .mcts import (
    AnnotatorParams, SearchTree, annotate, locate_first_error, mc_estimate,
    q_value, select, u_value,
)
from .search import (
    AggregationMethod, Candidate, FinalAnswer, beam_search, best_of_n,
    solution_score, weighted_vote,
)
from .pipeline import (
    DatasetRecord, PreferencePair, build_mc_records, build_preference_pairs,
    build_trajectory_records, emit_corpora, make_instance, make_instances,
    quality_filter,
)

__version__ = "0.1.0"
