"""caprnn: inject vs merge LSTM caption generators, trained and evaluated
from scratch, with a FastAPI service and a thin CLI client on top."""

from .captioner import (
    ARCHITECTURES,
    END_INDEX,
    ModelConfig,
    DEFAULT_LAYER_SIZES,
    DEFAULT_THRESHOLDS,
    START_INDEX,
    UNKNOWN_INDEX,
    build_model,
    caption_loss,
    caption_loss_batch,
    count_params,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .data import (
    DatasetSplit,
    Minibatch,
    Vocabulary,
    build_vocab,
    encode_caption,
    load_dataset,
    make_batches,
    normalize_feature,
    synth_corpus,
)
from .decoding import Hypothesis, beam_search, beam_search_hypotheses, greedy_decode
from .errors import (
    CaprnnError,
    ConfigError,
    DimensionError,
    DivergenceError,
    FormatError,
    IntegrityError,
    NumericError,
    UsageError,
    VocabularyError,
)
from .metrics import EvalCorpus, MetricReport, bleu, cider, evaluate, rouge_l, vocab_usage
from .nn import (
    GradCheckReport,
    LstmCellParams,
    LstmState,
    Parameter,
    adam_step,
    dense_forward,
    embedding_lookup,
    grad_check,
    lstm_step,
    softmax_xent,
    xavier_init,
    zero_state,
)
from .training import PreparedData, RunSpec, TrainState, run_experiment, train, validate

__version__ = "0.1.0"
