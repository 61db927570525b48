from .checkpoint import load_checkpoint, save_checkpoint
from .data import Batch, Example, collate, layout_for, make_example, pad_inputs, step_masks
from .decoding import DecodeLengthError, greedy_decode, greedy_decode_batch, step_probabilities
from .gradcheck import GradCheckResult, gradient_check
from .masking import (
    NEG,
    MaskDesyncError,
    admissible_vector,
    apply_feasibility_mask,
    masked_cross_entropy,
    masked_softmax,
)
from .model import (
    DTYPE,
    InputSchema,
    LSTMSeq2Seq,
    ModelConfig,
    Seq2Seq,
    TransformerSeq2Seq,
    Vocabulary,
    build_model,
)
from .training import OPTIMIZER_NAME, TrainConfig, TrainingDiverged, TrainResult, batch_loss, evaluate_loss, fit, make_optimizer, train_step
