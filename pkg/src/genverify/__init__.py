"""Verification and consensus toolkit for generative-AI outputs.

Perceptual hashing with Hamming-tolerant quorum decisions, a closed-form
and Monte-Carlo verification-probability model, deterministic decoding
checks, and a gossip-synchronized training simulator.
"""

from .consensus import (
    ConsensusDecision,
    QuorumRule,
    VerificationModel,
    VerifierReport,
    decide,
    min_verifiers,
    probability_table,
    quorum_probability,
)
from .decoding import (
    DecodeConfig,
    Strategy,
    TokenSequence,
    ToyLM,
    beam_decode,
    decode,
    greedy_decode,
    logits,
    multinomial_decode,
    sequence_consensus,
)
from .imaging import (
    DctBlock,
    GrayImage,
    Image,
    ImageParseError,
    UnsupportedFormatError,
    dct2,
    detect_format,
    idct2,
    load_image,
    resize_box,
    to_gray,
)
from .phash import (
    HashKind,
    PerceptualHash,
    ToleranceDecision,
    ahash,
    chash,
    decode_hex,
    dhash,
    encode_hex,
    hamming,
    hash_image,
    phash,
    tolerant_mode,
)
from .simnet import (
    CollisionStats,
    NodeKind,
    NodeProfile,
    RoundOutcome,
    Task,
    collision_experiment,
    generate,
    monte_carlo_type1,
    run_round,
)
from .trainsync import (
    Checkpoint,
    StochasticityConfig,
    SyncPolicy,
    TrainConfig,
    Trajectory,
    drift,
    pca_project,
    train,
    train_synced,
)

__version__ = "0.1.0"
