"""Model checking and attack synthesis for the SCTP association
establishment and teardown routines.

The package models both endpoints as the nine-state handshake machine over
an abstract tag alphabet, composes them with users and a lossless size-1
channel, verifies ten temporal properties with a Büchi-based checker, and
synthesizes communication attacks under four attacker models.
"""

from .attackers import AttackerModelKind, Phase, Vocabulary, build_daisy, replay_step, vocab_for
from .check import Lasso, Verdict, check, eval_on_lasso
from .ltl import Formula, ParseError, builtin_properties, parse_formula, phi4_strict
from .messages import ChunkType, Message, TagClass, validate_message
from .peer import (
    PeerConfig,
    PeerProcess,
    PeerStateName,
    classify_ootb,
    handle_unexpected,
    peer_step,
    successors_of_peer,
)
from .synthesis import (
    Attack,
    SynthesisConfig,
    SynthesisResult,
    precondition_property,
    shrink_attack,
    synthesize,
    validate_attack,
)
from .system import (
    ScenarioConfig,
    SystemState,
    TransitionLabel,
    atomic_valuation,
    explore,
    initial_state,
    successors,
)

__all__ = [
    "AttackerModelKind",
    "Attack",
    "ChunkType",
    "Formula",
    "Lasso",
    "Message",
    "ParseError",
    "PeerConfig",
    "PeerProcess",
    "PeerStateName",
    "Phase",
    "ScenarioConfig",
    "SynthesisConfig",
    "SynthesisResult",
    "SystemState",
    "TagClass",
    "TransitionLabel",
    "Verdict",
    "Vocabulary",
    "atomic_valuation",
    "build_daisy",
    "builtin_properties",
    "check",
    "classify_ootb",
    "eval_on_lasso",
    "explore",
    "handle_unexpected",
    "initial_state",
    "parse_formula",
    "peer_step",
    "phi4_strict",
    "precondition_property",
    "replay_step",
    "shrink_attack",
    "successors",
    "successors_of_peer",
    "synthesize",
    "validate_attack",
    "vocab_for",
]

__version__ = "0.1.0"
