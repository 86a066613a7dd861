"""Deterministic, seedable BB84 quantum key distribution simulator."""

from .adversary import Eve, eve_knowledge
from .amplification import AmplificationParams, KeyExhausted, amplify, derive_permutation
from .channel import ClassicalChannel, Photon, PhotonConsumedError, QuantumChannel, TransmissionError
from .keys import KeyMaterial, Stage
from .protocol import (SessionConfig, SessionOutcome, emitter_prepare, estimate_qber, receiver_measure,
                       run_session, sample_check_bits, sift)
from .quantum import Basis, Polarization, decode, encode, measure, uncertainty_product
from .reconciliation import LeakageLedger, ReconciliationParams, locate_error, parity, reconcile
from .rng import RandomSource
from .vernam import BitString, PadState, brute_force_estimate, otp_decrypt, otp_encrypt
from .wire import ClassicalMessage, Tag, decode_wire, encode_wire

__version__ = "0.1.0"
