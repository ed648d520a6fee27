"""Pairing-based multi-signature core: keys, BLS signatures, aggregation."""

from .scheme import (
    DEFAULT_PARAMS,
    GROUP_ORDER,
    SCALAR_BYTES,
    SEED_BYTES,
    MultiSignature,
    ProofOfPossession,
    PublicKey,
    SecretKey,
    Signature,
    SystemParams,
    aggregate_public_keys,
    aggregate_signatures,
    combine_keys,
    default_params,
    hash_to_identity_scalar,
    keygen,
    sign,
    verify,
    verify_multisig,
    verify_pop,
)

__all__ = [
    "DEFAULT_PARAMS",
    "GROUP_ORDER",
    "SCALAR_BYTES",
    "SEED_BYTES",
    "MultiSignature",
    "ProofOfPossession",
    "PublicKey",
    "SecretKey",
    "Signature",
    "SystemParams",
    "aggregate_public_keys",
    "aggregate_signatures",
    "combine_keys",
    "default_params",
    "hash_to_identity_scalar",
    "keygen",
    "sign",
    "verify",
    "verify_multisig",
    "verify_pop",
]
