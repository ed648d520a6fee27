"""Registration protocol tests: thresholds, tampering, replay, determinism.

The combined public key is cross-checked against an independent affine
group-law oracle (tests/oracles.py), never against the production curve
code alone.
"""

import dataclasses
from itertools import combinations

import pytest

import oracles
from cpschain import mscrypto as ms
from cpschain import registry as reg
from cpschain.errors import (
    AttestationInvalid,
    AuthFailure,
    InsufficientQuorumTargets,
    ReplayRejected,
    ShareMismatch,
    ThresholdUnmet,
    WireError,
)
from cpschain.mscrypto import bls12381 as curve

SEED_CONSORTIUM = b"\x41" * 32
SEED_DEVICE = b"\x42" * 32
DEVICE_ID = b"press-shop/robot-07"


def _g2_aff_int(pt):
    aff = curve.g2_to_affine(pt)
    if aff is None:
        return None
    return (
        (int(aff[0][0]), int(aff[0][1])),
        (int(aff[1][0]), int(aff[1][1])),
    )


@pytest.fixture(scope="module")
def consortium(params):
    return reg.make_consortium(params, 4, SEED_CONSORTIUM)


@pytest.fixture(scope="module")
def registered(params, consortium):
    return reg.register_device(params, consortium, DEVICE_ID, SEED_DEVICE, issued_at=11)


def test_default_threshold_is_two_thirds():
    assert [reg.default_threshold(n) for n in (1, 2, 3, 4, 5, 6, 9)] == [1, 2, 2, 3, 4, 4, 6]


def test_full_registration_verifies(params, consortium, registered):
    roster = consortium[0].roster
    t = consortium[0].threshold
    assert reg.verify_credential(registered.credential, roster, t)
    sig = ms.sign(registered.sk_full, b"telemetry sample", params)
    assert ms.verify(registered.credential.pk_full, b"telemetry sample", sig, params)
    assert registered.credential.issued_at == 11


def test_pk_full_is_pkx_plus_share_sum_by_oracle(params, consortium, registered):
    """pk_full == pk_x + sum(pk_share), recomputed with the affine oracle."""
    session = reg.device_begin(params, DEVICE_ID, SEED_DEVICE)
    acc = _g2_aff_int(session.pk_x.point)
    for share in registered.credential.bundle.shares:
        acc = oracles.g2aff_add(acc, _g2_aff_int(share.pk_share.point))
    assert acc == _g2_aff_int(registered.credential.pk_full.point)
    # and pk_PS alone matches the oracle sum of the shares
    ps = None
    for share in registered.credential.bundle.shares:
        ps = oracles.g2aff_add(ps, _g2_aff_int(share.pk_share.point))
    assert ps == _g2_aff_int(registered.credential.bundle.pk_ps.point)


def test_threshold_subsets_exhaustive_n3(params):
    """Every >=t subset registers; every (t-1)-subset fails. n=3, t=2."""
    peers = reg.make_consortium(params, 3, b"\x51" * 32)
    t = peers[0].threshold
    assert t == 2
    roster = peers[0].roster
    run = 0
    for size in range(t, 4):
        for subset in combinations(range(3), size):
            run += 1
            res = reg.register_device(
                params, peers, b"dev-n3", b"\x52" * 31 + bytes([run]), targets=list(subset)
            )
            assert reg.verify_credential(res.credential, roster, t)
    for subset in combinations(range(3), t - 1):
        run += 1
        seed = b"\x53" * 31 + bytes([run])
        session = reg.device_begin(params, b"dev-n3-low", seed, threshold=t)
        with pytest.raises(InsufficientQuorumTargets):
            reg.build_request(session, [peers[i].pk for i in subset])
        # An adversarial assembler that lowers t still cannot pass verification.
        session.threshold = len(subset)
        request = reg.build_request(session, [peers[i].pk for i in subset])
        shares = [peers[i].issue_share(request) for i in subset]
        bundle = reg.assemble_bundle(shares, peers, len(subset))
        cred = reg.device_finalize(session, bundle, roster)
        assert not reg.verify_credential(cred, roster, t)


def test_insufficient_targets(params, consortium):
    session = reg.device_begin(params, b"dev-few", b"\x54" * 32, threshold=3)
    with pytest.raises(InsufficientQuorumTargets):
        reg.build_request(session, [consortium[0].pk, consortium[1].pk])


def test_replay_rejected(params, consortium):
    session = reg.device_begin(params, b"dev-replay", b"\x55" * 32, threshold=3)
    request = reg.build_request(session, [p.pk for p in consortium])
    consortium[2].issue_share(request)
    with pytest.raises(ReplayRejected):
        consortium[2].issue_share(request)


def test_tampered_ciphertext_auth_failure(params, consortium):
    session = reg.device_begin(params, b"dev-tamper", b"\x56" * 32, threshold=3)
    request = reg.build_request(session, [p.pk for p in consortium])
    pk_bytes, ct = request.encrypted_payloads[0]
    bad_ct = ct[:-1] + bytes([ct[-1] ^ 0x01])
    bad_request = dataclasses.replace(
        request, encrypted_payloads=((pk_bytes, bad_ct),) + request.encrypted_payloads[1:]
    )
    with pytest.raises(AuthFailure):
        consortium[0].issue_share(bad_request)


def test_request_not_targeting_peer(params, consortium):
    session = reg.device_begin(params, b"dev-subset", b"\x57" * 32, threshold=3)
    request = reg.build_request(session, [p.pk for p in consortium[:3]])
    with pytest.raises(AuthFailure):
        consortium[3].issue_share(request)


def test_corrupted_share_is_excluded(params, consortium):
    """A share with a forged pk_share fails its signature and is dropped."""
    session = reg.device_begin(params, b"dev-excl", b"\x58" * 32, threshold=3)
    request = reg.build_request(session, [p.pk for p in consortium])
    shares = [p.issue_share(request) for p in consortium]
    wrong_point = ms.PublicKey(curve.g2_normalize(curve.g2_mul(params.g2, 12345)))
    shares[1] = dataclasses.replace(shares[1], pk_share=wrong_point)
    bundle = reg.assemble_bundle(shares, consortium, consortium[0].threshold)
    assert bundle.bitmap == (True, False, True, True)
    cred = reg.device_finalize(session, bundle, consortium[0].roster)
    assert reg.verify_credential(cred, consortium[0].roster, consortium[0].threshold)
    # if exclusions drop the count below t the assembly fails loudly
    shares2 = [dataclasses.replace(s, pk_share=wrong_point) for s in shares]
    with pytest.raises(ThresholdUnmet) as exc:
        reg.assemble_bundle(shares2, consortium, consortium[0].threshold)
    assert exc.value.count == 0


def test_swapped_attestation_rejected(params, consortium):
    """Cosignatures from a different device's bundle must not transplant."""
    res_a = reg.register_device(params, consortium, b"dev-swap-a", b"\x59" * 32)
    session = reg.device_begin(
        params, b"dev-swap-b", b"\x5a" * 32, threshold=consortium[0].threshold
    )
    request = reg.build_request(session, [p.pk for p in consortium])
    shares = [p.issue_share(request) for p in consortium]
    bundle = reg.assemble_bundle(shares, consortium, consortium[0].threshold)
    forged = dataclasses.replace(bundle, attestation=res_a.credential.bundle.attestation)
    with pytest.raises(AttestationInvalid):
        reg.device_finalize(session, forged, consortium[0].roster)
    cred_b = reg.device_finalize(session, bundle, consortium[0].roster)
    forged_cred = dataclasses.replace(
        cred_b, bundle=dataclasses.replace(
            cred_b.bundle, attestation=res_a.credential.bundle.attestation
        )
    )
    assert not reg.verify_credential(forged_cred, consortium[0].roster, consortium[0].threshold)


def test_tampered_encrypted_share_mismatch(params, consortium):
    session = reg.device_begin(params, b"dev-encshare", b"\x5b" * 32, threshold=3)
    request = reg.build_request(session, [p.pk for p in consortium])
    shares = [p.issue_share(request) for p in consortium]
    bad = dataclasses.replace(
        shares[0], d_i=shares[0].d_i[:-1] + bytes([shares[0].d_i[-1] ^ 0x80])
    )
    bundle = reg.assemble_bundle([bad] + shares[1:], consortium, consortium[0].threshold)
    with pytest.raises(ShareMismatch):
        reg.device_finalize(session, bundle, consortium[0].roster)


def test_tampered_pk_ps_rejected(params, consortium):
    session = reg.device_begin(params, b"dev-ps", b"\x5c" * 32, threshold=3)
    request = reg.build_request(session, [p.pk for p in consortium])
    shares = [p.issue_share(request) for p in consortium]
    bundle = reg.assemble_bundle(shares, consortium, consortium[0].threshold)
    bumped = ms.PublicKey(curve.g2_normalize(curve.g2_add(bundle.pk_ps.point, params.g2)))
    with pytest.raises(AttestationInvalid):
        reg.device_finalize(
            session, dataclasses.replace(bundle, pk_ps=bumped), consortium[0].roster
        )


def test_perturbed_pk_full_fails_verification(params, consortium, registered):
    bumped = ms.PublicKey(
        curve.g2_normalize(curve.g2_add(registered.credential.pk_full.point, params.g2))
    )
    bad = dataclasses.replace(registered.credential, pk_full=bumped)
    assert not reg.verify_credential(bad, consortium[0].roster, consortium[0].threshold)


def test_verify_credential_threshold_boundary(consortium, registered):
    roster = consortium[0].roster
    popcount = sum(registered.credential.bundle.bitmap)
    assert reg.verify_credential(registered.credential, roster, popcount)
    assert not reg.verify_credential(registered.credential, roster, popcount + 1)


def test_same_device_same_peers_same_pk_ps(params, consortium, registered):
    """Partial secrets are deterministic per identity: re-registration is idempotent."""
    res2 = reg.register_device(params, consortium, DEVICE_ID, b"\x77" * 32)
    assert (
        res2.credential.bundle.pk_ps.to_bytes()
        == registered.credential.bundle.pk_ps.to_bytes()
    )
    # but a different device gets different partial secrets
    res3 = reg.register_device(params, consortium, b"other-device", b"\x77" * 32)
    assert (
        res3.credential.bundle.pk_ps.to_bytes()
        != registered.credential.bundle.pk_ps.to_bytes()
    )


def test_transcript_bit_reproducible(params, registered):
    peers = reg.make_consortium(params, 4, SEED_CONSORTIUM)
    res2 = reg.register_device(params, peers, DEVICE_ID, SEED_DEVICE, issued_at=11)
    assert res2.transcript == registered.transcript
    assert res2.credential.to_bytes() == registered.credential.to_bytes()
    res3 = reg.register_device(params, peers, DEVICE_ID, b"\x43" * 32, issued_at=11)
    assert res3.transcript != registered.transcript


def test_transcript_is_hex_lines(registered):
    for line in registered.transcript:
        label, payload = line.split(" ", 1)
        assert label in {"request", "share", "bundle", "credential"}
        bytes.fromhex(payload)  # raises if not hex


def test_serialization_round_trips(params, consortium, registered):
    session = reg.device_begin(params, b"dev-ser", b"\x5d" * 32, threshold=3)
    request = reg.build_request(session, [p.pk for p in consortium])
    assert reg.RegistrationRequest.from_bytes(request.to_bytes()).to_bytes() == request.to_bytes()
    share = consortium[0].issue_share(request)
    assert reg.PartialSecretShare.from_bytes(share.to_bytes()).to_bytes() == share.to_bytes()
    bundle = registered.credential.bundle
    assert reg.PartialSecretBundle.from_bytes(bundle.to_bytes()).to_bytes() == bundle.to_bytes()
    cred = registered.credential
    parsed = reg.DeviceCredential.from_bytes(cred.to_bytes())
    assert parsed.to_bytes() == cred.to_bytes()
    with pytest.raises(WireError):
        reg.DeviceCredential.from_bytes(cred.to_bytes() + b"\x00")
    with pytest.raises(WireError):
        reg.DeviceCredential.from_bytes(cred.to_bytes()[:-1])


def test_credential_contains_only_protocol_types(registered):
    """Structural check: the credential is exactly the protocol types, no
    certificate-like object hiding anywhere (from_bytes consumes every byte)."""
    cred = reg.DeviceCredential.from_bytes(registered.credential.to_bytes())
    assert isinstance(cred.pk_full, ms.PublicKey)
    assert isinstance(cred.bundle, reg.PartialSecretBundle)
    assert isinstance(cred.bundle.attestation, ms.MultiSignature)
    for share in cred.bundle.shares:
        assert isinstance(share, reg.PartialSecretShare)
        assert isinstance(share.pk_share, ms.PublicKey)
        assert isinstance(share.share_sig, ms.Signature)


def test_device_begin_validates_device_id(params):
    with pytest.raises(ValueError):
        reg.device_begin(params, b"", b"\x00" * 32)
    with pytest.raises(ValueError):
        reg.device_begin(params, b"x" * 257, b"\x00" * 32)


def test_cosign_unknown_device_refused(consortium):
    with pytest.raises(AuthFailure):
        consortium[0].cosign_bundle(b"never-registered", b"\x00" * 96)
