import itertools
import struct
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chi2

from pic_shuffle.envelope import (
    MAX_PLAINTEXT,
    CodecError,
    DecryptionError,
    Entropy,
    Envelope,
    ciphertext_size,
    decode_payload,
    decode_report,
    decrypt,
    encode_payload,
    encode_report,
    encrypt,
    frame,
    keygen,
    open_report,
    seal_report,
    shuffle,
    sign,
    unframe,
    verify,
)

finite = st.floats(allow_nan=False, allow_infinity=False)


@pytest.fixture
def entropy():
    return Entropy(7)


# ---------------------------------------------------------------- keys and crypto


def test_seeded_keygen_is_reproducible():
    a, b = keygen(Entropy(3)), keygen(Entropy(3))
    assert a == b
    assert keygen(Entropy(4)).public_key != a.public_key
    assert len(a.public_key) == 64


def test_os_entropy_keys_differ():
    assert not Entropy().deterministic
    assert keygen(Entropy()).public_key != keygen(Entropy()).public_key


def test_secret_key_hidden_from_repr(entropy):
    kp = keygen(entropy)
    assert kp.secret_key.hex() not in repr(kp)


@pytest.mark.parametrize("size", [0, 1, 53, 4096, MAX_PLAINTEXT])
def test_encrypt_round_trip(entropy, size):
    kp = keygen(entropy)
    pt = entropy.bytes(size)
    ct = encrypt(kp.public_key, pt, entropy)
    assert len(ct) == ciphertext_size(size)
    assert decrypt(kp.secret_key, ct) == pt


def test_plaintext_bound(entropy):
    kp = keygen(entropy)
    with pytest.raises(ValueError):
        encrypt(kp.public_key, bytes(MAX_PLAINTEXT + 1), entropy)


def test_wrong_key_fails_loudly(entropy):
    a, b = keygen(entropy), keygen(entropy)
    ct = encrypt(a.public_key, b"location", entropy)
    with pytest.raises(DecryptionError):
        decrypt(b.secret_key, ct)


@pytest.mark.parametrize("where", [0, 5, 40, -1])
def test_tampering_detected(entropy, where):
    kp = keygen(entropy)
    ct = bytearray(encrypt(kp.public_key, b"payload bytes", entropy))
    ct[where] ^= 0x01
    with pytest.raises(DecryptionError):
        decrypt(kp.secret_key, bytes(ct))


def test_truncated_ciphertext(entropy):
    kp = keygen(entropy)
    with pytest.raises(DecryptionError):
        decrypt(kp.secret_key, encrypt(kp.public_key, b"x", entropy)[:20])


def test_encryption_is_randomized(entropy):
    kp = keygen(entropy)
    assert encrypt(kp.public_key, b"same", entropy) != encrypt(kp.public_key, b"same", entropy)


def test_sign_verify(entropy):
    a, b = keygen(entropy), keygen(entropy)
    sig = sign(a.secret_key, b"post")
    assert verify(a.public_key, b"post", sig)
    assert not verify(a.public_key, b"posu", sig)
    assert not verify(b.public_key, b"post", sig)


@pytest.mark.parametrize("sig", [b"", b"\x00" * 63, b"\xff" * 64, b"\x00" * 65])
def test_malformed_signature_is_false(entropy, sig):
    assert verify(keygen(entropy).public_key, b"m", sig) is False


def test_malformed_public_key_is_false(entropy):
    kp = keygen(entropy)
    assert verify(b"short", b"m", sign(kp.secret_key, b"m")) is False


# ---------------------------------------------------------------- codecs


def test_report_layout_example():
    pk = bytes(range(32))
    buf = encode_report(pk, (1.0, -1.0))
    assert len(buf) == 53
    assert buf[0] == 0x01
    assert buf[1:3] == b"\x00\x20"
    assert buf[3:35] == pk
    assert buf[35:37] == b"\x00\x02"
    assert buf[37:] == struct.pack(">dd", 1.0, -1.0)


@given(st.binary(max_size=200), st.lists(finite, max_size=40))
def test_report_round_trip(pk, coords):
    got_pk, vec = decode_report(encode_report(pk, coords))
    assert got_pk == pk
    assert vec.tolist() == coords


def test_report_round_trip_fuzz_1000():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        pk = rng.bytes(int(rng.integers(0, 80)))
        vec = rng.standard_normal(int(rng.integers(0, 10))) * 10.0 ** rng.integers(-300, 300)
        got_pk, got = decode_report(encode_report(pk, vec))
        assert got_pk == pk and np.array_equal(got, vec)


def test_signed_zero_survives():
    _, vec = decode_report(encode_report(b"", [-0.0]))
    assert np.signbit(vec[0])


def test_encode_rejects_non_finite():
    with pytest.raises(ValueError):
        encode_report(b"k", [1.0, float("nan")])


@pytest.mark.parametrize("cut", [0, 1, 2, 3, 20, 35, 36, 37, 44, 52])
def test_truncated_report(cut):
    buf = encode_report(bytes(32), (1.0, -1.0))
    with pytest.raises(CodecError) as info:
        decode_report(buf[:cut])
    assert 0 <= info.value.position <= cut


def test_version_mismatch_position():
    buf = bytearray(encode_report(b"k", [0.5]))
    buf[0] = 0x02
    with pytest.raises(CodecError) as info:
        decode_report(bytes(buf))
    assert info.value.position == 0


def test_non_finite_coordinate_position():
    buf = encode_report(b"key", [1.0, 2.0, 3.0])
    bad = buf[:-8] + struct.pack(">d", float("inf"))
    with pytest.raises(CodecError) as info:
        decode_report(bad)
    assert info.value.position == len(buf) - 8


def test_trailing_bytes_rejected():
    with pytest.raises(CodecError):
        decode_report(encode_report(b"k", [1.0]) + b"\x00")


@given(st.lists(st.tuples(st.binary(max_size=70), st.lists(finite, max_size=4)), max_size=6))
def test_payload_round_trip(entries):
    out = decode_payload(encode_payload(entries))
    assert [(pk, v.tolist()) for pk, v in out] == entries


def test_payload_errors():
    buf = encode_payload([(b"a", [1.0]), (b"b", [2.0])])
    with pytest.raises(CodecError):
        decode_payload(buf[:-3])
    with pytest.raises(CodecError):
        decode_payload(buf + b"x")


@given(st.binary(max_size=300))
def test_frame_round_trip(body):
    buf = frame(body)
    assert buf[:5] == b"\x01" + struct.pack(">I", len(body))
    assert unframe(buf) == (body, len(buf))
    assert Envelope.from_bytes(Envelope(body).to_bytes()) == Envelope(body)


@given(st.binary(max_size=64))
def test_decoders_never_crash_on_garbage(buf):
    for decoder in (decode_report, decode_payload, Envelope.from_bytes):
        try:
            decoder(buf)
        except CodecError:
            pass


def test_sealed_report_round_trip(entropy):
    server, user = keygen(entropy), keygen(entropy)
    env = seal_report(server.public_key, user.public_key, [0.25, -0.75], entropy)
    pk, vec = open_report(server.secret_key, Envelope.from_bytes(env.to_bytes()))
    assert pk == user.public_key and vec.tolist() == [0.25, -0.75]


def test_envelope_length_uniform_per_dimension(entropy):
    server = keygen(entropy)
    rng = np.random.default_rng(0)
    for d in (1, 2, 6):
        sizes = {
            len(seal_report(server.public_key, keygen(entropy).public_key, rng.standard_normal(d) * 1e3, entropy).ciphertext)
            for _ in range(20)
        }
        assert len(sizes) == 1


# ---------------------------------------------------------------- shuffle


def test_shuffle_preserves_multiset(rng):
    items = [b"a", b"b", b"b", b"c", b"d"]
    for _ in range(50):
        out = shuffle(items, (), rng)
        assert Counter(out.permuted) == Counter(items)
        assert out.leakage == frozenset()


@given(st.integers(1, 30), st.integers(0, 2**32 - 1), st.data())
def test_leakage_sound_and_minimal(n, seed, data):
    items = list(range(100, 100 + n))
    corrupted = data.draw(st.sets(st.integers(0, n - 1)))
    out = shuffle(items, corrupted, np.random.default_rng(seed))
    assert {i for i, _ in out.leakage} == corrupted
    for i, k in out.leakage:
        assert out.permuted[k] == items[i]


def test_shuffle_errors(rng):
    with pytest.raises(ValueError):
        shuffle([], (), rng)
    with pytest.raises(ValueError):
        shuffle([1, 2], [2], rng)
    with pytest.raises(ValueError):
        shuffle([1, 2], [-1], rng)


def test_shuffle_uniform_n4():
    rng = np.random.default_rng(11)
    trials = 100_000
    counts = Counter(tuple(shuffle([0, 1, 2, 3], (), rng).permuted) for _ in range(trials))
    perms = list(itertools.permutations(range(4)))
    observed = np.array([counts[p] for p in perms])
    expected = trials / 24
    sigma = np.sqrt(trials * (1 / 24) * (23 / 24))
    assert np.all(np.abs(observed - expected) <= 4 * sigma)
    stat = float(((observed - expected) ** 2 / expected).sum())
    assert stat < chi2.ppf(0.999, 23)
