import hashlib
import random

import pytest
from hypothesis import given, settings, strategies as st

from coopnet.identity import NULL, generate_keypair
from coopnet.ledger import (
    CERTIFICATE_SIZE,
    FIXED_POINT_ONE,
    CertificateStore,
    ContributionCertificate,
    IngestResult,
    MalformedCertificate,
    SelfCertificateError,
    create_certificate,
    decode_certificate,
    encode_certificate,
    graph_view,
    record_utility,
    select_gossip_batch,
    verify_certificate,
)


def test_record_utility_accumulates():
    assert record_utility({}, "j", 5) == {"j": 5}
    assert record_utility({"j": 5}, "j", 0) == {"j": 5}
    assert record_utility({"j": 5}, "k", 2) == {"j": 5, "k": 2}
    with pytest.raises(ValueError):
        record_utility({}, "j", -1)


def test_create_certificate_fields(keys):
    cert = create_certificate(keys[0], keys[1].peer_id, 10, 3)
    assert (cert.issuer, cert.subject, cert.weight, cert.round) == (keys[0].peer_id, keys[1].peer_id, 10, 3)
    assert verify_certificate(cert)


def test_self_certificate_rejected(keys):
    with pytest.raises(SelfCertificateError):
        create_certificate(keys[0], keys[0].peer_id, 10, 3)


def test_weight_is_cumulative(keys):
    acc = {}
    record_utility(acc, keys[1].peer_id, 10)
    first = create_certificate(keys[0], keys[1].peer_id, acc[keys[1].peer_id], 1)
    record_utility(acc, keys[1].peer_id, 15)
    second = create_certificate(keys[0], keys[1].peer_id, acc[keys[1].peer_id], 2)
    store = CertificateStore()
    store.ingest(first)
    store.ingest(second)
    assert store.get(keys[0].peer_id, keys[1].peer_id).weight == 25


def test_encoding_is_145_bytes_and_round_trips(keys):
    assert CERTIFICATE_SIZE == 1 + 32 + 32 + 8 + 8 + 64 == 145
    assert CERTIFICATE_SIZE <= 220
    cert = create_certificate(keys[2], keys[3].peer_id, 1234.5, 99)
    blob = encode_certificate(cert)
    assert len(blob) == CERTIFICATE_SIZE
    assert blob[0] == 0x01
    assert decode_certificate(blob) == cert
    assert encode_certificate(decode_certificate(blob)) == blob


def test_decode_rejects_malformed(keys):
    with pytest.raises(MalformedCertificate):
        decode_certificate(b"\x00" * 10)
    blob = bytearray(encode_certificate(create_certificate(keys[0], keys[1].peer_id, 1, 1)))
    blob[0] = 0x02
    with pytest.raises(MalformedCertificate):
        decode_certificate(bytes(blob))


def test_decode_keeps_bad_signature(keys):
    blob = bytearray(encode_certificate(create_certificate(keys[0], keys[1].peer_id, 1, 1)))
    blob[-1] ^= 0xFF
    cert = decode_certificate(bytes(blob))
    assert not verify_certificate(cert)


def test_mutated_weight_fails_verification(keys):
    cert = create_certificate(keys[0], keys[1].peer_id, 10, 3)
    forged = ContributionCertificate(cert.issuer, cert.subject, cert.weight_raw + 1, cert.round, cert.signature)
    assert not verify_certificate(forged)


def test_structural_self_certificate_fails(keys):
    cert = create_certificate(keys[0], keys[1].peer_id, 10, 3)
    forged = ContributionCertificate(cert.issuer, cert.issuer, cert.weight_raw, cert.round, cert.signature)
    assert not verify_certificate(forged)


def test_fixed_point_weights(keys):
    cert = create_certificate(keys[0], keys[1].peer_id, 0.5, 1)
    assert cert.weight_raw == FIXED_POINT_ONE // 2


def test_ingest_outcomes(keys):
    a, b = keys[0], keys[1].peer_id
    store = CertificateStore()
    assert store.ingest(create_certificate(a, b, 1, 3)) is IngestResult.INSERTED
    assert store.byte_counter == CERTIFICATE_SIZE
    assert store.ingest(create_certificate(a, b, 2, 5)) is IngestResult.REPLACED
    assert store.ingest(create_certificate(a, b, 9, 4)) is IngestResult.STALE_IGNORED
    assert store.get(a.peer_id, b).round == 5
    assert store.byte_counter == 2 * CERTIFICATE_SIZE


def test_invalid_certificate_leaves_store_unchanged(keys):
    store = CertificateStore()
    store.ingest(create_certificate(keys[0], keys[1].peer_id, 1, 1))
    before = store.dump(), store.byte_counter
    good = create_certificate(keys[0], keys[1].peer_id, 5, 9)
    bad = ContributionCertificate(good.issuer, good.subject, good.weight_raw, good.round, b"\x00" * 64)
    assert store.ingest(bad) is IngestResult.INVALID
    assert (store.dump(), store.byte_counter) == before


def test_same_round_tie_break_by_signature_hash(keys):
    a, b = keys[0], keys[1].peer_id
    c1, c2 = create_certificate(a, b, 10, 7), create_certificate(a, b, 11, 7)
    h = lambda c: hashlib.sha256(c.signature).digest()
    winner = c1 if h(c1) > h(c2) else c2
    dumps = []
    for order in ([c1, c2], [c2, c1]):
        store = CertificateStore()
        for c in order:
            store.ingest(c)
        assert store.get(a.peer_id, b) == winner
        dumps.append(store.dump())
    assert dumps[0] == dumps[1]


def test_graph_view_edges_and_zero_weight(keys):
    A, B, C = (k.peer_id for k in keys[:3])
    store = CertificateStore()
    store.ingest(create_certificate(keys[0], B, 10, 1))
    store.ingest(create_certificate(keys[1], C, 4, 1))
    g = graph_view(store, set())
    assert g.nodes == {A, B, C}
    assert g.edges == {(A, B): 10, (B, C): 4}

    store.ingest(create_certificate(keys[2], keys[3].peer_id, 0, 1))
    g = graph_view(store, {keys[4].peer_id})
    assert keys[3].peer_id in g.nodes and keys[4].peer_id in g.nodes
    assert (C, keys[3].peer_id) not in g.edges


def test_graph_view_reconstructs_topology(keys):
    ids = [k.peer_id for k in keys]
    weights = {(0, 1): 3, (0, 2): 1, (1, 3): 2, (2, 3): 5, (3, 4): 1, (4, 0): 7, (2, 5): 0.25}
    store = CertificateStore()
    for (i, j), w in weights.items():
        blob = encode_certificate(create_certificate(keys[i], ids[j], w, 1))
        store.ingest(decode_certificate(blob))
    g = graph_view(store)
    assert g.edges == {(ids[i], ids[j]): w for (i, j), w in weights.items()}
    # the bytes-keyed mirror agrees
    kg = store.key_graph()
    assert kg.edges == {(a.public_key, b.public_key): w for (a, b), w in g.edges.items()}


def test_graph_view_is_a_snapshot(keys):
    store = CertificateStore()
    store.ingest(create_certificate(keys[0], keys[1].peer_id, 1, 1))
    g = graph_view(store)
    store.ingest(create_certificate(keys[1], keys[2].peer_id, 1, 1))
    assert len(g.edges) == 1


def test_gossip_batch(keys):
    store = CertificateStore()
    for i in range(3):
        store.ingest(create_certificate(keys[i], keys[i + 1].peer_id, 1, 1))
    assert len(select_gossip_batch(store, 10, random.Random(0))) == 3
    assert select_gossip_batch(store, 0, random.Random(0)) == []
    one = select_gossip_batch(store, 2, random.Random(42))
    two = select_gossip_batch(store, 2, random.Random(42))
    assert one == two and len(set(c.pair for c in one)) == 2
    with pytest.raises(ValueError):
        select_gossip_batch(store, -1, random.Random(0))


def test_gossip_batch_is_uniform(fast_keys):
    store = CertificateStore(NULL)
    for i in range(5):
        store.ingest(create_certificate(fast_keys[i], fast_keys[i + 1].peer_id, 1, 1))
    rng = random.Random(3)
    counts = {}
    for _ in range(5000):
        (c,) = select_gossip_batch(store, 1, rng)
        counts[c.pair] = counts.get(c.pair, 0) + 1
    assert all(abs(v - 1000) < 4 * (5000 * 0.2 * 0.8) ** 0.5 for v in counts.values())


def test_dump_load_round_trip(keys):
    store = CertificateStore()
    for i in range(4):
        store.ingest(create_certificate(keys[i], keys[(i + 1) % 4].peer_id, i + 1, i))
    again = CertificateStore.load(store.dump())
    assert again.dump() == store.dump()
    with pytest.raises(MalformedCertificate):
        CertificateStore.load(store.dump()[:-3])
    with pytest.raises(MalformedCertificate):
        CertificateStore.load(store.dump() + b"\x00")


_KEYS = [generate_keypair(i, NULL) for i in range(6)]
_cert = st.builds(
    lambda i, j, w, r: create_certificate(_KEYS[i], _KEYS[(i + j) % 6].peer_id, w, r),
    st.integers(0, 5),
    st.integers(1, 5),
    st.integers(0, 50),
    st.integers(0, 4),
)


@settings(max_examples=200, deadline=None)
@given(certs=st.lists(_cert, max_size=25), data=st.data())
def test_merge_commutative_and_idempotent(certs, data):
    shuffled = data.draw(st.permutations(certs + certs[: len(certs) // 2]))
    dumps = []
    for batch in (certs, shuffled):
        store = CertificateStore(NULL)
        for c in batch:
            store.ingest(c)
        dumps.append(store.dump())
    assert dumps[0] == dumps[1]


@settings(max_examples=100, deadline=None)
@given(certs=st.lists(_cert, max_size=25))
def test_graph_weights_match_winning_certificates(certs):
    store = CertificateStore(NULL)
    for c in certs:
        store.ingest(c)
    g = graph_view(store)
    expected = {c.pair: c.weight for c in store if c.weight_raw > 0}
    assert g.edges == expected
