from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from hybagg.codec import ScaleParams, decode, encode
from hybagg.mkckks import (
    aggregate,
    crs_generate,
    encrypt,
    encryption_noise_bound,
    he_keygen,
    noise_budget_check,
    partial_share,
    reference_decrypt,
    verify_keypair,
)
from hybagg.ring import ctx_new, sub, to_signed
from hybagg.sampling import NoiseSpec, Prg, seed_from_int

CTX = ctx_new(4096, 100)
NOISE = NoiseSpec()
DELTA = 2**40
CRS = crs_generate(CTX, seed_from_int(1))


def keypair(i: int):
    return he_keygen(CRS, NOISE, Prg(seed_from_int(100 + i)))


def max_abs(e) -> int:
    return max(abs(int(v)) for v in to_signed(e))


def test_crs_determinism_and_uniformity():
    assert crs_generate(CTX, seed_from_int(1)).a == CRS.a
    assert crs_generate(CTX, seed_from_int(2)).a != CRS.a
    for r, q in enumerate(CTX.moduli):
        counts = np.bincount((CRS.a.residues[r].astype(np.float64) * 16 / q).astype(np.int64), minlength=16)
        expected = CTX.n / 16
        assert ((counts - expected) ** 2 / expected).sum() < 37.7


def test_keygen_identity_and_determinism():
    kp = keypair(0)
    assert verify_keypair(kp, CRS, NOISE)
    assert max_abs(kp.b + kp.s * CRS.a) <= 6 * 3.2
    again = keypair(0)
    assert again.s == kp.s and again.b == kp.b


def test_public_key_looks_uniform():
    b = keypair(1).b
    q = CTX.moduli[0]
    mean = float(np.mean(b.residues[0].astype(np.float64)))
    assert abs(mean - (q - 1) / 2) < 4 * (q / np.sqrt(12)) / np.sqrt(CTX.n)


def test_encrypt_reference_decrypt():
    kp = keypair(2)
    sp = ScaleParams(delta=DELTA, d=CTX.n)
    x = np.random.default_rng(0).uniform(-1, 1, CTX.n)
    m = encode(x, sp, CTX)
    ct = encrypt((kp.b, CRS.a), m, NOISE, Prg(seed_from_int(3)))
    noise = sub(reference_decrypt(ct, kp.s), m)
    bound = encryption_noise_bound(CTX.n, NOISE)
    assert max_abs(noise) <= bound
    y = decode(reference_decrypt(ct, kp.s), sp)
    assert np.max(np.abs(y - x)) <= (bound + 1) / DELTA


def test_encrypt_zero_and_freshness():
    kp = keypair(3)
    sp = ScaleParams(delta=DELTA, d=8)
    z = encode(np.zeros(8), sp, CTX)
    rng = Prg(seed_from_int(4))
    ct1 = encrypt((kp.b, CRS.a), z, NOISE, rng)
    ct2 = encrypt((kp.b, CRS.a), z, NOISE, rng)
    assert ct1.c0 != ct2.c0
    assert np.max(np.abs(decode(reference_decrypt(ct1, kp.s), sp))) <= encryption_noise_bound(CTX.n, NOISE) / DELTA


def test_partial_share_roundtrip_and_freshness():
    kp = keypair(4)
    sp = ScaleParams(delta=DELTA, d=100)
    x = np.linspace(-1, 1, 100)
    rng = Prg(seed_from_int(5))
    ct = encrypt((kp.b, CRS.a), encode(x, sp, CTX), NOISE, rng)
    mu = partial_share(ct, kp, NOISE, rng)
    tol = (6 * NOISE.sigma_smudge + encryption_noise_bound(CTX.n, NOISE) + 1) / DELTA
    assert np.max(np.abs(decode(ct.c0 + mu.mu, sp) - x)) <= tol
    assert partial_share(ct, kp, NOISE, rng).mu != mu.mu


def test_partial_share_without_smudging_is_the_key_term():
    kp = keypair(5)
    ct = encrypt((kp.b, CRS.a), CTX.zero(), NOISE, Prg(seed_from_int(6)))
    no_smudge = SimpleNamespace(sigma_smudge=0.0)
    assert partial_share(ct, kp, no_smudge, Prg(seed_from_int(7))).mu == ct.c1 * kp.s


def three_client_case():
    sp = ScaleParams(delta=DELTA, d=2, max_clients=3)
    msgs = [[1, 2], [10, 20], [100, 200]]
    c0s, shares = [], []
    for i, x in enumerate(msgs):
        kp = keypair(10 + i)
        rng = Prg(seed_from_int(20 + i))
        ct = encrypt((kp.b, CRS.a), encode(x, sp, CTX), NOISE, rng)
        c0s.append(ct.c0)
        shares.append(partial_share(ct, kp, NOISE, rng))
    return sp, c0s, shares


def test_aggregate_three_clients():
    sp, c0s, shares = three_client_case()
    out = decode(aggregate(c0s, shares), sp)
    assert np.max(np.abs(out - [111, 222])) <= 1e-6
    perm = [2, 0, 1]
    assert aggregate([c0s[i] for i in perm], [shares[i] for i in perm]) == aggregate(c0s, shares)


def test_aggregate_single_client():
    sp, c0s, shares = three_client_case()
    assert np.max(np.abs(decode(aggregate(c0s[:1], shares[:1]), sp) - [1, 2])) <= 1e-6


def test_aggregate_input_errors():
    with pytest.raises(ValueError):
        aggregate([], [])
    with pytest.raises(ValueError):
        aggregate([CTX.zero()], [])


def budget_params(delta_bits: int, smudge_bits: float = 20, n: int = 8192, logq: int = 100):
    return SimpleNamespace(n=n, Q=2**logq, delta=2**delta_bits, noise=NoiseSpec.with_smudge_bits(smudge_bits))


def test_noise_budget_examples():
    assert noise_budget_check(budget_params(40), 100).passed
    assert not noise_budget_check(budget_params(8), 10**6).passed
    totals = [noise_budget_check(budget_params(40), c).b_total for c in (1, 2, 10, 100, 1000)]
    assert totals == sorted(totals)


def test_noise_budget_capacity_condition():
    # Noise fits, but N * delta * max|x| overflows Q/2.
    rep = noise_budget_check(budget_params(40, smudge_bits=10, logq=60), 2**20, max_abs_input=1.0)
    assert rep.noise_ok
    assert not rep.capacity_ok
    assert not rep.passed


def test_empirical_noise_below_bound():
    n_clients = 4
    bound = noise_budget_check(SimpleNamespace(n=CTX.n, Q=CTX.Q, delta=DELTA, noise=NOISE), n_clients).b_total
    c0s, shares, ms = [], [], []
    for i in range(n_clients):
        kp = keypair(30 + i)
        rng = Prg(seed_from_int(40 + i))
        m = CTX.from_signed(np.arange(CTX.n, dtype=np.int64) * (i + 1))
        ct = encrypt((kp.b, CRS.a), m, NOISE, rng)
        c0s.append(ct.c0)
        shares.append(partial_share(ct, kp, NOISE, rng))
        ms.append(m)
    noise = aggregate(c0s, shares)
    for m in ms:
        noise = noise - m
    assert max_abs(noise) <= bound
