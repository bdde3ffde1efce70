import numpy as np
import pytest

from blockhermite import (
    Backend,
    BlockRequest,
    PlummerParams,
    SimConfig,
    SingularityError,
    TransferPolicy,
    eval_block,
    eval_block_sorted,
    generate_plummer,
    transfer_ledger,
)
from blockhermite.kernel import accumulation_order

from .oracles import brute_force, pair_potential_energy

# mpmath, 30 digits: (1 + 2^-16)^(-3/2) and -(1 + 2^-16)^(-1/2)
PAIR_ACC_SOFT = 0.999977112252955935423238628129
PAIR_POT_SOFT = -0.999992370692779131161999358699


def _full(pos, vel):
    return BlockRequest(np.arange(len(pos)), pos, vel)


def _pair():
    pos = np.array([[-0.5, 0, 0], [0.5, 0, 0]], dtype=float)
    return _full(pos, np.zeros((2, 3))), np.ones(2)


@pytest.mark.parametrize("backend", list(Backend))
def test_pair_unsoftened(backend):
    req, m = _pair()
    r = eval_block(req, m, SimConfig(eps=0.0), backend)
    assert np.array_equal(r.acc[0], [1.0, 0, 0])
    assert np.array_equal(r.acc[1], [-1.0, 0, 0])
    assert np.array_equal(r.jerk, np.zeros((2, 3)))
    assert r.pot[0] == -1.0


def test_pair_softened():
    req, m = _pair()
    r = eval_block(req, m, SimConfig(), Backend.REF64)
    assert r.acc[0, 0] == pytest.approx(PAIR_ACC_SOFT, rel=1e-15)
    assert r.acc[0, 1] == 0 and r.acc[0, 2] == 0
    assert r.pot[0] == pytest.approx(PAIR_POT_SOFT, rel=1e-15)
    r32 = eval_block(req, m, SimConfig(), Backend.STREAM32)
    assert r32.acc[0, 0] == pytest.approx(PAIR_ACC_SOFT, rel=1e-7)


def _random_system(rng, n):
    return rng.normal(size=(n, 3)), rng.normal(size=(n, 3)), rng.uniform(0.1, 1.0, n)


def _rel(a, b):
    """Per-particle vector error relative to the oracle magnitude."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    return np.max(np.linalg.norm(a - b, axis=-1) / np.linalg.norm(b, axis=-1))


@pytest.mark.parametrize("eps", [0.0, 1 / 256, 0.1])
def test_matches_brute_force(rng, eps):
    pos, vel, m = _random_system(rng, 64)
    acc, jerk, pot = brute_force(pos, vel, m, eps * eps)
    r = eval_block(_full(pos, vel), m, SimConfig(eps=eps), Backend.REF64)
    assert _rel(r.acc, acc) < 1e-13
    assert _rel(r.jerk, jerk) < 1e-13
    assert np.max(np.abs(r.pot - pot) / np.abs(pot)) < 1e-13


def test_partial_block_uses_all_sources(rng):
    pos, vel, m = _random_system(rng, 40)
    targets = [3, 17, 39, 0]
    acc, jerk, pot = brute_force(pos, vel, m, 1e-4, targets)
    r = eval_block(BlockRequest(targets, pos, vel), m, SimConfig(eps=1e-2), Backend.REF64)
    assert r.acc.shape == (4, 3) and r.pot.shape == (4,)
    assert _rel(r.acc, acc) < 1e-13 and _rel(r.jerk, jerk) < 1e-13


@pytest.mark.parametrize("backend", list(Backend))
def test_coincident_pair_raises(backend):
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 0, 0]])
    with pytest.raises(SingularityError) as err:
        eval_block(_full(pos, np.zeros((3, 3))), np.ones(3), SimConfig(eps=0.0), backend)
    assert set(err.value.pair) == {1, 2}


def test_coincident_pair_fine_with_softening():
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 0, 0]])
    r = eval_block(_full(pos, np.zeros((3, 3))), np.ones(3), SimConfig(), Backend.REF64)
    assert np.all(np.isfinite(r.acc))


def test_block_request_validation():
    with pytest.raises(ValueError):
        BlockRequest([0, 0], np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        BlockRequest([3], np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        BlockRequest([0], np.zeros((3, 3)), np.zeros((2, 3)))


def test_force_balance(rng):
    pos, vel, m = _random_system(rng, 200)
    r = eval_block(_full(pos, vel), m, SimConfig(), Backend.REF64)
    net = np.abs((m[:, None] * r.acc).sum(axis=0))
    scale = (m[:, None] * np.abs(r.acc)).sum(axis=0)
    assert np.all(net / scale < 1e-12)


def test_potential_symmetry(rng):
    pos, vel, m = _random_system(rng, 200)
    cfg = SimConfig()
    r = eval_block(_full(pos, vel), m, cfg, Backend.REF64)
    w = 0.5 * np.dot(m, r.pot)
    assert w == pytest.approx(pair_potential_energy(pos, m, cfg.eps2), rel=1e-12)


def test_jerk_is_time_derivative_of_acceleration(rng):
    pos, vel, m = _random_system(rng, 32)
    cfg = SimConfig(eps=0.05)
    jerk = eval_block(_full(pos, vel), m, cfg, Backend.REF64).jerk

    def acc_at(t):
        return eval_block(_full(pos + vel * t, vel), m, cfg, Backend.REF64).acc

    errs = []
    for h in (1e-3, 1e-4):
        fd = (acc_at(h) - acc_at(-h)) / (2 * h)
        errs.append(np.max(np.abs(fd - jerk)))
    # second order: a 10x smaller h gives ~100x smaller error
    assert errs[0] / errs[1] > 50
    fd = (acc_at(1e-5) - acc_at(-1e-5)) / 2e-5
    assert np.max(np.abs(fd - jerk)) / np.max(np.abs(jerk)) < 1e-7


def test_backend_agreement_plummer(plummer_4096):
    s = plummer_4096
    req = _full(s.pos, s.vel)
    cfg = SimConfig()
    ref = eval_block(req, s.mass, cfg, Backend.REF64)
    f32 = eval_block(req, s.mass, cfg, Backend.STREAM32)
    assert _rel(f32.acc, ref.acc) < 1e-5
    assert np.max(np.abs(f32.pot - ref.pot) / np.abs(ref.pot)) < 1e-5


@pytest.mark.parametrize("backend", list(Backend))
def test_deterministic(rng, backend):
    pos, vel, m = _random_system(rng, 300)
    req = BlockRequest(rng.permutation(300)[:77], pos, vel)
    a = eval_block(req, m, SimConfig(), backend)
    b = eval_block(req, m, SimConfig(), backend)
    for x, y in ((a.acc, b.acc), (a.jerk, b.jerk), (a.pot, b.pot)):
        assert np.array_equal(x, y)


def test_stream32_is_plain_float32_arithmetic(rng):
    """Bit-for-bit equal to an unfused float32 replay in source order."""
    pos, vel, m = _random_system(rng, 24)
    cfg = SimConfig(eps=0.01)
    f = np.float32
    p32, v32, m32, e2 = pos.astype(f), vel.astype(f), m.astype(f), f(cfg.eps2)
    r = eval_block(_full(pos, vel), m, cfg, Backend.STREAM32)
    for i in range(24):
        a = np.zeros(3, f)
        k = np.zeros(3, f)
        p = f(0)
        for j in range(24):
            if j == i:
                continue
            dx = p32[j] - p32[i]
            dv = v32[j] - v32[i]
            r2 = dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2] + e2
            xv = dx[0] * dv[0] + dx[1] * dv[1] + dx[2] * dv[2]
            rinv = f(1) / np.sqrt(r2)
            r3 = rinv * rinv * rinv
            r5 = (rinv * rinv) * r3
            mr3 = m32[j] * r3
            mx5 = m32[j] * (f(3) * xv * r5)
            a = a + mr3 * dx
            k = k + (mr3 * dv - mx5 * dx)
            p = p - m32[j] * rinv
        assert np.array_equal(r.acc[i], a.astype(float))
        assert np.array_equal(r.jerk[i], k.astype(float))
        assert r.pot[i] == float(p)


def test_sorted_two_particles_equals_unsorted():
    req, m = _pair()
    cfg = SimConfig(backend=Backend.STREAM32)
    a = eval_block(req, m, cfg)
    b = eval_block_sorted(req, m, cfg)
    assert np.array_equal(a.acc, b.acc) and np.array_equal(a.pot, b.pot)


def test_sorted_order_smallest_first():
    pos = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    masses = [1e6, 1.0, 1e-6]
    req = _full(pos, np.zeros((3, 3)))
    assert list(accumulation_order(req, masses, SimConfig(eps=0.0), 1)) == [2, 0]
    assert list(accumulation_order(req, masses, SimConfig(eps=0.0), 0)) == [2, 1]


def test_sorted_flag_dispatch(rng):
    pos, vel, m = _random_system(rng, 50)
    req = _full(pos, vel)
    on = SimConfig(backend=Backend.STREAM32, sorted_accumulation=True)
    assert np.array_equal(eval_block(req, m, on).acc, eval_block_sorted(req, m, on).acc)


def test_sorted_not_less_accurate(plummer_4096):
    s = plummer_4096
    req = _full(s.pos, s.vel)
    cfg = SimConfig()
    ref = eval_block(req, s.mass, cfg, Backend.REF64).acc
    plain = eval_block(req, s.mass, cfg, Backend.STREAM32).acc
    srt = eval_block_sorted(req, s.mass, cfg).acc
    assert _rel(srt, ref) <= _rel(plain, ref)


@pytest.mark.parametrize(
    "n, block, policy, expected",
    [
        (1024, 1024, TransferPolicy.ALL_PARTICLES, (57344, 28672)),
        (1024, 64, TransferPolicy.ALL_PARTICLES, (57344, 28672)),
        (1024, 64, TransferPolicy.BLOCK_ONLY, (3584, 1792)),
        (0, 0, TransferPolicy.ALL_PARTICLES, (0, 0)),
    ],
)
def test_transfer_ledger(n, block, policy, expected):
    req = BlockRequest(np.arange(block), np.zeros((n, 3)), np.zeros((n, 3)))
    assert transfer_ledger(req, policy) == expected


def test_plummer_fixture_is_plummer(plummer_4096):
    assert plummer_4096.n == 4096
    assert generate_plummer(PlummerParams(4096, seed=7)).pos[0, 0] == plummer_4096.pos[0, 0]
