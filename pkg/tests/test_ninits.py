import numpy as np
import pytest

from nichingis.markov import Chain
from nichingis.models import PerformanceModel, get_model
from nichingis.ninits import (
    ChainRunRecord,
    EvalTally,
    NicheTarget,
    NinitsConfig,
    NoFailureFound,
    RepresentativeSet,
    chain_run,
    chain_stop,
    default_noise_sequence,
    hill_valley_test,
    is_admissible,
    ninits,
    sample_seed,
)
from nichingis.sampling import make_rng


def model_1d(fn):
    return PerformanceModel("f", 1, lambda X: fn(X[:, 0]))


def reps_of(model, *points):
    reps = RepresentativeSet()
    for p in points:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        reps.add(p, model.batch_fn(p[None, :])[0])
    return reps


# --- hill-valley test -------------------------------------------------------

def test_hill_valley_same_point():
    m = model_1d(lambda t: t**2)
    g = 0.7**2
    assert hill_valley_test([0.7], g, [0.7], g, m) == 1
    assert m.count == 1


def test_hill_valley_truth_table():
    sq = model_1d(lambda t: t**2)
    assert hill_valley_test([-1.0], 1.0, [1.0], 1.0, sq) == 0
    lin = model_1d(lambda t: t)
    assert hill_valley_test([0.0], 0.0, [2.0], 2.0, lin) == 1
    # equality counts as no valley
    flat = model_1d(lambda t: 0.0 * t)
    assert hill_valley_test([-3.0], 0.0, [5.0], 0.0, flat) == 1


def test_hill_valley_charges_tally():
    tally = EvalTally()
    m = model_1d(lambda t: t)
    hill_valley_test([0.0], 0.0, [1.0], 1.0, m, tally, "seed_midpoints")
    assert tally.seed_midpoints == 1 and tally.total == 1


# --- admissibility ----------------------------------------------------------

def test_admissible_empty_set():
    m = model_1d(lambda t: t**2)
    assert is_admissible(np.array([1.0]), 1.0, RepresentativeSet(), m)
    assert m.count == 0


def test_admissible_equal_to_representative():
    m = model_1d(lambda t: t**2)
    reps = reps_of(m, 2.0)
    assert not is_admissible(np.array([2.0]), 4.0, reps, m)


def test_admissible_same_hill_and_other_hill():
    lin = model_1d(lambda t: t)
    assert not is_admissible(np.array([1.5]), 1.5, reps_of(lin, 0.0), lin)
    sq = model_1d(lambda t: t**2)
    assert is_admissible(np.array([-2.0]), 4.0, reps_of(sq, 2.0), sq)


def test_admissible_short_circuits_in_insertion_order():
    sq = model_1d(lambda t: t**2)
    reps = reps_of(sq, 3.0, 5.0, -4.0)
    n0 = sq.count
    # first representative already shares the hill with x = 4
    assert not is_admissible(np.array([4.0]), 16.0, reps, sq)
    assert sq.count - n0 == 1
    # x = -3 is separated from 3 and 5, same hill as -4: three tests
    assert not is_admissible(np.array([-3.0]), 9.0, reps, sq)
    assert sq.count - n0 == 4


# --- niche target evaluation order -----------------------------------------

def test_niche_target_skips_midpoints_below_level():
    sq = model_1d(lambda t: t**2)
    tally = EvalTally()
    target = NicheTarget(sq, 4.0, reps_of(sq, 5.0), tally)
    n0 = sq.count
    inside, g = target.check(np.array([1.0]))
    assert not inside and g == 1.0
    assert sq.count - n0 == 1 and tally.chain_midpoints == 0
    inside, g = target.check(np.array([-3.0]))
    assert inside and g == 9.0
    assert tally.chain_candidates == 2 and tally.chain_midpoints == 1


# --- seeds ------------------------------------------------------------------

def test_default_noise_sequence():
    s = default_noise_sequence()
    assert s.size == 101 and s[0] == 0.0 and s[-1] == 4.0
    assert s[1] == pytest.approx(0.04, abs=1e-12)


def test_config_validation():
    assert NinitsConfig().chain_length == 10
    for bad in (dict(level_probability=0.3), dict(level_probability=0.0), dict(noise_sequence=[0.0, 0.0]),
                dict(noise_sequence=[]), dict(convergence_limit=0)):
        with pytest.raises(ValueError):
            NinitsConfig(**bad)


def test_seed_with_empty_set_is_first_plain_draw():
    m = get_model("pwl")
    tally = EvalTally()
    x, g, noise = sample_seed(RepresentativeSet(), NinitsConfig(), m, make_rng(0), tally)
    assert noise == 0.0 and m.count == 1 and tally.seeds == 1
    np.testing.assert_array_equal(x, make_rng(0).standard_normal(2))
    assert g == m.batch_fn(x[None, :])[0]


def test_seed_marginal_std_with_noise():
    m = PerformanceModel("zero", 3, lambda X: np.zeros(len(X)))
    cfg = NinitsConfig(noise_sequence=[2.0])
    rng = make_rng(1)
    X = np.array([sample_seed(RepresentativeSet(), cfg, m, rng)[0] for _ in range(20000)])
    np.testing.assert_allclose(X.std(axis=0), np.sqrt(5.0), rtol=0.03)


def test_seed_exhaustion_counts_everything():
    # concave g has a single niche, so one representative blocks every seed
    m = model_1d(lambda t: -t**2 - 1.0)
    reps = reps_of(m, 0.0)
    cfg = NinitsConfig(noise_sequence=[0.0, 0.5, 1.0])
    tally = EvalTally()
    n0 = m.count
    assert sample_seed(reps, cfg, m, make_rng(2), tally) is None
    assert tally.seeds == 3 and tally.seed_midpoints == 3
    assert m.count - n0 == 6


# --- stopping rules ---------------------------------------------------------

def _run(chain_gs, thresholds):
    run = ChainRunRecord()
    for gs in chain_gs:
        run.chains.append(Chain([np.zeros(1)] * len(gs), list(gs)))
    run.thresholds = list(thresholds)
    return run


def test_chain_stop_failure_found():
    cfg = NinitsConfig()
    assert chain_stop(_run([[-1.0, 0.0]], [0.0]), cfg)
    assert not chain_stop(_run([[-1.0, -0.5]], [-0.5]), cfg)


def test_chain_stop_convergence():
    cfg = NinitsConfig(convergence_limit=20)
    flat = [-1.0] * 21
    assert chain_stop(_run([[-1.0]] * 21, flat), cfg)
    assert not chain_stop(_run([[-1.0]] * 20, flat[:20]), cfg)
    rising = list(np.linspace(-2, -1, 21))
    assert not chain_stop(_run([[-1.0]] * 21, rising), cfg)


def test_chain_stop_length():
    cfg = NinitsConfig(length_limit=100, convergence_limit=1000)
    th = list(np.linspace(-5, -1, 101))
    assert chain_stop(_run([[-1.0]] * 101, th), cfg)
    assert not chain_stop(_run([[-1.0]] * 100, th[:100]), cfg)


def test_chain_stop_needs_a_chain():
    assert not chain_stop(ChainRunRecord(), NinitsConfig())


# --- chain runs and evaluation accounting -----------------------------------

class Recorder:
    """Model wrapper logging every evaluated point."""

    def __init__(self, fn, dim):
        self.points = []

        def batch(X):
            self.points.extend(np.array(X, dtype=float))
            return fn(X)

        self.model = PerformanceModel("rec", dim, batch)


def test_scripted_three_chain_run_accounting():
    # |x1| - 100 never fails; the length limit of 2 forces exactly three chains
    rec = Recorder(lambda X: np.abs(X[:, 0]) - 100.0, 2)
    model = rec.model
    rep = np.array([-4.0, 0.0])
    reps = RepresentativeSet()
    reps.add(rep, -96.0)
    cfg = NinitsConfig(length_limit=2, convergence_limit=1000)
    tally = EvalTally()
    seed = np.array([1.0, 0.5])
    run = chain_run(seed, -99.0, reps, model, cfg, make_rng(3), tally)
    assert len(run.chains) == 3 and run.outcome == "length-capped"
    # independent count from the log: midpoints are 0.5 * (rep + candidate)
    pts = np.array(rec.points)
    is_mid = np.zeros(len(pts), dtype=bool)
    for i in range(1, len(pts)):
        is_mid[i] = np.allclose(pts[i], 0.5 * (rep + pts[i - 1]), rtol=0, atol=1e-15)
    assert (~is_mid).sum() == 3 * 9
    assert tally.chain_candidates == 27
    assert 0 < tally.chain_midpoints == is_mid.sum()
    assert model.count == tally.total == len(pts)
    assert np.all(np.diff(run.thresholds) >= 0)


def test_chain_run_states_respect_level_and_niche():
    model = get_model("pwl")
    reps = RepresentativeSet()
    reps.add(np.array([4.2, 0.1]), model.batch_fn(np.array([[4.2, 0.1]]))[0])
    seed = np.array([0.0, 1.0])
    run = chain_run(seed, model.batch_fn(seed[None, :])[0], reps, model, NinitsConfig(), make_rng(4))
    audit = get_model("pwl")
    level = -np.inf
    for chain, b in zip(run.chains, run.thresholds):
        for k, (x, g) in enumerate(zip(chain.states, chain.g)):
            assert g >= level
            assert g == audit.batch_fn(x[None, :])[0]
            if k > 0 and not np.array_equal(x, chain.states[k - 1]):
                assert is_admissible(x, g, reps, audit)
        level = b
    assert np.all(np.diff(run.thresholds) >= 0)
    assert run.chains[0].states[0] is not None


# --- full initial sampling --------------------------------------------------

def test_ninits_halfspace():
    model = PerformanceModel("h", 2, lambda X: X[:, 0] - 3.5)
    res = ninits(model, NinitsConfig(), make_rng(5))
    assert len(res.samples) >= 1
    assert np.all(model.batch_fn(res.samples) >= 0)
    assert model.count == res.tally.total


def _niches(samples):
    return {("x1" if s[0] >= 4 else "x2") for s in samples}


def test_ninits_pwl_finds_both_niches_every_time():
    found = 0
    for seed in range(100):
        model = get_model("pwl")
        res = ninits(model, NinitsConfig(), make_rng(seed))
        assert np.all(res.g >= 0)
        assert np.all(model.batch_fn(res.samples) >= 0)
        found += _niches(res.samples) == {"x1", "x2"}
    assert found == 100


def test_ninits_samples_are_representatives():
    res = ninits(get_model("meatball"), NinitsConfig(), make_rng(6))
    reps = [tuple(p) for p in res.representatives.points]
    for s in res.samples:
        assert tuple(s) in reps
    out = res.to_dict()
    assert len(out["runs"]) == len(res.runs)
    assert {r.outcome for r in res.runs} <= {"failure-found", "converged", "length-capped"}


def test_ninits_last_generated_failure_sample():
    res = ninits(get_model("pwl"), NinitsConfig(), make_rng(7))
    k = 0
    for run in res.runs:
        if run.outcome == "failure-found":
            last = run.chains[-1]
            i_star = max(i for i, v in enumerate(last.g) if v >= 0)
            np.testing.assert_array_equal(res.samples[k], last.states[i_star])
            k += 1
    assert k == len(res.samples)


def test_ninits_max_initial_samples_zero():
    res = ninits(get_model("pwl"), NinitsConfig(max_initial_samples=0), make_rng(8))
    assert len(res.samples) <= 1


def test_ninits_cap_allows_one_extra_sample():
    # periodic bumps along x1 give many separate niches
    model = PerformanceModel("bumps", 2, lambda X: np.cos(2.0 * X[:, 0]) - 0.5 + 0.0 * X[:, 1])
    res = ninits(model, NinitsConfig(max_initial_samples=2), make_rng(9))
    assert len(res.samples) <= 3


def test_ninits_restart_cap():
    model = PerformanceModel("never", 2, lambda X: -np.sum(X**2, axis=1) - 1.0)
    cfg = NinitsConfig(noise_sequence=[0.0, 1.0], restart_cap=2, length_limit=3, convergence_limit=2)
    with pytest.raises(NoFailureFound):
        ninits(model, cfg, make_rng(10))


def test_ninits_deterministic():
    a = ninits(get_model("meatball"), NinitsConfig(), make_rng(11))
    b = ninits(get_model("meatball"), NinitsConfig(), make_rng(11))
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.tally == b.tally
