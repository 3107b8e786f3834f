import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudmanet.discovery import ImpossibleSequence, ObservationSequence, emission_matrix, viterbi, viterbi_decode
from cloudmanet.geometry import CellGrid, CellIndex, Position, TransitionMatrix, build_transition_matrix, neighbors

from oracles import brute_force_viterbi, random_matrix, sample_observations


def check_against_oracle(g, tm, obs, eps, initial):
    nbrs = [sorted(g.index(c) for c in neighbors(g.cell(s), g)) for s in range(g.n_cells)]
    want, want_lp = brute_force_viterbi(tm.p, list(range(g.n_cells)), nbrs, obs, eps, initial)
    seq = ObservationSequence(tuple(g.cell(o) for o in obs), eps)
    if want is None:
        with pytest.raises(ImpossibleSequence):
            viterbi(tm, seq, initial)
        return
    path, lp = viterbi(tm, seq, initial)
    assert [g.index(c) for c in path] == want
    assert abs(lp - want_lp) <= 1e-12


def test_single_cell_grid():
    g = CellGrid(Position(0, 0), 1.0, 1, 1)
    tm = build_transition_matrix(g)
    obs = ObservationSequence((CellIndex(0, 0),) * 5, 0.3)
    assert viterbi_decode(tm, obs) == [CellIndex(0, 0)] * 5


def test_noiseless_follows_observations():
    g = CellGrid(Position(0, 0), 1.0, 3, 3)
    tm = build_transition_matrix(g, 0.2)
    cells = [CellIndex(0, 0), CellIndex(1, 0), CellIndex(1, 0), CellIndex(1, 1), CellIndex(2, 1)]
    assert viterbi_decode(tm, ObservationSequence(tuple(cells), 0.0)) == cells


def test_noiseless_jump_is_impossible():
    g = CellGrid(Position(0, 0), 1.0, 3, 3)
    tm = build_transition_matrix(g, 0.2)
    with pytest.raises(ImpossibleSequence):
        viterbi_decode(tm, ObservationSequence((CellIndex(0, 0), CellIndex(2, 2)), 0.0))


def test_seed42_instance_matches_enumeration():
    rng = np.random.default_rng(42)
    g = CellGrid(Position(0, 0), 1.0, 3, 3)
    tm = random_matrix(g, rng)
    obs = sample_observations(tm, 0.1, 4, rng)
    check_against_oracle(g, tm, obs, 0.1, np.full(9, 1 / 9))


def test_decoder_smooths_an_isolated_glitch():
    g = CellGrid(Position(0, 0), 1.0, 3, 3)
    # hand-evaluated: staying put scores 0.9^4 * 0.9^4 * 0.025 ~ 1.1e-2,
    # following the glitch 0.025 * (0.1/3) * 0.9^2 * 0.9^5 ~ 4.0e-4
    tm = build_transition_matrix(g, 0.9)
    a, b = CellIndex(1, 1), CellIndex(1, 2)
    out = viterbi_decode(tm, ObservationSequence((a, a, b, a, a), 0.1))
    assert out == [a] * 5


def test_initial_distribution_validated():
    g = CellGrid(Position(0, 0), 1.0, 2, 2)
    tm = build_transition_matrix(g)
    with pytest.raises(ValueError):
        viterbi(tm, ObservationSequence((CellIndex(0, 0),), 0.1), [0.5, 0.5, 0.5, 0.5])


def test_observation_sequence_validated():
    with pytest.raises(ValueError):
        ObservationSequence((), 0.1)
    with pytest.raises(ValueError):
        ObservationSequence((CellIndex(0, 0),), 1.0)


def test_emission_rows_are_distributions():
    g = CellGrid(Position(0, 0), 1.0, 3, 2)
    e = emission_matrix(g, 0.3)
    np.testing.assert_allclose(e.sum(axis=1), 1.0)


@settings(max_examples=60)
@given(
    st.integers(1, 3),
    st.integers(1, 3),
    st.integers(1, 5),
    st.sampled_from([0.0, 0.1, 0.3]),
    st.booleans(),
    st.integers(0, 2**32 - 1),
)
def test_matches_enumeration(cols, rows, T, eps, sampled, seed):
    rng = np.random.default_rng(seed)
    g = CellGrid(Position(0, 0), 1.0, cols, rows)
    tm = random_matrix(g, rng)
    initial = rng.dirichlet(np.ones(g.n_cells))
    obs = sample_observations(tm, eps, T, rng) if sampled else list(rng.integers(g.n_cells, size=T))
    check_against_oracle(g, tm, [int(o) for o in obs], eps, initial)


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_decoded_path_respects_topology(cols, rows, T, seed):
    rng = np.random.default_rng(seed)
    g = CellGrid(Position(0, 0), 1.0, cols, rows)
    tm = random_matrix(g, rng)
    obs = sample_observations(tm, 0.3, T, rng)
    path = viterbi_decode(tm, ObservationSequence(tuple(g.cell(o) for o in obs), 0.3))
    for a, b in zip(path, path[1:]):
        assert a == b or b in neighbors(a, g)
