from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from beamplan.arraysim import dft_codebook
from beamplan.errors import CapacityError, ConditioningError, InvalidArgumentError, ModelMismatchError, SchemaError
from beamplan.stochastic import (
    BlockageModel,
    CandidatePath,
    Scenario,
    ScenarioConfig,
    bridge_distribution,
    build_scenario,
    coverage_prob,
    derive_process,
    export_raytrace_csv,
    import_raytrace_csv,
    posterior_marginal,
    process_from_labels,
    sample_posterior,
    transition_kernel,
)

from conftest import N, frozen, sk

F = Fraction


def two_state(rho, labels_per_loc):
    rho = F(rho)
    return process_from_labels(labels_per_loc, [[rho, 1 - rho], [1 - rho, rho]], [F(1, 2), F(1, 2)], N, N)


def path_weights(process, evidence):
    """Brute-force joint probability of every state path consistent with ``evidence``."""
    M, A = process.M, process.n_states
    out = {}
    for path in itertools.product(range(A), repeat=M):
        if any(path[x - 1] != s for x, s in evidence.items()):
            continue
        w = process.initial[path[0]]
        for a, b in zip(path, path[1:]):
            w = w * process.kernel[a, b]
        if w:
            out[path] = w
    return out


def test_scenario_geometry_below_bs():
    cfg = ScenarioConfig(n_locations=5, trajectory_length_m=5.0, bs_offset_m=10.0, n_scatterers=0)
    sc = build_scenario(cfg, 7)
    assert sc.trajectory_points[2] == (0.0, 0.0)
    assert sc.candidate_paths[2][0].aod_rad == pytest.approx(0.0, abs=1e-15)
    # UE at x = 2: bearing from the BS at (0, 10)
    assert sc.candidate_paths[4][0].aod_rad == pytest.approx(math.asin(2 / math.hypot(2, 10)), abs=1e-12)
    assert sc.candidate_paths[4][0].aoa_rad == pytest.approx(-math.asin(2 / math.hypot(2, 10)), abs=1e-12)


def test_scenario_determinism_and_default_size():
    a = build_scenario(ScenarioConfig(), 3)
    b = build_scenario(ScenarioConfig(), 3)
    assert a.to_dict() == b.to_dict()
    assert a.M == 10 and a.n_paths == 3
    xs = [p[0] for p in a.trajectory_points]
    assert xs[-1] - xs[0] == pytest.approx(9.0) and len(xs) == 10
    with pytest.raises(InvalidArgumentError):
        build_scenario(ScenarioConfig(n_locations=0), 0)


def _scenario_with_paths(P, M=3):
    rows = tuple(
        tuple(CandidatePath(math.asin(-0.9 + 0.5 * p), math.asin(-0.9 + 0.5 * p), -10.0 * p) for p in range(P))
        for _ in range(M)
    )
    return Scenario(candidate_paths=rows)


def test_derive_process_kernels():
    fb, wb = dft_codebook(N, N), dft_codebook(N, N)
    frozen_p = derive_process(_scenario_with_paths(2), BlockageModel(1.0, 1.0, 0.0), fb, wb, 2, exact=True)
    assert np.array_equal(frozen_p.kernel, np.eye(4, dtype=object))
    one = derive_process(_scenario_with_paths(1), BlockageModel(0.9, 0.9), fb, wb, 1)
    np.testing.assert_allclose(one.kernel, [[0.9, 0.1], [0.1, 0.9]], atol=1e-15)
    two = derive_process(_scenario_with_paths(2), BlockageModel(0.8, 0.7), fb, wb, 2, exact=True)
    k = {0: {0: F(8, 10), 1: F(2, 10)}, 1: {0: F(3, 10), 1: F(7, 10)}}
    for s, t in itertools.product(range(4), repeat=2):
        expect = k[s & 1][t & 1] * k[(s >> 1) & 1][(t >> 1) & 1]
        assert two.kernel[s, t] == expect
    # state 1 blocks path 0, so the strongest surviving path moves up a rank
    assert two.quantized[0][1].pairs[0] == two.quantized[0][0].pairs[1]
    assert two.quantized[0][3].pairs == (None, None)


def test_derive_process_errors():
    fb = dft_codebook(N, N)
    with pytest.raises(InvalidArgumentError):
        derive_process(_scenario_with_paths(2), BlockageModel(), fb, fb, 3)
    with pytest.raises(CapacityError):
        derive_process(_scenario_with_paths(4), BlockageModel(), fb, fb, 1, max_states=8)


def test_kernel_rows_and_chapman_kolmogorov():
    p = derive_process(_scenario_with_paths(3), BlockageModel(0.85, 0.6), dft_codebook(N, N), dft_codebook(N, N), 3)
    np.testing.assert_allclose(p.kernel.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p.kernel >= 0)
    np.testing.assert_allclose(transition_kernel(p, 0), np.eye(8), atol=0)
    np.testing.assert_allclose(transition_kernel(p, 2), p.kernel @ p.kernel, atol=1e-15)
    for a, b in [(1, 2), (2, 3), (3, 4)]:
        np.testing.assert_allclose(transition_kernel(p, a + b), transition_kernel(p, a) @ transition_kernel(p, b), atol=1e-12)


def test_kernel_power_closed_form():
    p = two_state(F(9, 10), [(sk(0), sk(1))] * 4)
    k3 = transition_kernel(p, 3)
    assert k3[0, 0] == F(756, 1000) and k3[0, 1] == F(244, 1000)
    assert k3[0, 0] == (1 + F(8, 10) ** 3) / 2


def test_bridge_endpoints_and_enumeration():
    p = two_state(F(7, 10), [(sk(0), sk(1))] * 5)
    b = bridge_distribution(p, 1, 5, 1, 0, 1)
    assert list(b) == [1, 0]
    b = bridge_distribution(p, 1, 5, 5, 0, 1)
    assert list(b) == [0, 1]
    weights = path_weights(p, {1: 0, 5: 0})
    total = sum(weights.values())
    enum = [sum(w for path, w in weights.items() if path[2] == s) / total for s in range(2)]
    assert list(bridge_distribution(p, 1, 5, 3, 0, 0)) == enum


def test_bridge_reconstructs_kernel():
    p = two_state(F(3, 5), [(sk(0), sk(1))] * 6)
    K = lambda n: transition_kernel(p, n)
    for s_l, s_h in itertools.product(range(2), repeat=2):
        # sum_s P(s | s_l) P(s_h | s) = P(s_h | s_l)
        assert sum(K(2)[s_l, s] * K(3)[s, s_h] for s in range(2)) == K(5)[s_l, s_h]
        b = bridge_distribution(p, 1, 6, 3, s_l, s_h)
        assert sum(b) == 1


def test_bridge_null_conditioning():
    p = process_from_labels([(sk(0), sk(1))] * 3, [[1, 0], [0, 1]], [F(1, 2), F(1, 2)], N, N)
    with pytest.raises(ConditioningError):
        bridge_distribution(p, 1, 3, 2, 0, 1)
    with pytest.raises(InvalidArgumentError):
        bridge_distribution(p, 2, 1, 2, 0, 0)


def test_coverage_examples():
    p = two_state(F(9, 10), [(sk(0, 2, 4), sk(1, 3, 5))] * 4)
    assert coverage_prob(p, 2, 2, 0.2, left=(2, 0)) == 0
    fz = frozen([sk(0), sk(0), sk(5)])
    assert coverage_prob(fz, 2, 1, 0.2, left=(1, 0)) == 0
    assert coverage_prob(fz, 3, 1, 0.2, left=(1, 0)) == 1


def test_coverage_matches_enumeration():
    # state 1 = blocked: the skeleton becomes Null and d = 0 against anything
    rho = F(4, 5)
    labels = [(sk(2), sk(None))] * 5
    p = process_from_labels(labels, [[rho, 1 - rho], [F(1, 2), F(1, 2)]], [F(2, 3), F(1, 3)], N, N)
    cases = [dict(left=(1, 0)), dict(right=(5, 0)), dict(left=(1, 0), right=(5, 0))]
    for ev in cases:
        evidence = dict(e for e in (ev.get("left"), ev.get("right")) if e)
        weights = path_weights(p, evidence)
        total = sum(weights.values())
        for x in range(1, 6):
            ref = (ev.get("left") or ev.get("right"))[0]
            got = coverage_prob(p, x, ref, 0.2, **ev)
            if x == ref:
                assert got == 0
                continue
            expect = sum(w for path, w in weights.items() if path[x - 1] == 1) / total
            assert got == expect


def test_coverage_monte_carlo_option(rng):
    p = two_state(F(9, 10), [(sk(0), sk(None))] * 3)
    exact = float(coverage_prob(p, 3, 1, 0.2, left=(1, 0)))
    est = coverage_prob(p, 3, 1, 0.2, left=(1, 0), samples=20000, rng=rng)
    assert abs(est - exact) < 4 * math.sqrt(exact * (1 - exact) / 20000)
    with pytest.raises(InvalidArgumentError):
        coverage_prob(p, 3, 1, 0.2, left=(1, 0), samples=10)
    with pytest.raises(InvalidArgumentError):
        coverage_prob(p, 3, 2, 0.2, left=(1, 0))


def test_posterior_sampler_frequencies(rng):
    p = two_state(F(7, 10), [(sk(0), sk(1))] * 5)
    draws = sample_posterior(p, {2: 1, 5: 0}, 20000, rng)
    assert np.all(draws[:, 1] == 1) and np.all(draws[:, 4] == 0)
    for x in (1, 3, 4):
        exact = float(posterior_marginal(p, x, left=(2, 1), right=(5, 0))[1]) if x > 2 else None
        if exact is None:
            weights = path_weights(p, {2: 1, 5: 0})
            exact = float(sum(w for path, w in weights.items() if path[0] == 1) / sum(weights.values()))
        freq = draws[:, x - 1].mean()
        assert abs(freq - exact) < 4 * math.sqrt(exact * (1 - exact) / 20000) + 1e-9


def test_state_of():
    p = two_state(F(9, 10), [(sk(0), sk(1))] * 2)
    assert p.state_of(1, sk(1)) == 1 and p.state_of(1, 0) == 0
    with pytest.raises(ModelMismatchError):
        p.state_of(1, sk(4))
    with pytest.raises(ModelMismatchError):
        p.state_of(1, 5)
    amb = two_state(F(9, 10), [(sk(0), sk(0))] * 2)
    with pytest.raises(ModelMismatchError):
        amb.state_of(1, sk(0))


def test_process_validation():
    with pytest.raises(InvalidArgumentError):
        process_from_labels([(sk(0), sk(1))], [[F(1, 2), F(1, 3)], [0, 1]], [1, 0], N, N)
    with pytest.raises(InvalidArgumentError):
        process_from_labels([(sk(0), sk(1))], [[0.5, 0.6], [0.0, 1.0]], [1.0, 0.0], N, N)


def _write(tmp_path, text):
    path = tmp_path / "rt.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_import_wellformed(tmp_path):
    lines = ["location_index,path_rank,aod_deg,aoa_deg,gain_db"]
    for loc in range(1, 11):
        for rank in range(1, 4):
            lines.append(f"{loc},{rank},{rank * 10 - loc},{loc - rank * 5},{-90 - rank}")
    sc = import_raytrace_csv(_write(tmp_path, "\n".join(lines) + "\n"))
    assert sc.M == 10 and sc.n_paths == 3
    assert sc.candidate_paths[0][0].aod_rad == pytest.approx(math.radians(9))


def test_import_missing_location(tmp_path):
    lines = ["location_index,path_rank,aod_deg,aoa_deg,gain_db"]
    lines += [f"{loc},1,0,0,-90" for loc in range(1, 11) if loc != 7]
    with pytest.raises(SchemaError, match="location_index 7 missing"):
        import_raytrace_csv(_write(tmp_path, "\n".join(lines)))


@pytest.mark.parametrize(
    "body, pattern",
    [
        ("location_index,path_rank,aod_deg,gain_db\n1,1,0,-90\n", "missing columns"),
        ("location_index,path_rank,aod_deg,aoa_deg,gain_db\n1,1,95,0,-90\n", "row 2"),
        ("location_index,path_rank,aod_deg,aoa_deg,gain_db\n1,1,0,0,-90\n1,1,0,0,-80\n", "row 3"),
        ("location_index,path_rank,aod_deg,aoa_deg,gain_db\n1,x,0,0,-90\n", "row 2"),
    ],
)
def test_import_schema_errors(tmp_path, body, pattern):
    with pytest.raises(SchemaError, match=pattern):
        import_raytrace_csv(_write(tmp_path, body))


def test_csv_round_trip(tmp_path):
    sc = build_scenario(ScenarioConfig(), 11)
    path = tmp_path / "out.csv"
    export_raytrace_csv(sc, path)
    back = import_raytrace_csv(path)
    for r1, r2 in zip(sc.candidate_paths, back.candidate_paths):
        for a, b in zip(r1, r2):
            assert abs(math.degrees(a.aod_rad) - math.degrees(b.aod_rad)) < 1e-6
            assert abs(math.degrees(a.aoa_rad) - math.degrees(b.aoa_rad)) < 1e-6
            assert a.gain_db == b.gain_db
