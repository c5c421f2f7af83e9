"""Acceptance suite: one printed PASS/FAIL line per criterion.

Heavy shared state (the n=100,000 instance) is built once per module and
reused by the scale, ablation, and robustness criteria.
"""

import sys
import time

import numpy as np
import pytest

import hybridann as ha
from conftest import ACCEPTANCE_LINES


def _report(number: int, name: str, ok: bool, detail: str = ""):
    verdict = "PASS" if ok else "FAIL"
    line = f"CRITERION {number:2d} [{verdict}] {name}"
    if detail:
        line += f" — {detail}"
    print(line, file=sys.stderr, flush=True)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------------------
# shared instances
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def medium_instance():
    """n=2,000 instance shared by the oracle-equivalence, masked-reduction,
    and persistence criteria. Dense build (gamma=150, sigma=0.6) so the
    router can achieve exact oracle equality at K=100."""
    features = ha.generate_synthetic(2_000, 32, "gaussian", seed=60)
    schema, attrs = ha.generate_attributes(2_000, 3, 3, seed=61)
    stats = ha.sample_statistics(features, attrs, 1000, seed=60)
    config = ha.compute_alpha(stats, 2_000, 3)
    params = ha.BuildParams(gamma=150, gamma_new=150, sigma=0.6, seed=62)
    graph = ha.build(features, attrs, schema, params, config)
    qfeat, qattr, qmask = ha.generate_queries(
        features, attrs, 100, 3, min_matches=20, seed=63
    )
    return graph, config, qfeat, qattr, qmask


@pytest.fixture(scope="module")
def scale_instance():
    """n=100,000, M=32, L=7, pool=3 (2187 attribute combinations): one
    neighbor-descent run, pruned at sigma 0.44 plus 0.40/0.50 variants."""
    t0 = time.perf_counter()
    features = ha.generate_synthetic(100_000, 32, "gaussian", seed=7)
    schema, attrs = ha.generate_attributes(100_000, 7, 3, seed=8)
    stats = ha.sample_statistics(features, attrs, 1000, seed=7)
    config = ha.compute_alpha(stats, 100_000, 7)
    params = ha.BuildParams(gamma=64, gamma_new=32, sigma=0.44, seed=7)
    descent = ha.run_descent(features, attrs, schema, params, config)
    graphs = {}
    for sigma in (0.40, 0.44, 0.50):
        clone = descent.copy_unfrozen()
        prune_params = ha.BuildParams(gamma=64, gamma_new=32, sigma=sigma, seed=7)
        ha.semantic_prune(clone, prune_params)
        clone.frozen = True
        graphs[sigma] = clone
    build_seconds = time.perf_counter() - t0
    qfeat, qattr, qmask = ha.generate_queries(
        features, attrs, 100, 7, min_matches=20, seed=9
    )
    gt10 = [
        ha.oracle_hybrid_groundtruth(features, attrs, qfeat[qi], qattr[qi], 10, mask=qmask[qi])
        for qi in range(100)
    ]
    return {
        "features": features,
        "attrs": attrs,
        "graphs": graphs,
        "config": config,
        "build_seconds": build_seconds,
        "qfeat": qfeat,
        "qattr": qattr,
        "qmask": qmask,
        "gt10": gt10,
    }


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_alpha_calibration():
    stats = ha.SampleStats(
        avg_feature_distance=536.93,
        avg_attribute_distance=1.67,
        sample_size=1000,
        rng_seed=0,
    )
    config = ha.compute_alpha(stats, 1_000_000, 3)
    ok = abs(config.alpha - 0.743) <= 1e-3 and abs(config.alpha - 0.8) <= 0.1
    _report(1, "alpha calibration on reference statistics", ok, f"alpha={config.alpha:.6f}")


def test_criterion_02_manhattan_dominance():
    # every mapped attribute vector with L=3, values 1..9 (covers 1..3)
    vals = np.arange(1, 10)
    grid = np.stack(np.meshgrid(vals, vals, vals, indexing="ij"), axis=-1).reshape(-1, 3)
    a = grid[:, None, :].astype(np.int64)
    b = grid[None, :, :].astype(np.int64)
    diff = np.abs(a - b)
    manhattan = diff.sum(axis=-1)
    euclidean = np.sqrt((diff.astype(np.float64) ** 2).sum(axis=-1))
    hamming = (diff > 0).sum(axis=-1)
    mismatched = hamming >= 1
    violations = int(
        np.count_nonzero(manhattan[mismatched] < euclidean[mismatched] - 1e-12)
        + np.count_nonzero(euclidean[mismatched] < 1.0 - 1e-12)
        + np.count_nonzero(manhattan[mismatched] < hamming[mismatched])
        + np.count_nonzero(hamming[mismatched] < 1)
    )
    _report(
        2,
        "Manhattan >= Euclidean >= 1 and Manhattan >= Hamming >= 1 on mismatch",
        violations == 0,
        f"{int(mismatched.sum())} mismatched pairs, {violations} violations",
    )


def test_criterion_03_selection_rule():
    rng = np.random.default_rng(123)
    n = 10_000
    sv_mismatch = rng.uniform(1e-6, 10.0, n)
    sv_match = rng.uniform(1e-6, 10.0, n)
    s_a = rng.integers(0, 21, n).astype(np.float64)
    alpha = rng.uniform(0.11, 2.5, n)
    disagreements = 0
    for i in range(n):
        config = ha.MetricConfig.manual(alpha[i], 3)
        u_mismatch = sv_mismatch[i] * (1.0 + s_a[i] / alpha[i])
        u_match = sv_match[i]
        fused_prefers_mismatch = u_mismatch < u_match
        margin = ha.selection_margin(s_a[i], config)
        rule_prefers_mismatch = sv_mismatch[i] / sv_match[i] < margin.threshold_ratio
        if fused_prefers_mismatch != rule_prefers_mismatch:
            disagreements += 1
    _report(
        3,
        "fused ordering agrees with the closed-form selection inequality",
        disagreements == 0,
        f"{n} tuples, {disagreements} disagreements",
    )


def test_criterion_04_connectivity():
    cases = [
        (2_000, 16), (2_000, 100), (3_000, 32), (4_000, 16), (5_000, 100),
        (6_000, 32), (8_000, 16), (10_000, 32), (15_000, 32), (20_000, 16),
    ]
    violations = []
    for build_id, (n, gamma) in enumerate(cases):
        features = ha.generate_synthetic(n, 16, "gaussian", seed=100 + build_id)
        schema, attrs = ha.generate_attributes(n, 3, 3, seed=200 + build_id)
        stats = ha.sample_statistics(features, attrs, min(1000, n), seed=build_id)
        config = ha.compute_alpha(stats, n, 3)
        params = ha.BuildParams(gamma=gamma, gamma_new=gamma, seed=build_id)
        g = ha.build(features, attrs, schema, params, config)
        if g.in_degrees().min() < 1:
            violations.append(f"build {build_id}: isolated node")
        if (g.nbr_counts < 1).any() or (g.nbr_counts > gamma).any():
            violations.append(f"build {build_id}: degree out of [1, gamma]")
        for i in range(n):
            c = int(g.nbr_counts[i])
            row = g.nbr_ids[i, :c]
            d = g.nbr_dists[i, :c]
            if (row == i).any():
                violations.append(f"build {build_id}: self loop at {i}")
                break
            if len(set(row.tolist())) != c:
                violations.append(f"build {build_id}: duplicate neighbor at {i}")
                break
            keys = list(zip(d.tolist(), row.tolist()))
            if keys != sorted(keys):
                violations.append(f"build {build_id}: unsorted list at {i}")
                break
    _report(
        4,
        "10 seeded builds: min in-degree >= 1, structural invariants",
        not violations,
        "; ".join(violations) if violations else "all clean",
    )


def test_criterion_05_graph_quality_gate():
    features = ha.generate_synthetic(10_000, 32, "gaussian", seed=50)
    schema, attrs = ha.generate_attributes(10_000, 3, 3, seed=51)
    stats = ha.sample_statistics(features, attrs, 1000, seed=50)
    config = ha.compute_alpha(stats, 10_000, 3)
    params = ha.BuildParams(gamma=32, gamma_new=32, seed=52)
    g = ha.run_descent(features, attrs, schema, params, config)
    ok = g.build_log["psi"] >= 0.8 and g.build_log["iterations"] <= 30
    _report(
        5,
        "n=10,000 build reaches quality >= 0.8 within 30 iterations",
        ok,
        f"psi={g.build_log['psi']:.4f} after {g.build_log['iterations']} iterations",
    )


def test_criterion_06_oracle_equivalence(medium_instance):
    graph, config, qfeat, qattr, qmask = medium_instance
    r_fused, r_exact = [], []
    for qi in range(100):
        params = ha.SearchParams(k=100, seed=0, mask=qmask[qi])
        ids, _, _ = ha.search(graph, qfeat[qi], qattr[qi], params, qi)
        oracle = ha.oracle_auto_topk(
            graph.features, graph.attrs, qfeat[qi], qattr[qi], 10, config, qmask[qi]
        )
        gt = ha.oracle_hybrid_groundtruth(
            graph.features, graph.attrs, qfeat[qi], qattr[qi], 10, mask=qmask[qi]
        )
        r_fused.append(ha.recall_at_k(ids, oracle, 10))
        r_exact.append(ha.recall_at_k(ids, gt, 10))
    mean_fused, mean_exact = float(np.mean(r_fused)), float(np.mean(r_exact))
    ok = mean_fused >= 0.99 and mean_exact >= 0.95
    _report(
        6,
        "n=2,000 K=100: recall@10 >= 0.99 (fused oracle), >= 0.95 (exact-match)",
        ok,
        f"fused={mean_fused:.4f} exact={mean_exact:.4f}",
    )


def test_criterion_07_scale_recall(scale_instance):
    inst = scale_instance
    graph = inst["graphs"][0.44]
    t0 = time.perf_counter()
    recalls = []
    for qi in range(100):
        params = ha.SearchParams(k=200, seed=0, mask=inst["qmask"][qi])
        ids, _, _ = ha.search(graph, inst["qfeat"][qi], inst["qattr"][qi], params, qi)
        recalls.append(ha.recall_at_k(ids, inst["gt10"][qi], 10))
    total = inst["build_seconds"] + (time.perf_counter() - t0)
    mean_recall = float(np.mean(recalls))
    ok = mean_recall >= 0.95 and total < 900.0
    _report(
        7,
        "n=100,000 (2187 attribute combos) K=200: recall@10 >= 0.95 in < 15 min",
        ok,
        f"recall={mean_recall:.4f} elapsed={total:.1f}s",
    )


def test_criterion_08_routing_ablation(scale_instance):
    inst = scale_instance
    graph = inst["graphs"][0.44]
    qfeat, qattr, qmask = ha.generate_queries(
        inst["features"], inst["attrs"], 1000, 7, min_matches=1, seed=11
    )
    evals = {True: [], False: []}
    for use_coarse in (True, False):
        for qi in range(1000):
            params = ha.SearchParams(
                k=200, seed=0, mask=qmask[qi], use_coarse=use_coarse
            )
            _, _, stats = ha.search(graph, qfeat[qi], qattr[qi], params, qi)
            evals[use_coarse].append(stats.dist_evals)
    coarse_mean = float(np.mean(evals[True]))
    refine_mean = float(np.mean(evals[False]))
    _report(
        8,
        "coarse+refine mean distance evaluations <= refine-only (same entries)",
        coarse_mean <= refine_mean,
        f"coarse+refine={coarse_mean:.1f} refine-only={refine_mean:.1f}",
    )


def test_criterion_09_mask_reductions(medium_instance):
    graph, config, qfeat, qattr, qmask = medium_instance
    l = graph.attrs.shape[1]
    ones = np.ones(l, dtype=np.int32)
    zeros = np.zeros(l, dtype=np.int32)
    failures = []
    for qi in range(100):
        ids_plain, d_plain, _ = ha.search(
            graph, qfeat[qi], qattr[qi], ha.SearchParams(k=100, seed=0), qi
        )
        ids_ones, d_ones, _ = ha.search(
            graph, qfeat[qi], qattr[qi], ha.SearchParams(k=100, seed=0, mask=ones), qi
        )
        if not (np.array_equal(ids_plain, ids_ones) and np.array_equal(d_plain, d_ones)):
            failures.append(f"q{qi}: all-ones mask differs from unmasked")
        ids_zeros, _, _ = ha.search(
            graph, qfeat[qi], qattr[qi], ha.SearchParams(k=100, seed=0, mask=zeros), qi
        )
        euclid_oracle = ha.oracle_auto_topk(
            graph.features, graph.attrs, qfeat[qi], qattr[qi], 100, config, zeros
        )
        if not np.array_equal(ids_zeros, euclid_oracle):
            failures.append(f"q{qi}: all-zeros mask differs from Euclidean oracle")
    _report(
        9,
        "all-ones mask == unmasked; all-zeros mask == Euclidean oracle (exact ids)",
        not failures,
        failures[0] if failures else "100/100 queries exact",
    )


def test_criterion_10_persistence(medium_instance, tmp_path):
    graph, config, qfeat, qattr, qmask = medium_instance
    path1 = tmp_path / "round1.idx"
    path2 = tmp_path / "round2.idx"
    ha.write_index(graph, path1)
    loaded = ha.read_index(path1)
    ha.write_index(loaded, path2)
    bit_exact = path1.read_bytes() == path2.read_bytes()
    search_identical = True
    for qi in range(20):
        params = ha.SearchParams(k=50, seed=0, mask=qmask[qi])
        before = ha.search(graph, qfeat[qi], qattr[qi], params, qi)
        after = ha.search(loaded, qfeat[qi], qattr[qi], params, qi)
        if not (np.array_equal(before[0], after[0]) and np.array_equal(before[1], after[1])):
            search_identical = False
            break
    ok = bit_exact and search_identical
    _report(
        10,
        "index round trip bit-exact; identical pre/post search results",
        ok,
        f"bit_exact={bit_exact} search_identical={search_identical}",
    )


def test_criterion_11_sigma_robustness(scale_instance):
    inst = scale_instance
    means = {}
    for sigma, graph in sorted(inst["graphs"].items()):
        recalls = []
        for qi in range(100):
            params = ha.SearchParams(k=200, seed=0, mask=inst["qmask"][qi])
            ids, _, _ = ha.search(graph, inst["qfeat"][qi], inst["qattr"][qi], params, qi)
            recalls.append(ha.recall_at_k(ids, inst["gt10"][qi], 10))
        means[sigma] = float(np.mean(recalls))
    spread = max(means.values()) - min(means.values())
    _report(
        11,
        "recall@10 varies < 0.005 across sigma in {0.40, 0.44, 0.50} at K=200",
        spread < 0.005,
        " ".join(f"sigma={s}:{r:.4f}" for s, r in means.items()) + f" spread={spread:.5f}",
    )
