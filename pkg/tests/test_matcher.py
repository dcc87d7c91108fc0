import random
from fractions import Fraction

import pytest

from monet.behavior_graph import AppComponent, BehaviorGraph, SystemComponent
from monet.matcher import (
    NotDecoupled,
    RuntimeBehaviorSignature,
    decide,
    exact_threshold,
    match_rbg,
    match_sss,
    similarity,
    upper_bound_value,
)
from monet.sigstore import FamilySignature, SssBlacklist, empty_store, insert_signature, merge_blacklist
from monet.trace import Sss

from oracles import brute_force_best, perturb_graph, random_cluster_graph


def worked_example_pair():
    a = AppComponent("com.x.Main", "activity")
    b = AppComponent("com.x.Work", "service")
    sys_nodes = [SystemComponent(d) for d in
                 ("PackageManager", "PhoneSubInfo", "ConnectivityManager", "DevicePolicyManager")]
    nodes = [a, b, *sys_nodes]
    edges1 = [(a, b, 5), (a, sys_nodes[0], 2), (b, sys_nodes[1], 4),
              (b, sys_nodes[2], 4), (a, sys_nodes[3], 41), (b, sys_nodes[0], 2)]
    edges2 = [(a, b, 5), (a, sys_nodes[0], 2), (b, sys_nodes[1], 4),
              (b, sys_nodes[2], 4), (a, sys_nodes[3], 41), (b, sys_nodes[3], 2)]
    return BehaviorGraph.of("runtime", nodes, edges1), BehaviorGraph.of("runtime", nodes, edges2)


def test_six_node_retargeted_edge_scores_eleven_twelfths():
    g1, g2 = worked_example_pair()
    score = similarity(g1, g2)
    assert score.value == Fraction(11, 12)
    assert (score.matched_vertices, score.matched_edges) == (6, 5)
    assert score.exact
    assert f"{float(score.value):.4f}" == "0.9167"


def test_identical_graphs_score_one():
    g1, _ = worked_example_pair()
    assert similarity(g1, g1).value == 1


def test_empty_graph_scores_zero():
    g1, _ = worked_example_pair()
    empty = BehaviorGraph.of("runtime", [], [])
    assert similarity(g1, empty).value == 0
    assert similarity(empty, empty).value == 1


def test_not_decoupled_rejected():
    a = AppComponent("com.x.A", "activity")
    b = AppComponent("com.x.B", "activity")
    g = BehaviorGraph.of("runtime", [a, b], [])
    ok, _ = worked_example_pair()
    with pytest.raises(NotDecoupled):
        similarity(g, ok)


def test_similarity_matches_brute_force_on_random_pairs():
    rng = random.Random(2024)
    for trial in range(80):
        g1 = random_cluster_graph(rng)
        g2 = perturb_graph(rng, g1) if rng.random() < 0.6 else random_cluster_graph(rng)
        score = similarity(g1, g2)
        mv, me, value = brute_force_best(g1, g2)
        assert score.value == value, f"trial {trial}"
        assert score.matched_vertices + score.matched_edges == mv + me
        assert score.exact


def test_symmetry_reflexivity_and_range():
    rng = random.Random(5)
    for _ in range(40):
        g1 = random_cluster_graph(rng)
        g2 = random_cluster_graph(rng)
        s12, s21 = similarity(g1, g2), similarity(g2, g1)
        assert s12.value == s21.value
        assert 0 <= s12.value <= 1
        assert similarity(g1, g1).value == 1


def test_formula_identity():
    rng = random.Random(8)
    for _ in range(40):
        g1, g2 = random_cluster_graph(rng), random_cluster_graph(rng)
        s = similarity(g1, g2)
        v1, v2 = len(g1.nodes), len(g2.nodes)
        e1, e2 = len(g1.edges), len(g2.edges)
        ops = (v1 - s.matched_vertices) + (v2 - s.matched_vertices) \
            + (e1 - s.matched_edges) + (e2 - s.matched_edges)
        assert s.value == 1 - Fraction(ops, v1 + v2 + e1 + e2)


def test_rename_invariance():
    from monet.behavior_graph import node_id

    rng = random.Random(13)
    for _ in range(30):
        g = random_cluster_graph(rng)

        def rename(node):
            if isinstance(node, AppComponent):
                return AppComponent("x." + node.name, node.kind)
            return node

        remap = {nid: ("app:x." + nid[4:] if nid.startswith("app:") else nid) for nid in g.nodes}
        nodes = {node_id(rename(n)): rename(n) for n in g.nodes.values()}
        edges = {(remap[s], remap[d], c): v for (s, d, c), v in g.edges.items()}
        g2 = BehaviorGraph("runtime", nodes, edges)
        assert similarity(g, g2).value == 1


def test_upper_bound_dominates_true_value():
    rng = random.Random(21)
    for _ in range(60):
        g1, g2 = random_cluster_graph(rng), random_cluster_graph(rng)
        assert upper_bound_value(g1, g2) >= similarity(g1, g2).value


def test_beam_kicks_in_beyond_cutoff():
    # 13 app components on each side: past the exhaustive cutoff.
    kinds = ["activity", "service", "receiver"]
    apps1 = [AppComponent(f"com.big.C{i}", kinds[i % 3]) for i in range(13)]
    apps2 = [AppComponent(f"com.big.D{i}", kinds[i % 3]) for i in range(13)]
    edges1 = [(apps1[i], apps1[i + 1], 5 + i % 3) for i in range(12)]
    edges2 = [(apps2[i], apps2[i + 1], 5 + i % 3) for i in range(12)]
    g1 = BehaviorGraph.of("runtime", apps1, edges1)
    g2 = BehaviorGraph.of("runtime", apps2, edges2)
    s = similarity(g1, g2)
    assert not s.exact
    assert 0 <= s.value <= 1
    # deterministic and symmetric even on the heuristic path
    assert similarity(g1, g2).value == s.value
    assert similarity(g2, g1).value == s.value
    assert similarity(g1, g1).value == 1


def test_exact_threshold_handles_decimal_text():
    assert exact_threshold(0.8) == Fraction(4, 5)
    assert exact_threshold("0.8") == Fraction(4, 5)
    assert exact_threshold(Fraction(1, 2)) == Fraction(1, 2)
    # a score of exactly 4/5 passes a 0.8 threshold
    assert Fraction(4, 5) >= exact_threshold(0.8)


# --- store matching -----------------------------------------------------------


def _store_with(*graphs_by_family, blacklist=None):
    store = empty_store()
    for fid, graphs in graphs_by_family:
        store = insert_signature(store, FamilySignature(fid, tuple(graphs)))
    if blacklist:
        store = merge_blacklist(store, *blacklist)
    return store


def test_self_match_scores_one():
    g1, _ = worked_example_pair()
    store = _store_with(("famA", [g1]))
    hit = match_rbg([g1], store, 0.8)
    assert hit is not None
    assert hit[0] == "famA"
    assert hit[1].value == 1


def test_index_window_prunes_distant_sizes():
    g1, _ = worked_example_pair()  # 2 app components
    big = [AppComponent(f"com.b.C{i}", "service") for i in range(10)]
    big_graph = BehaviorGraph.of("runtime", big, [(big[i], big[i + 1], 5) for i in range(9)])
    store = _store_with(("famBig", [big_graph]))
    assert store.range_candidates(2, 5) == []
    assert match_rbg([g1], store, 0.1, alpha=5) is None


def test_tie_breaks_by_family_id():
    g1, _ = worked_example_pair()
    store = _store_with(("famB", [g1]), ("famA", [g1]))
    hit = match_rbg([g1], store, 0.8)
    assert hit[0] == "famA"


def test_variant_with_junk_component_and_extra_edges_hand_computed():
    # Variant = stored graph + 1 junk component + 2 extra runtime edges.
    # All of the base matches: min_ops = (6-6) + (7-6) + (6-6) + (8-6) = 3,
    # total = 6 + 7 + 6 + 8 = 27, value = 24/27 = 8/9 ~ 0.889 >= 0.8.
    base, _ = worked_example_pair()
    junk = AppComponent("com.x.Junk", "receiver")
    nodes = list(base.nodes.values()) + [junk]
    edges = [(s, d, c) for (s, d, c) in base.edges]
    by_id = base.nodes
    edges_objs = [(by_id[s], by_id[d], c) for (s, d, c) in edges]
    edges_objs.append((by_id["app:com.x.Main"], junk, 14))
    edges_objs.append((junk, by_id["sys:PackageManager"], 2))
    variant = BehaviorGraph.of("runtime", nodes, edges_objs)

    score = similarity(base, variant)
    assert score.value == Fraction(8, 9)

    store = _store_with(("famA", [base]))
    hit = match_rbg([variant], store, 0.8)
    assert hit is not None and hit[0] == "famA"
    assert hit[1].value == Fraction(8, 9)
    assert match_rbg([variant], store, 0.9) is None  # below a stricter threshold


def test_match_sss_intersection():
    bl = SssBlacklist.of(endpoints=["c2.evil.net:443"], executables=["/data/local/secbino"])
    hits = match_sss(Sss(frozenset({"c2.evil.net:443", "ok.com:80"}),
                         frozenset({"/data/local/secbino"})), bl)
    assert hits == ["c2.evil.net:443", "/data/local/secbino"]
    assert match_sss(Sss(frozenset({"other:1"}), frozenset()), bl) == []


def test_decide_mode_isolation():
    g1, _ = worked_example_pair()
    clean_graph = BehaviorGraph.of(
        "runtime",
        [AppComponent("com.c.Solo", "receiver"), SystemComponent("JobScheduler")],
        [(AppComponent("com.c.Solo", "receiver"), SystemComponent("JobScheduler"), 11)],
    )
    store = _store_with(("famA", [g1]), blacklist=(["c2.evil.net:443"], []))
    dirty_sss = Sss(frozenset({"c2.evil.net:443"}), frozenset())

    sig = RuntimeBehaviorSignature("com.c", clean_graph, dirty_sss)
    assert decide(sig, store, mode="rbg_only").decision == "clean"
    v = decide(sig, store, mode="combined")
    assert v.decision == "malicious"
    assert v.matched_blacklist == ("c2.evil.net:443",)
    assert v.family is None

    clean_sig = RuntimeBehaviorSignature("com.c", clean_graph, Sss())
    assert decide(clean_sig, store, mode="combined").decision == "clean"

    hot_sig = RuntimeBehaviorSignature("com.x", g1, Sss())
    verdict = decide(hot_sig, store, mode="rbg_only")
    assert verdict.decision == "malicious"
    assert verdict.family == "famA"
    assert verdict.best_score.value == 1


def test_verdict_json_shape():
    g1, _ = worked_example_pair()
    store = _store_with(("famA", [g1]))
    verdict = decide(RuntimeBehaviorSignature("com.x", g1, Sss()), store, mode="rbg_only")
    obj = verdict.to_json_obj()
    assert obj["decision"] == "malicious"
    assert obj["family"] == "famA"
    assert obj["score"] == 1.0
    assert obj["exact"] is True
    assert "matched_blacklist" not in obj


def test_signature_requires_runtime_origin():
    static = BehaviorGraph.of("static", [AppComponent("com.a.M", "activity")], [])
    with pytest.raises(ValueError):
        RuntimeBehaviorSignature("com.a", static, Sss())
