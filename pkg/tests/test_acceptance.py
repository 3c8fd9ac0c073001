"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The closed-loop and training criteria are end-to-end and take a few
minutes on a desktop CPU.
"""
import json
import math
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from vlnav.data import default_items
from vlnav.encoder import Instruction, encode_instruction
from vlnav.gradcheck import run_gradcheck
from vlnav.harness import (
    EpisodeConfig,
    PlannerChoice,
    SuiteConfig,
    run_benchmark,
    run_episode,
)
from vlnav.planner import (
    ExportConfig,
    PlannerConfig,
    TrainConfig,
    _forward_batch,
    _outputs_from_raw,
    augment_goal_permutations,
    export_oracle_dataset,
    init_params,
    load_dataset,
    samples_to_arrays,
    save_params,
    train_planner,
)
from vlnav.retrieval import (
    Embedding,
    GoalPoolEntry,
    PoolFormatError,
    RetrievalConfig,
    pool_from_descriptors,
    read_pool,
    retrieve,
    score_pool,
    softmax,
    write_pool,
)
from vlnav.controller import scale_waypoint
from vlnav.world import EpisodeStatus, ScenarioKind, generate_scenario


def report(name: str, passed: bool, detail: str = ""):
    print(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else ""))
    assert passed, f"{name}: {detail}"


# --- shared expensive fixtures ----------------------------------------------------

@pytest.fixture(scope="session")
def oracle_dataset(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("data") / "box_oracle.jsonl")
    count = export_oracle_dataset(ExportConfig(kind=ScenarioKind.BOX, episodes=24, seed=1000),
                                  path)
    assert count >= 2000
    return path


@pytest.fixture(scope="session")
def validation_dataset(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("data") / "box_val.jsonl")
    export_oracle_dataset(ExportConfig(kind=ScenarioKind.BOX, episodes=5, seed=5000), path)
    return path


@pytest.fixture(scope="session")
def trained(oracle_dataset, tmp_path_factory):
    """Default training recipe: 2,000 oracle samples, 30 epochs (timed in its test)."""
    samples = load_dataset(oracle_dataset)[:2000]
    cfg = PlannerConfig()
    t0 = time.perf_counter()
    result = train_planner(augment_goal_permutations(samples),
                           TrainConfig(epochs=30, lr=0.2, batch_size=32, seed=0), cfg=cfg)
    elapsed = time.perf_counter() - t0
    path = str(tmp_path_factory.mktemp("params") / "planner.bin")
    save_params(result.params, path)
    return {"params": result.params, "path": path, "elapsed": elapsed, "cfg": cfg}


@pytest.fixture(scope="session")
def closed_loop(trained):
    """100 seeded episodes per cell for the closed-loop criteria."""
    suite = SuiteConfig(
        scenarios=(ScenarioKind.BOX, ScenarioKind.FURNITURE, ScenarioKind.BARRIER),
        planners=(PlannerChoice.ORACLE,),
        episodes=100, seed_base=0)
    report_oracle, logs_oracle = run_benchmark(suite)
    learned_suite = SuiteConfig(scenarios=(ScenarioKind.BOX,),
                                planners=(PlannerChoice.LEARNED,), episodes=100,
                                seed_base=0, params_path=trained["path"])
    report_learned, logs_learned = run_benchmark(learned_suite)
    apf_suite = SuiteConfig(scenarios=(ScenarioKind.BARRIER,),
                            planners=(PlannerChoice.APF,), episodes=100, seed_base=0)
    report_apf, logs_apf = run_benchmark(apf_suite)
    cells = {}
    for rep, logs in ((report_oracle, logs_oracle), (report_learned, logs_learned),
                      (report_apf, logs_apf)):
        for cell in rep["cells"]:
            cells[(cell["scenario"], cell["planner"])] = (cell, logs[(cell["scenario"],
                                                                      cell["planner"])])
    return cells


# --- criteria ---------------------------------------------------------------------

def test_retrieval_correctness_by_construction():
    items = default_items()
    rng = random.Random(0)
    cases = []
    for i in range(100):
        target = items[i % len(items)]
        others = rng.sample([it for it in items if it != target], 2)
        pool_items = [target] + others
        rng.shuffle(pool_items)
        pool = pool_from_descriptors([(f"e{j}", d) for j, d in enumerate(pool_items)], 64)
        cases.append((target, pool))
    t0 = time.perf_counter()
    correct = 0
    for target, pool in cases:
        prompt = encode_instruction(Instruction(f"fly to the {target}"), list(items))
        result = retrieve(prompt, pool, RetrievalConfig(logit_scale=100.0, dim=64))
        correct += pool[result.best_index].descriptor == target
    elapsed = time.perf_counter() - t0
    report("retrieval correctness: 100/100 direct instructions, < 1 s",
           correct == 100 and elapsed < 1.0, f"{correct}/100 in {elapsed:.3f}s")


def test_similarity_and_softmax_unit_suite():
    one_hot = Embedding(values=np.array([1.0] + [0.0] * 63, dtype=np.float32))
    pool = [GoalPoolEntry(id="e", descriptor="x", embedding=one_hot)]
    s = score_pool(one_hot, pool, RetrievalConfig(logit_scale=100.0))[0]
    ok = abs(s - 100.0) <= 1e-12

    p = softmax(np.array([math.log(2.0), 0.0]))
    ok &= abs(p[0] - 2 / 3) <= 1e-12 and abs(p[1] - 1 / 3) <= 1e-12
    u = softmax(np.zeros(3))
    ok &= np.all(np.abs(u - 1 / 3) <= 1e-12)

    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        n = rng.integers(2, 12)
        scores = rng.uniform(-1.0, 1.0, size=n) * rng.choice([1.0, 10.0, 1e3])
        probs = softmax(scores)
        ok &= np.all(np.isfinite(probs)) and np.all((probs >= 0) & (probs <= 1))
        worst = max(worst, abs(float(probs.sum()) - 1.0))
    ok &= worst <= 1e-9
    report("similarity/softmax closed forms at 1e-12; 1,000 random score vectors sum to 1 +- 1e-9",
           bool(ok), f"worst sum error {worst:.1e}")


def test_waypoint_scaling_exactness():
    ok = scale_waypoint((1.0, 0.0), v_max=1.0, f_c=15.0) == (1 / 15, 0.0)
    rng = np.random.default_rng(1)
    for _ in range(1000):
        x, y = rng.uniform(-1, 1, size=2)
        v_max = float(rng.uniform(0.1, 3.0))
        f_c = float(rng.uniform(1.0, 50.0))
        s = v_max / f_c
        first = scale_waypoint((x, y), v_max, f_c)
        second = scale_waypoint((x, y), v_max, f_c)
        ok &= first == (x * s, y * s) and first == second
    report("waypoint scaling bitwise-exact on 1,000 random inputs; (1,0) -> (1/15, 0)", bool(ok))


def test_gradient_check():
    t0 = time.perf_counter()
    rep = run_gradcheck(seed=0)
    elapsed = time.perf_counter() - t0
    report("analytic gradients match central differences (rel err < 1e-4, < 30 s)",
           rep.passed and elapsed < 30.0,
           f"worst {rep.worst:.2e} in {elapsed:.1f}s")


def test_imitation_learning_signal(trained, validation_dataset):
    cfg = trained["cfg"]
    val = load_dataset(validation_dataset)
    frames, fused, wp_t, _ = samples_to_arrays(val, cfg)

    def wp_mse(params):
        raw, _ = _forward_batch(frames, fused, params)
        _, wps = _outputs_from_raw(raw, cfg.horizon)
        return float(np.mean((wps - wp_t) ** 2))

    untrained = wp_mse(init_params(cfg, seed=0))
    final = wp_mse(trained["params"])
    ratio = final / untrained
    report("training on 2,000 oracle samples / 30 epochs cuts val waypoint MSE below 10%, < 10 min",
           ratio < 0.10 and trained["elapsed"] < 600.0,
           f"ratio {ratio:.3f}, train {trained['elapsed']:.0f}s")


def test_closed_loop_success_rates(closed_loop):
    sr = {key: cell["metrics"]["SR"] for key, (cell, _) in closed_loop.items()}
    ok = sr[("box", "oracle")] >= 90.0
    ok &= sr[("furniture", "oracle")] >= 80.0
    ok &= sr[("barrier", "oracle")] >= 70.0
    ok &= sr[("box", "learned")] >= 50.0
    ok &= sr[("barrier", "apf")] < sr[("barrier", "oracle")]

    trap = run_episode(EpisodeConfig(planner=PlannerChoice.APF, use_u_trap=True,
                                     instruction="fly to the blue backpack"))
    ok &= trap.outcome is EpisodeStatus.TIMEOUT
    detail = (f"oracle box/furniture/barrier = {sr[('box', 'oracle')]:.0f}/"
              f"{sr[('furniture', 'oracle')]:.0f}/{sr[('barrier', 'oracle')]:.0f}, "
              f"learned box = {sr[('box', 'learned')]:.0f}, "
              f"apf barrier = {sr[('barrier', 'apf')]:.0f}, u-trap {trap.outcome.value}")
    report("closed-loop SR thresholds and potential-field ordering", bool(ok), detail)


def test_metric_oracle_equivalence(closed_loop):
    worst = 0.0
    ok = True
    for (kind, planner), (cell, logs) in closed_loop.items():
        n = len(logs)
        sr = os_ = spl = ne = 0.0
        for lg in logs:
            scn = generate_scenario(ScenarioKind(kind), lg.config["seed"])
            goal = scn.goal_by_id(lg.target_goal_id)
            dists = [math.hypot(x - goal.position[0], y - goal.position[1])
                     for x, y, _ in lg.poses]
            path = sum(math.hypot(b[0] - a[0], b[1] - a[1])
                       for a, b in zip(lg.poses, lg.poses[1:]))
            success = dists[-1] <= 0.5
            sr += success
            os_ += min(dists) <= 0.5
            if success:
                spl += lg.shortest_path / max(path, lg.shortest_path)
            ne += dists[-1]
        m = cell["metrics"]
        errs = [abs(m["SR"] - 100.0 * sr / n), abs(m["OS"] - 100.0 * os_ / n),
                abs(m["SPL"] - spl / n), abs(m["NE"] - ne / n)]
        worst = max(worst, *errs)
        ok &= all(e < 1e-9 for e in errs)
        ok &= m["OS"] >= m["SR"] and m["SPL"] <= m["SR"] / 100.0 + 1e-12
    report("independent metric recompute matches reports to 1e-9; OS >= SR, SPL <= SR/100",
           bool(ok), f"worst diff {worst:.1e}")


def test_cli_determinism(tmp_path):
    env_out = []
    for name in ("a", "b"):
        out = str(tmp_path / f"episode_{name}.jsonl")
        proc = subprocess.run([sys.executable, "-m", "vlnav.cli", "run", "--scenario",
                               "furniture", "--seed", "5", "--planner", "apf", "--out", out],
                              capture_output=True)
        assert proc.returncode == 0
        env_out.append(open(out, "rb").read())
    ok = env_out[0] == env_out[1]

    suite = {"scenarios": ["box"], "planners": ["oracle", "straight"],
             "episodes": 3, "seed_base": 0}
    suite_path = str(tmp_path / "suite.json")
    json.dump(suite, open(suite_path, "w"))
    reports = []
    for name, workers in (("r1", "1"), ("r2", "1"), ("rp", "2")):
        out = str(tmp_path / f"{name}.json")
        proc = subprocess.run([sys.executable, "-m", "vlnav.cli", "bench", "--suite",
                               suite_path, "--workers", workers, "--out", out],
                              capture_output=True)
        assert proc.returncode == 0, proc.stderr
        reports.append(open(out, "rb").read())
    ok &= reports[0] == reports[1] == reports[2]
    report("CLI reruns byte-identical, including parallel benchmark", bool(ok))


def test_pool_round_trip(tmp_path):
    pool = pool_from_descriptors(
        [("g0", "blue backpack"), ("g1", "pink toy"), ("g2", "apriltag")], 64)
    path = str(tmp_path / "pool.vlfe")
    write_pool(pool, path)
    again = read_pool(path)
    ok = all(a.embedding.values.tobytes() == b.embedding.values.tobytes()
             and a.id == b.id and a.descriptor == b.descriptor
             for a, b in zip(pool, again))

    raw = open(path, "rb").read()
    corrupted = str(tmp_path / "bad.vlfe")

    open(corrupted, "wb").write(b"XXXX" + raw[4:])
    with pytest.raises(PoolFormatError):
        read_pool(corrupted)

    open(corrupted, "wb").write(raw[:-9])
    with pytest.raises(PoolFormatError):
        read_pool(corrupted)

    bad = bytearray(raw)
    vec_off = 16 + 2 + len(b"g0") + 2 + len(b"blue backpack")
    vec = np.frombuffer(bytes(bad[vec_off:vec_off + 256]), dtype="<f4") * 0.7
    bad[vec_off:vec_off + 256] = vec.astype("<f4").tobytes()
    open(corrupted, "wb").write(bytes(bad))
    with pytest.raises(PoolFormatError):
        read_pool(corrupted)

    report("pool file round-trip bit-exact; magic/truncation/norm violations rejected", bool(ok))
