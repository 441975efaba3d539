"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The three end-to-end
criteria (guidance-beats-random, diversity trend, determinism replay) are
marked slow; everything else completes in seconds.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

from autosynth import datasetgen as dg
from autosynth import evolution as ev
from autosynth import geometry as g
from autosynth import meshing as m
from autosynth import policy as pol
from autosynth import surrogate as sg
from autosynth.cli import main as cli_main
from autosynth.rng import derive_seed
from conftest import brute_chamfer, mesh_area


@contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except Exception:
        print(f"[acceptance] criterion {number:2d} FAIL: {description}", flush=True)
        raise
    print(f"[acceptance] criterion {number:2d} PASS: {description}", flush=True)


def test_criterion_01_search_space_cardinality():
    with criterion(1, "search space holds exactly 31,381,059,609 policies"):
        assert pol.search_space_size() == 31_381_059_609


def test_criterion_02_chamfer_matches_brute_force():
    with criterion(2, "accelerated Chamfer equals brute force within 1e-9 on 1000 pairs"):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 129))
            x = rng.standard_normal((n, 3))
            y = rng.standard_normal((n, 3))
            assert abs(sg.chamfer(x, y) - brute_chamfer(x, y)) <= 1e-9


def test_criterion_03_chamfer_hand_value():
    with criterion(3, "chamfer({0,e1},{0,2e1}) = 0.5 exactly"):
        x = np.array([[0.0, 0, 0], [1, 0, 0]])
        y = np.array([[0.0, 0, 0], [2, 0, 0]])
        assert sg.chamfer(x, y) == 0.5


def test_criterion_04_gradient_check():
    with criterion(4, "analytic gradient matches finite differences (rel err < 1e-4)"):
        rng = np.random.default_rng(7)
        params = sg.init_params(16, latent=4, encoder_widths=(8, 12),
                                decoder_widths=(10,), seed=1)
        batch = rng.standard_normal((3, 16, 3))
        _, grads = sg.loss_and_grad(params, batch)
        flat_params = params.flat
        flat_grads = grads.flat
        eps = 1e-5
        for k in rng.choice(flat_params.size, size=20, replace=False):
            orig = flat_params[k]
            flat_params[k] = orig + eps
            up, _ = sg.loss_and_grad(params, batch)
            flat_params[k] = orig - eps
            down, _ = sg.loss_and_grad(params, batch)
            flat_params[k] = orig
            fd = (up - down) / (2 * eps)
            rel = abs(fd - flat_grads[k]) / max(abs(fd), abs(flat_grads[k]), 1e-8)
            assert rel < 1e-4, f"coordinate {k}: rel err {rel}"


def test_criterion_05_sdf_mesh_consistency():
    with criterion(5, "mesh vertices sit on the SDF zero set (200 random objects)"):
        bound = 1.5 * m.DEFAULT_GRID.cell_diagonal
        # canonical marching-cubes meshes of the curved kinds
        for kind in (g.Sphere(), g.Cone(), g.Cylinder(), g.Torus()):
            mesh = m.canonical_mesh(kind)
            residual = np.abs(g.eval_primitive_sdf(kind, mesh.vertices))
            assert residual.max() <= bound, f"canonical {kind}"
        # per-part residuals across 200 random generated objects
        rng = np.random.default_rng(5)
        for i in range(200):
            policy = pol.random_policy(rng)
            spec, _ = dg.generate_object(
                pol.to_ranges(policy), derive_seed(50, "object", i)
            )
            for kind, transform, plane in spec.parts:
                part = m.clip_mesh(
                    m.transform_mesh(m.canonical_mesh(kind), transform), plane
                )
                node = g.Truncated(g.Transformed(kind, transform), plane)
                residual = np.abs(g.eval_sdf(node, part.vertices))
                assert residual.max() <= bound
        # sphere area at the default 64-cell lattice
        sphere = m.marching_cubes(
            g.Sphere(), m.GridSpec((-1.2, -1.2, -1.2), (1.2, 1.2, 1.2), 64)
        )
        area = mesh_area(sphere.vertices, sphere.faces)
        assert abs(area - 4 * np.pi) / (4 * np.pi) < 0.02


def test_criterion_06_composition_semantics():
    with criterion(6, "truncation = max and union = min at 10,000 probes, exact"):
        rng = np.random.default_rng(6)
        for trial in range(20):
            probes = rng.uniform(-2.0, 2.0, (10_000, 3))
            kinds = [
                g.PRIMITIVE_KINDS[int(k)]
                for k in rng.integers(0, 9, size=int(rng.integers(2, 5)))
            ]
            n = rng.standard_normal(3)
            n /= np.linalg.norm(n)
            plane = g.Plane(tuple(rng.uniform(-0.5, 0.5, 3)), tuple(n))
            truncated = g.Truncated(kinds[0], plane)
            expected = np.maximum(g.eval_sdf(kinds[0], probes), plane.sdf(probes))
            assert np.array_equal(g.eval_sdf(truncated, probes), expected)
            union = g.Union(tuple(kinds))
            expected = np.min([g.eval_sdf(k, probes) for k in kinds], axis=0)
            assert np.array_equal(g.eval_sdf(union, probes), expected)


def test_criterion_07_mutation_contract():
    with criterion(7, "10,000 mutations at Hamming distance one; 88 children per policy"):
        rng = np.random.default_rng(77)
        base = pol.random_policy(rng)
        seen = set()
        for _ in range(10_000):
            child = pol.mutate(base, rng)
            dist = sum(a != b for a, b in zip(child.labels, base.labels))
            assert dist == 1
            assert child != base
            seen.add(child.labels)
        expected = set()
        for position in range(pol.N_LABELS):
            for label in range(pol.LABEL_VALUES):
                if label != base.labels[position]:
                    labels = list(base.labels)
                    labels[position] = label
                    expected.add(tuple(labels))
        assert len(expected) == 88
        assert seen == expected


def test_criterion_08_population_invariant():
    with criterion(8, "pool size fixed; evicted member always held the pool max"):
        stub = lambda p: float(sum(p.labels))
        state = ev.init_population(ev.SearchConfig(population=8, trials=1, seed=8), stub)
        for _ in range(1000):
            before = [sp.score for sp in state.population]
            state = ev.evolution_step(state, stub)
            record = state.history[-1]
            assert len(state.population) == 8
            assert record.removed_score == max(before + [record.child_score])


def test_criterion_09_planted_optimum_convergence():
    with criterion(9, "planted optimum reached within 500 trials in >= 9/10 runs"):
        hits = 0
        for seed in range(10):
            hidden = pol.random_policy(derive_seed(seed, "hidden"))
            fitness = lambda p: float(
                sum(a != b for a, b in zip(p.labels, hidden.labels))
            )
            state = ev.run_search(
                ev.SearchConfig(population=16, trials=500, seed=seed), fitness
            )
            hits += state.best.score == 0.0
        assert hits >= 9, f"only {hits}/10 runs found the hidden policy"


# -- end-to-end criteria ----------------------------------------------------

_DESK_TRAIN = sg.TrainConfig(
    iterations=1_000, dtype="float32", seed=0, batch_size=8, learning_rate=1e-3
)
_DESK_POINTS = 128


def _guidance_run(seed: int) -> tuple[float, float]:
    """One seeded search-vs-random comparison on the bundled demo target."""
    target = dg.build_target_dataset(
        dg.demo_target_mesh(), 100, _DESK_POINTS, seed=derive_seed(seed, "target")
    )
    evaluator = ev.AutosynthEvaluator(
        ev.EvaluatorConfig(
            objects_per_dataset=100,
            points_per_cloud=_DESK_POINTS,
            train=_DESK_TRAIN,
            seed=derive_seed(seed, "evaluator"),
        ),
        target,
    )
    state = ev.run_search(
        ev.SearchConfig(population=8, trials=150, seed=seed), evaluator
    )
    random_scores = sorted(
        evaluator(pol.random_policy(derive_seed(seed, "baseline", i)))
        for i in range(20)
    )
    median = 0.5 * (random_scores[9] + random_scores[10])
    return state.best.score, median


@pytest.mark.slow
def test_criterion_10_guidance_beats_random():
    with criterion(10, "searched best <= random median in >= 2/3 seeded runs"):
        with ProcessPoolExecutor(max_workers=2) as pool:
            results = list(pool.map(_guidance_run, [0, 1, 2]))
        wins = sum(best <= median for best, median in results)
        print(f"[acceptance]   guidance runs (best vs random median): {results}")
        assert wins >= 2, f"search won only {wins}/3 runs: {results}"


def _trend_fitness(seed: int, size: int) -> float:
    mid = pol.Policy((4,) * 11)
    held_out = dg.generate_dataset(
        mid, 100, _DESK_POINTS, seed=derive_seed(11, "held", seed)
    )
    train_set = dg.generate_dataset(
        mid, size, _DESK_POINTS, seed=derive_seed(11, "train", seed, size)
    )
    cfg = replace(_DESK_TRAIN, seed=derive_seed(11, "cfg", seed, size))
    params, _ = sg.train_surrogate(train_set, cfg)
    return sg.evaluate_fitness(params, held_out)


@pytest.mark.slow
def test_criterion_11_diversity_trend():
    with criterion(11, "median held-out fitness non-increasing over {4,40,400} objects"):
        jobs = [(seed, size) for size in (4, 40, 400) for seed in (0, 1, 2)]
        with ProcessPoolExecutor(max_workers=2) as pool:
            scores = list(pool.map(_trend_fitness, *zip(*jobs)))
        by_size = {size: [] for size in (4, 40, 400)}
        for (seed, size), score in zip(jobs, scores):
            by_size[size].append(score)
        medians = [float(np.median(by_size[size])) for size in (4, 40, 400)]
        print(f"[acceptance]   medians for sizes 4/40/400: {medians}")
        assert medians[0] >= medians[1] >= medians[2]


@pytest.mark.slow
def test_criterion_12_determinism_replay(tmp_path):
    with criterion(12, "desk-scale search replays byte-identical at any thread count"):
        cfg = {
            "seed": 12,
            "target_mesh": "demo",
            "target_aug": 10,
            "points_per_cloud": 48,
            "objects_per_dataset": 10,
            "population": 4,
            "trials": 8,
            "surrogate": {
                "iterations": 60,
                "dtype": "float32",
                "latent": 8,
                "encoder_widths": [8, 16],
                "decoder_widths": [16, 32],
            },
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        histories = []
        for name, threads in (("a", "1"), ("b", "2"), ("c", "1")):
            out = tmp_path / name
            code = cli_main([
                "search", "--config", str(cfg_path),
                "--out", str(out), "--threads", threads,
            ])
            assert code == 0
            histories.append((out / "history.csv").read_bytes())
        assert histories[0] == histories[1] == histories[2]


def test_criterion_13_round_trips(tmp_path):
    with criterion(13, "dataset export/import, policy JSON, checkpoint resume"):
        # dataset export -> import
        dataset = dg.generate_dataset(pol.Policy((2,) * 11), 3, 64, seed=13)
        manifest = dg.export_dataset(dataset, tmp_path / "ds")
        loaded = dg.import_dataset(manifest)
        for a, b in zip(dataset.entries, loaded.entries):
            assert a.cloud.tobytes() == b.cloud.tobytes()
            assert np.array_equal(a.mesh.vertices, b.mesh.vertices)
            assert np.array_equal(a.mesh.faces, b.mesh.faces)
        # policy JSON round trip
        policy = pol.random_policy(13)
        assert pol.Policy.from_json(policy.to_json()) == policy
        text = policy.to_json()
        assert pol.Policy.from_json(text).to_json() == text
        # checkpoint resume reproduces the uninterrupted history
        stub = lambda p: float(sum(p.labels))
        full = ev.run_search(ev.SearchConfig(population=6, trials=24, seed=13), stub)
        half = ev.run_search(ev.SearchConfig(population=6, trials=12, seed=13), stub)
        ev.save_checkpoint(half, tmp_path / "cp.json")
        resumed = ev.run_search(
            ev.SearchConfig(population=6, trials=24, seed=13),
            stub,
            state=ev.load_checkpoint(tmp_path / "cp.json"),
        )
        assert resumed.history == full.history
