"""Evolutionary policy search with tournament selection.

The search keeps a fixed-size pool of scored policies.  Each step draws two
distinct members, takes the lower-scoring one as parent, evaluates a
single-label mutation of it, adds the child, and evicts the pool's worst
member, so the pool never shrinks.  The best policy ever evaluated (not
merely the best in the final pool) is the search result.

Ties break deterministically: the first-drawn contestant wins the
tournament, the oldest member loses eviction.  The evaluator derives its
seeds from policy content, so re-discovering a policy reproduces its score
and caching is sound.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasetgen import Dataset, generate_dataset
from .errors import RetryExhausted
from .policy import Policy, mutate, random_policy
from .rng import as_generator, derive_seed
from .surrogate import TrainConfig, evaluate_fitness, train_surrogate

#: Finite stand-in score for policies whose dataset generation keeps failing;
#: selection weeds them out instead of crashing the search.
FAILURE_SCORE = 1e30


@dataclass(frozen=True)
class ScoredPolicy:
    policy: Policy
    score: float
    trial: int  # trial index at evaluation time (0 for the initial pool)
    age: int  # global creation order, used for oldest-first tie-breaks

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("scores must be finite")


@dataclass(frozen=True)
class SearchConfig:
    population: int = 32
    trials: int = 1_000
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class StepRecord:
    trial: int
    parent: Policy
    child: Policy
    child_score: float
    removed_score: float
    best_score: float


@dataclass
class SearchState:
    population: list[ScoredPolicy]
    trials_done: int
    best: ScoredPolicy
    seed: int
    next_age: int
    history: list[StepRecord] = field(default_factory=list)
    rng: np.random.Generator = None

    def best_policy(self) -> Policy:
        return self.best.policy


def policy_hash(p: Policy) -> str:
    return hashlib.sha256(p.to_json().encode("utf-8")).hexdigest()[:12]


def init_population(cfg: SearchConfig, evaluator) -> SearchState:
    """Evaluate a fresh random pool of ``cfg.population`` policies."""
    rng = as_generator(derive_seed(cfg.seed, "evolution"))
    pool = []
    for age in range(cfg.population):
        pol = random_policy(rng)
        pool.append(ScoredPolicy(pol, float(evaluator(pol)), trial=0, age=age))
    best = min(pool, key=lambda sp: sp.score)
    return SearchState(
        population=pool,
        trials_done=0,
        best=best,
        seed=cfg.seed,
        next_age=cfg.population,
        rng=rng,
    )


def evolution_step(state: SearchState, evaluator) -> SearchState:
    """One tournament: pick two, mutate the winner, evict the pool's worst.

    Returns a new state; the input state is left untouched (the shared random
    stream advances even if the evaluator raises).
    """
    k = len(state.population)
    i, j = (int(x) for x in state.rng.choice(k, size=2, replace=False))
    first, second = state.population[i], state.population[j]
    parent = first if first.score <= second.score else second
    child_policy = mutate(parent.policy, state.rng)
    child_score = float(evaluator(child_policy))

    trial = state.trials_done + 1
    child = ScoredPolicy(child_policy, child_score, trial=trial, age=state.next_age)
    pool = state.population + [child]
    worst = max(pool, key=lambda sp: (sp.score, -sp.age))  # ties: oldest goes
    pool = [sp for sp in pool if sp is not worst]
    best = state.best if state.best.score <= child_score else child

    record = StepRecord(
        trial=trial,
        parent=parent.policy,
        child=child_policy,
        child_score=child_score,
        removed_score=worst.score,
        best_score=best.score,
    )
    return SearchState(
        population=pool,
        trials_done=trial,
        best=best,
        seed=state.seed,
        next_age=state.next_age + 1,
        history=state.history + [record],
        rng=state.rng,
    )


def run_search(
    cfg: SearchConfig,
    evaluator,
    state: SearchState | None = None,
    checkpoint_path=None,
    checkpoint_every: int = 0,
) -> SearchState:
    """Run (or resume) a search to ``cfg.trials`` evaluations past the pool.

    ``evaluator`` maps a Policy to a finite score; lower is better.  Passing a
    loaded checkpoint state resumes exactly where it stopped.
    """
    if state is None:
        state = init_population(cfg, evaluator)
    while state.trials_done < cfg.trials:
        state = evolution_step(state, evaluator)
        if (
            checkpoint_path is not None
            and checkpoint_every > 0
            and state.trials_done % checkpoint_every == 0
        ):
            save_checkpoint(state, checkpoint_path)
    return state


# ---------------------------------------------------------------------------
# The dataset-search evaluator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvaluatorConfig:
    objects_per_dataset: int = 400
    points_per_cloud: int = 256
    train: TrainConfig = TrainConfig()
    seed: int = 0
    threads: int = 1


class AutosynthEvaluator:
    """Score a policy by how well its synthetic dataset trains the surrogate.

    Pipeline per policy: expand the policy into a dataset (seeded from the
    run seed plus the policy's canonical bytes), train the reconstruction
    model on it, and return the model's mean Chamfer error on the target
    dataset.  Scores are cached by policy value, so each policy is evaluated
    at most once per run; generation failures score ``FAILURE_SCORE``.
    """

    def __init__(self, cfg: EvaluatorConfig, target: Dataset):
        if target.points_per_cloud != cfg.points_per_cloud:
            raise ValueError(
                "target cloud size must match the evaluator's points_per_cloud"
            )
        self.cfg = cfg
        self.target = target
        self.cache: dict[tuple[int, ...], float] = {}
        self.evaluations = 0

    def __call__(self, p: Policy) -> float:
        key = p.labels
        if key in self.cache:
            return self.cache[key]
        self.evaluations += 1
        canonical = p.to_json()
        try:
            dataset = generate_dataset(
                p,
                self.cfg.objects_per_dataset,
                self.cfg.points_per_cloud,
                seed=derive_seed(self.cfg.seed, "dataset", canonical),
                threads=self.cfg.threads,
            )
            from dataclasses import replace

            train_cfg = replace(
                self.cfg.train, seed=derive_seed(self.cfg.seed, "train", canonical)
            )
            params, _ = train_surrogate(dataset, train_cfg)
            score = float(evaluate_fitness(params, self.target))
        except RetryExhausted:
            score = FAILURE_SCORE
        self.cache[key] = score
        return score


# ---------------------------------------------------------------------------
# History CSV and checkpoints
# ---------------------------------------------------------------------------

HISTORY_HEADER = "trial,parent_hash,child_labels,child_score,best_score"


def _labels_str(p: Policy) -> str:
    return "".join(str(x) for x in p.labels)


def write_history_csv(history: list[StepRecord], path) -> None:
    lines = [HISTORY_HEADER]
    for rec in history:
        lines.append(
            f"{rec.trial},{policy_hash(rec.parent)},{_labels_str(rec.child)},"
            f"{rec.child_score!r},{rec.best_score!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_history_csv(path) -> list[dict]:
    """Parse a history CSV into row dicts; raises ValueError with the
    offending row number on malformed input."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != HISTORY_HEADER:
        raise ValueError("row 1: missing or wrong header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"row {lineno}: expected 5 fields, got {len(parts)}")
        try:
            rows.append(
                {
                    "trial": int(parts[0]),
                    "parent_hash": parts[1],
                    "child_labels": parts[2],
                    "child_score": float(parts[3]),
                    "best_score": float(parts[4]),
                }
            )
        except ValueError as err:
            raise ValueError(f"row {lineno}: {err}") from None
    return rows


_CHECKPOINT_VERSION = 1


def save_checkpoint(state: SearchState, path) -> None:
    """Full search state as JSON, including the random stream."""
    payload = {
        "version": _CHECKPOINT_VERSION,
        "seed": state.seed,
        "trials_done": state.trials_done,
        "next_age": state.next_age,
        "best": _scored_to_json(state.best),
        "population": [_scored_to_json(sp) for sp in state.population],
        "history": [
            {
                "trial": rec.trial,
                "parent": list(rec.parent.labels),
                "child": list(rec.child.labels),
                "child_score": rec.child_score,
                "removed_score": rec.removed_score,
                "best_score": rec.best_score,
            }
            for rec in state.history
        ],
        "rng_state": state.rng.bit_generator.state,
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_checkpoint(path) -> SearchState:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    rng = np.random.default_rng()
    rng.bit_generator.state = data["rng_state"]
    return SearchState(
        population=[_scored_from_json(x) for x in data["population"]],
        trials_done=int(data["trials_done"]),
        best=_scored_from_json(data["best"]),
        seed=int(data["seed"]),
        next_age=int(data["next_age"]),
        history=[
            StepRecord(
                trial=int(rec["trial"]),
                parent=Policy(tuple(rec["parent"])),
                child=Policy(tuple(rec["child"])),
                child_score=float(rec["child_score"]),
                removed_score=float(rec["removed_score"]),
                best_score=float(rec["best_score"]),
            )
            for rec in data["history"]
        ],
        rng=rng,
    )


def _scored_to_json(sp: ScoredPolicy) -> dict:
    return {
        "labels": list(sp.policy.labels),
        "score": sp.score,
        "trial": sp.trial,
        "age": sp.age,
    }


def _scored_from_json(data: dict) -> ScoredPolicy:
    return ScoredPolicy(
        policy=Policy(tuple(data["labels"])),
        score=float(data["score"]),
        trial=int(data["trial"]),
        age=int(data["age"]),
    )
