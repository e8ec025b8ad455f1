"""Evolutionary search over the subnet space under a hard peak-memory cap.

Infeasible candidates are rejected and resampled rather than penalized: the
memory cap models a device limit, so every individual ever admitted to the
population satisfies it.  Runs are deterministic in the seed; all randomness
flows through one generator and candidates are processed in a fixed order.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import InfeasibleError, ValidationError
from .space import (
    SubnetConfig,
    SupernetSpace,
    _sample_with,
    config_peak_items,
    crossover,
    mutate,
    require_valid,
)

Scorer = Callable[[SubnetConfig], float]

_SEED_RANGE = 2 ** 63
CHILD_RETRIES = 50
INIT_ATTEMPTS_PER_SLOT = 10_000


@dataclass(frozen=True)
class SearchConstraint:
    """Hard cap on per-layer items.  The classifier stays out of the peak by
    default, matching how constrained deployments replace it per task."""

    max_peak_items: int
    exclude_classifier: bool = True

    def __post_init__(self):
        if self.max_peak_items < 1:
            raise ValidationError("max_peak_items must be positive")


@dataclass(frozen=True)
class SearchParams:
    population: int = 100
    generations: int = 50
    parent_fraction: float = 0.25
    mutation_prob: float = 0.1
    mutation_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.generations < 1:
            raise ValidationError("population must be >= 2 and generations >= 1")
        for name in ("parent_fraction", "mutation_prob", "mutation_fraction"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_score: float
    mean_score: float


@dataclass(frozen=True)
class SearchResult:
    best_config: SubnetConfig
    best_score: float
    best_peak_items: int
    history: tuple[GenerationStats, ...]
    evaluations: int

    def to_json_dict(self) -> dict:
        return {
            "best_config": self.best_config.to_json_dict(),
            "best_score": self.best_score,
            "best_peak_items": self.best_peak_items,
            "history": [
                {
                    "generation": h.generation,
                    "best_score": h.best_score,
                    "mean_score": h.mean_score,
                }
                for h in self.history
            ],
            "evaluations": self.evaluations,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SearchResult":
        return cls(
            best_config=SubnetConfig.from_json_dict(d["best_config"]),
            best_score=d["best_score"],
            best_peak_items=d["best_peak_items"],
            history=tuple(
                GenerationStats(h["generation"], h["best_score"], h["mean_score"])
                for h in d["history"]
            ),
            evaluations=d["evaluations"],
        )


def feasible(
    config: SubnetConfig, space: SupernetSpace, constraint: SearchConstraint
) -> bool:
    require_valid(config, space)
    peak = config_peak_items(
        config, space, include_classifier=not constraint.exclude_classifier
    )
    return peak <= constraint.max_peak_items


class _Evaluator:
    """Counts every peak evaluation so searches can report their cost."""

    def __init__(self, space, constraint):
        self.space = space
        self.constraint = constraint
        self.evaluations = 0
        self.tightest = None

    def peak(self, config) -> int:
        self.evaluations += 1
        p = config_peak_items(
            config,
            self.space,
            include_classifier=not self.constraint.exclude_classifier,
        )
        if self.tightest is None or p < self.tightest:
            self.tightest = p
        return p

    def ok(self, config) -> bool:
        return self.peak(config) <= self.constraint.max_peak_items


def _fresh_feasible(space, ev, rng, attempts=INIT_ATTEMPTS_PER_SLOT) -> SubnetConfig:
    for _ in range(attempts):
        cfg = _sample_with(space, rng)
        if ev.ok(cfg):
            return cfg
    raise InfeasibleError(
        f"no feasible configuration found in {attempts} uniform draws under "
        f"{ev.constraint.max_peak_items} items (tightest peak seen: {ev.tightest})",
        tightest_peak=ev.tightest,
    )


def search(
    space: SupernetSpace,
    constraint: SearchConstraint,
    scorer: Scorer,
    params: SearchParams,
) -> SearchResult:
    """Evolve a feasible population and return the best-scoring individual
    ever seen, deterministically in ``params.seed``.

    Each generation keeps the top ``parent_fraction`` by score and refills
    the rest with mutation (``mutation_fraction`` of the children) and
    gene-wise crossover; children failing the constraint are retried up to
    a fixed budget and then replaced by fresh feasible uniform samples.
    """
    rng = random.Random(params.seed)
    ev = _Evaluator(space, constraint)

    population = [_fresh_feasible(space, ev, rng) for _ in range(params.population)]
    scores = [scorer(c) for c in population]

    n_parents = max(1, round(params.parent_fraction * params.population))
    n_children = params.population - n_parents
    n_mutation = round(params.mutation_fraction * n_children)

    best_config = None
    best_score = float("-inf")
    history: list[GenerationStats] = []

    for gen in range(params.generations):
        order = sorted(
            range(len(population)), key=lambda i: (-scores[i], i)
        )
        if scores[order[0]] > best_score:
            best_score = scores[order[0]]
            best_config = population[order[0]]
        history.append(
            GenerationStats(
                generation=gen,
                best_score=scores[order[0]],
                mean_score=sum(scores) / len(scores),
            )
        )
        parents = [population[i] for i in order[:n_parents]]
        parent_scores = [scores[i] for i in order[:n_parents]]

        children: list[SubnetConfig] = []
        while len(children) < n_children:
            use_mutation = len(children) < n_mutation
            child = None
            for _ in range(CHILD_RETRIES):
                if use_mutation:
                    parent = parents[rng.randrange(n_parents)]
                    cand = mutate(
                        parent, space, params.mutation_prob, rng.randrange(_SEED_RANGE)
                    )
                else:
                    a = parents[rng.randrange(n_parents)]
                    b = parents[rng.randrange(n_parents)]
                    cand = crossover(a, b, rng.randrange(_SEED_RANGE))
                if ev.ok(cand):
                    child = cand
                    break
            if child is None:
                child = _fresh_feasible(space, ev, rng)
            children.append(child)

        population = parents + children
        scores = parent_scores + [scorer(c) for c in children]

    order = sorted(range(len(population)), key=lambda i: (-scores[i], i))
    if scores[order[0]] > best_score:
        best_score = scores[order[0]]
        best_config = population[order[0]]

    best_peak = config_peak_items(
        best_config, space, include_classifier=not constraint.exclude_classifier
    )
    assert best_peak <= constraint.max_peak_items
    return SearchResult(
        best_config=best_config,
        best_score=best_score,
        best_peak_items=best_peak,
        history=tuple(history),
        evaluations=ev.evaluations,
    )


@dataclass(frozen=True)
class SweepPoint:
    constraint_items: int
    result: SearchResult | None
    error: str | None = None


def sweep(
    space: SupernetSpace,
    constraints: Sequence[int],
    scorer: Scorer,
    params: SearchParams,
    exclude_classifier: bool = True,
) -> list[SweepPoint]:
    """One search per constraint level, ascending.  Infeasible levels are
    recorded and the sweep continues."""
    if list(constraints) != sorted(constraints):
        raise ValidationError("constraints must be sorted ascending")
    points = []
    for level in constraints:
        constraint = SearchConstraint(
            max_peak_items=level, exclude_classifier=exclude_classifier
        )
        try:
            points.append(
                SweepPoint(level, search(space, constraint, scorer, params))
            )
        except InfeasibleError as exc:
            points.append(SweepPoint(level, None, error=str(exc)))
    return points


def write_sweep_csv(points: Sequence[SweepPoint], fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["constraint_items", "best_score", "best_peak_items", "evaluations"])
    for p in points:
        if p.result is None:
            writer.writerow([p.constraint_items, "", "", ""])
        else:
            writer.writerow(
                [
                    p.constraint_items,
                    repr(p.result.best_score),
                    p.result.best_peak_items,
                    p.result.evaluations,
                ]
            )
