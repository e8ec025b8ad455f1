"""The subnet configuration space and its genome operations.

A configuration picks an input resolution, a depth per stage, and a kernel
size and expand ratio per layer slot.  Slot lists always carry entries for
the maximum depth; entries beyond a stage's active depth are inert genes
that survive sampling and mutation but never affect the resolved network.

Resolving a configuration yields a profilable skeleton: stem (stride 2),
then per stage a transition block at the stage's entry resolution (stride 2
for the four downsampling boundaries, stride 1 for the last stage) followed
by the remaining active blocks at the halved resolution, then the head.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from functools import reduce
from itertools import product

from .errors import ResolutionError, ValidationError
from .memory import MBBlockShape, NetworkSkeleton, expanded_channels
from .planner import NUM_STAGES, ChannelSchedule, ReferenceConfig, plan_schedule

DEPTH_OPTIONS = (2, 3, 4)
KERNEL_OPTIONS = (3, 5, 7)
EXPAND_OPTIONS = (2, 3, 4)
RESOLUTION_OPTIONS = (128, 160, 192, 224)


@dataclass(frozen=True)
class SupernetSpace:
    """Option sets plus the channel schedule shared by every subnet."""

    schedule: ChannelSchedule
    num_stages: int = NUM_STAGES
    depth_options: tuple[int, ...] = DEPTH_OPTIONS
    kernel_options: tuple[int, ...] = KERNEL_OPTIONS
    expand_options: tuple[int, ...] = EXPAND_OPTIONS
    resolution_options: tuple[int, ...] = RESOLUTION_OPTIONS

    def __post_init__(self):
        for name in ("depth_options", "kernel_options", "expand_options", "resolution_options"):
            opts = getattr(self, name)
            if not opts or list(opts) != sorted(opts):
                raise ValidationError(f"{name} must be non-empty and sorted ascending")
        if self.num_stages < 1:
            raise ValidationError("num_stages must be >= 1")
        if len(self.schedule.stage_widths) != self.num_stages:
            raise ValidationError(
                f"schedule has {len(self.schedule.stage_widths)} stage widths for "
                f"{self.num_stages} stages"
            )

    @property
    def max_depth(self) -> int:
        return max(self.depth_options)

    def to_json_dict(self) -> dict:
        return {
            "num_stages": self.num_stages,
            "depth_options": list(self.depth_options),
            "kernel_options": list(self.kernel_options),
            "expand_options": list(self.expand_options),
            "resolution_options": list(self.resolution_options),
            "schedule": self.schedule.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SupernetSpace":
        return cls(
            schedule=ChannelSchedule.from_json_dict(d["schedule"]),
            num_stages=d.get("num_stages", NUM_STAGES),
            depth_options=tuple(d["depth_options"]),
            kernel_options=tuple(d["kernel_options"]),
            expand_options=tuple(d["expand_options"]),
            resolution_options=tuple(d["resolution_options"]),
        )


def default_space() -> SupernetSpace:
    """The standard space: published option sets over the numerically
    balanced schedule at the reference configuration."""
    return SupernetSpace(schedule=plan_schedule(ReferenceConfig()))


@dataclass(frozen=True)
class SubnetConfig:
    """One point of the space.  ``kernels`` and ``expands`` hold one inner
    list per stage, each of length max depth."""

    resolution: int
    stage_depths: tuple[int, ...]
    kernels: tuple[tuple[int, ...], ...]
    expands: tuple[tuple[int, ...], ...]

    def to_json_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "stages": [
                {
                    "depth": self.stage_depths[s],
                    "kernels": list(self.kernels[s]),
                    "expands": list(self.expands[s]),
                }
                for s in range(len(self.stage_depths))
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SubnetConfig":
        stages = d["stages"]
        return cls(
            resolution=d["resolution"],
            stage_depths=tuple(s["depth"] for s in stages),
            kernels=tuple(tuple(s["kernels"]) for s in stages),
            expands=tuple(tuple(s["expands"]) for s in stages),
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))


def maximal_config(space: SupernetSpace) -> SubnetConfig:
    """Every gene at its largest option."""
    d = space.max_depth
    return SubnetConfig(
        resolution=space.resolution_options[-1],
        stage_depths=(space.depth_options[-1],) * space.num_stages,
        kernels=((space.kernel_options[-1],) * d,) * space.num_stages,
        expands=((space.expand_options[-1],) * d,) * space.num_stages,
    )


def validate(config: SubnetConfig, space: SupernetSpace) -> list[str]:
    """Every option-set violation, each with the path of the offending
    field; an empty list means the config is valid."""
    violations = []
    if config.resolution not in space.resolution_options:
        violations.append(
            f"resolution: {config.resolution} not in resolution_options "
            f"{list(space.resolution_options)}"
        )
    for name, lists in (("kernels", config.kernels), ("expands", config.expands)):
        if len(lists) != space.num_stages:
            violations.append(
                f"{name}: expected {space.num_stages} stages, got {len(lists)}"
            )
    if len(config.stage_depths) != space.num_stages:
        violations.append(
            f"stage_depths: expected {space.num_stages} stages, got "
            f"{len(config.stage_depths)}"
        )
        return violations
    for s, depth in enumerate(config.stage_depths):
        if depth not in space.depth_options:
            violations.append(
                f"stages[{s}].depth: {depth} not in depth_options "
                f"{list(space.depth_options)}"
            )
    for name, lists, options in (
        ("kernels", config.kernels, space.kernel_options),
        ("expands", config.expands, space.expand_options),
    ):
        for s, inner in enumerate(lists[: space.num_stages]):
            if len(inner) != space.max_depth:
                violations.append(
                    f"stages[{s}].{name}: expected {space.max_depth} slots, "
                    f"got {len(inner)}"
                )
                continue
            for j, v in enumerate(inner):
                if v not in options:
                    violations.append(
                        f"stages[{s}].{name}[{j}]: {v} not in options {list(options)}"
                    )
    return violations


def require_valid(config: SubnetConfig, space: SupernetSpace) -> None:
    violations = validate(config, space)
    if violations:
        raise ValidationError("; ".join(violations))


def count_subnets(space: SupernetSpace) -> int:
    """Exact number of distinct subnets: per stage, sum over depths of
    (|kernels| * |expands|)^depth, raised to the number of stages.
    Resolution is a runtime choice and does not multiply the count."""
    per_layer = len(space.kernel_options) * len(space.expand_options)
    per_stage = sum(per_layer ** d for d in space.depth_options)
    return per_stage ** space.num_stages


def enumerate_subnets(space: SupernetSpace, limit: int = 100_000):
    """Brute-force enumeration of active-gene assignments (small spaces
    only); yields configs with inert slots padded by the first options."""
    per_stage = []
    for _ in range(space.num_stages):
        stage_choices = []
        for depth in space.depth_options:
            for genes in product(
                product(space.kernel_options, space.expand_options), repeat=depth
            ):
                stage_choices.append((depth, genes))
        per_stage.append(stage_choices)
    total = reduce(lambda a, b: a * len(b), per_stage, 1)
    if total > limit:
        raise ValidationError(f"space too large to enumerate ({total} > {limit})")
    pad_k, pad_e = space.kernel_options[0], space.expand_options[0]
    for combo in product(*per_stage):
        depths, kernels, expands = [], [], []
        for depth, genes in combo:
            depths.append(depth)
            ks = [g[0] for g in genes] + [pad_k] * (space.max_depth - depth)
            es = [g[1] for g in genes] + [pad_e] * (space.max_depth - depth)
            kernels.append(tuple(ks))
            expands.append(tuple(es))
        yield SubnetConfig(
            resolution=space.resolution_options[0],
            stage_depths=tuple(depths),
            kernels=tuple(kernels),
            expands=tuple(expands),
        )


def _sample_with(space: SupernetSpace, rng: random.Random) -> SubnetConfig:
    # fixed draw order: resolution, then per stage depth and per-slot genes;
    # index-by-random() keeps this hot path cheap for rejection sampling
    rnd = rng.random
    d_opts, k_opts, e_opts = space.depth_options, space.kernel_options, space.expand_options
    n_d, n_k, n_e = len(d_opts), len(k_opts), len(e_opts)
    md = space.max_depth
    resolution = space.resolution_options[int(rnd() * len(space.resolution_options))]
    depths, kernels, expands = [], [], []
    for _ in range(space.num_stages):
        depths.append(d_opts[int(rnd() * n_d)])
        kernels.append(tuple(k_opts[int(rnd() * n_k)] for _ in range(md)))
        expands.append(tuple(e_opts[int(rnd() * n_e)] for _ in range(md)))
    return SubnetConfig(
        resolution=resolution,
        stage_depths=tuple(depths),
        kernels=tuple(kernels),
        expands=tuple(expands),
    )


def sample_uniform(space: SupernetSpace, seed: int) -> SubnetConfig:
    """Draw each gene uniformly from its option set; deterministic in the
    seed.  Inert slots are drawn too so later depth growth can use them."""
    return _sample_with(space, random.Random(seed))


def mutate(
    config: SubnetConfig,
    space: SupernetSpace,
    prob: float,
    seed: int,
    freeze_resolution: bool = False,
) -> SubnetConfig:
    """Resample each gene independently with probability ``prob``."""
    if not 0 <= prob <= 1:
        raise ValidationError(f"prob must be in [0, 1], got {prob}")
    rng = random.Random(seed)
    resolution = config.resolution
    if not freeze_resolution and rng.random() < prob:
        resolution = rng.choice(space.resolution_options)
    depths, kernels, expands = [], [], []
    for s in range(space.num_stages):
        d = config.stage_depths[s]
        if rng.random() < prob:
            d = rng.choice(space.depth_options)
        depths.append(d)
        kernels.append(
            tuple(
                rng.choice(space.kernel_options) if rng.random() < prob else k
                for k in config.kernels[s]
            )
        )
        expands.append(
            tuple(
                rng.choice(space.expand_options) if rng.random() < prob else e
                for e in config.expands[s]
            )
        )
    return SubnetConfig(
        resolution=resolution,
        stage_depths=tuple(depths),
        kernels=tuple(kernels),
        expands=tuple(expands),
    )


def crossover(a: SubnetConfig, b: SubnetConfig, seed: int) -> SubnetConfig:
    """Gene-wise uniform crossover; both parents must share one genome
    shape."""
    if len(a.stage_depths) != len(b.stage_depths) or any(
        len(ka) != len(kb) for ka, kb in zip(a.kernels, b.kernels)
    ):
        raise ValidationError("parents come from different spaces")
    rng = random.Random(seed)
    pick = lambda x, y: x if rng.random() < 0.5 else y
    depths, kernels, expands = [], [], []
    resolution = pick(a.resolution, b.resolution)
    for s in range(len(a.stage_depths)):
        depths.append(pick(a.stage_depths[s], b.stage_depths[s]))
        kernels.append(
            tuple(pick(x, y) for x, y in zip(a.kernels[s], b.kernels[s]))
        )
        expands.append(
            tuple(pick(x, y) for x, y in zip(a.expands[s], b.expands[s]))
        )
    return SubnetConfig(
        resolution=resolution,
        stage_depths=tuple(depths),
        kernels=tuple(kernels),
        expands=tuple(expands),
    )


def _stage_entry_sizes(resolution: int, num_stages: int) -> list[int]:
    sizes = []
    size = resolution
    for _ in range(num_stages):
        if size % 2 != 0:
            raise ResolutionError(
                f"resolution {resolution} does not divide through the stride stages"
            )
        size //= 2
        sizes.append(size)
    return sizes


def resolve(
    config: SubnetConfig,
    space: SupernetSpace,
    num_classes: int = 1000,
    include_classifier: bool = False,
) -> NetworkSkeleton:
    """Build the profilable skeleton for a valid configuration."""
    require_valid(config, space)
    sched = space.schedule
    entry_sizes = _stage_entry_sizes(config.resolution, space.num_stages)
    blocks: list[MBBlockShape] = []
    labels: list[str] = []
    prev_width = sched.stem_width
    for s in range(space.num_stages):
        width = sched.stage_widths[s]
        depth = config.stage_depths[s]
        downsample = s < space.num_stages - 1
        entry = entry_sizes[s]
        if downsample and entry % 2 != 0:
            raise ResolutionError(
                f"stage {s + 1} entry size {entry} is odd but the stage downsamples"
            )
        inner = entry // 2 if downsample else entry
        for j in range(depth):
            first = j == 0
            blocks.append(
                MBBlockShape(
                    c_in=prev_width if first else width,
                    c_out=width,
                    expand=config.expands[s][j],
                    kernel=config.kernels[s][j],
                    stride=2 if (first and downsample) else 1,
                    input_size=entry if first else inner,
                )
            )
            labels.append(f"stage{s + 1}.block{j + 1}")
        prev_width = width
    return NetworkSkeleton(
        resolution=config.resolution,
        stem_width=sched.stem_width,
        blocks=tuple(blocks),
        head_width=sched.head_width,
        include_classifier=include_classifier,
        num_classes=num_classes,
        block_labels=tuple(labels),
    )


def config_peak_items(
    config: SubnetConfig,
    space: SupernetSpace,
    include_classifier: bool = False,
    num_classes: int = 1000,
) -> int:
    """Peak items of a configuration, computed with plain integer arithmetic
    and no intermediate objects.  Agrees with profiling the resolved skeleton
    (tested); used on hot paths such as feasibility rejection sampling."""
    sched = space.schedule
    r = config.resolution
    half = r // 2
    peak = 3 * r * r + 27 * sched.stem_width + sched.stem_width * half * half
    prev = sched.stem_width
    entry = half
    num_stages = space.num_stages
    for s in range(num_stages):
        width = sched.stage_widths[s]
        downsample = s < num_stages - 1
        inner = entry // 2 if downsample else entry
        e2 = entry * entry
        n2 = inner * inner
        depth = config.stage_depths[s]
        ks = config.kernels[s]
        es = config.expands[s]
        # transition block: prev -> width at the entry size
        e_ch = expanded_channels(prev, es[0])
        k2 = ks[0] * ks[0]
        t = prev * e2 + prev * e_ch + e_ch * e2  # expansion
        if t > peak:
            peak = t
        t = e_ch * e2 + e_ch * k2 + e_ch * n2  # depthwise
        if t > peak:
            peak = t
        t = e_ch * n2 + e_ch * width + width * n2  # projection
        if t > peak:
            peak = t
        # within blocks at the inner size
        for j in range(1, depth):
            e_ch = expanded_channels(width, es[j])
            k2 = ks[j] * ks[j]
            t = width * n2 + width * e_ch + e_ch * n2
            if t > peak:
                peak = t
            t = e_ch * (2 * n2 + k2)
            if t > peak:
                peak = t
            t = e_ch * n2 + e_ch * width + width * n2
            if t > peak:
                peak = t
        prev = width
        entry = inner
    head = prev * entry * entry + prev * sched.head_width + sched.head_width * entry * entry
    if head > peak:
        peak = head
    if include_classifier:
        cls = sched.head_width + sched.head_width * num_classes + num_classes
        if cls > peak:
            peak = cls
    return peak
