"""Scenario suites, metrics, episode logging, and file export.

Metrics follow the violation-step convention: a step counts once toward
the social violation count m when at least one zone intersection is
present, and once toward the ego count k when anything sits inside the
ego-safety circle.  Scores are averaged per episode over all executed
steps, failed episodes included.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .world import EnvConfig, NavEnv, Status

FLOAT_FMT = "%.9g"


@dataclass(frozen=True)
class StepRecord:
    step: int
    t: float
    x: float
    y: float
    heading: float
    v_l: float
    omega: float
    a_x: float
    a_y: float
    r_ego: float
    r_social: float
    r_goal: float
    ego_violation: bool
    social_violations: int
    pedestrians: list = field(default_factory=list)  # (x, y, heading) triples


@dataclass
class EpisodeLog:
    policy: str
    suite: str
    seed: int
    map_seed: int
    crowd_seed: int
    config: dict
    records: list[StepRecord]
    outcome: str
    arriving_time: float | None

    @property
    def steps(self) -> int:
        return len(self.records)

    def ego_violation_steps(self) -> int:
        return sum(1 for r in self.records if r.ego_violation)

    def social_violation_steps(self) -> int:
        return sum(1 for r in self.records if r.social_violations >= 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["records"] = [asdict(r) for r in self.records]
        return d

    @staticmethod
    def from_dict(d: dict) -> "EpisodeLog":
        records = [StepRecord(**{**r, "pedestrians": [tuple(p) for p in r["pedestrians"]]}) for r in d["records"]]
        return EpisodeLog(**{**d, "records": records})

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)

    @staticmethod
    def load(path) -> "EpisodeLog":
        with open(path) as f:
            return EpisodeLog.from_dict(json.load(f))


@dataclass(frozen=True)
class Metrics:
    runs: int
    success_rate: float  # percent
    arriving_time_mean: float | None  # successes only
    arriving_time_std: float | None
    ego_score: float  # 0-100
    social_score: float  # 0-100


# ---------------------------------------------------------------------------
# Suites


def suite_config(suite: str, base: EnvConfig | None = None) -> EnvConfig:
    """Environment configuration for a named suite.

    mapless: randomized static maps, no crowd; crowd:<kind>:<n>: an open
    area with a structured crowd and walk-ins; combined: both.
    """
    base = base if base is not None else EnvConfig()
    if suite == "mapless":
        return replace(base, scenario=None, crowd=replace(base.crowd, count=0, walk_in_probability=0.0))
    if suite.startswith("crowd:") or suite.startswith("combined:") or suite == "combined":
        parts = suite.split(":")
        if parts[0] == "crowd":
            if len(parts) != 3:
                raise ValueError(f"crowd suite spec must be crowd:<kind>:<count>, got {suite!r}")
            kind, count = parts[1], int(parts[2])
            crowd = replace(
                base.crowd,
                count=count,
                area=(5.0, 5.0),
                center=(0.0, 0.0),
                walk_in_probability=0.02,
                stop_go_probability=0.01,
            )
            return replace(base, scenario=kind, obstacle_count_range=(0, 0), crowd=crowd)
        # combined: static obstacles plus a random crowd
        count = int(parts[1]) if len(parts) > 1 else 8
        crowd = replace(
            base.crowd,
            count=count,
            area=(5.0, 5.0),
            center=(0.0, 0.0),
            walk_in_probability=0.02,
            stop_go_probability=0.01,
        )
        return replace(base, scenario="random", crowd=crowd)
    raise ValueError(
        f"unknown suite {suite!r}; expected mapless, crowd:<kind>:<count>, or combined[:<count>]"
    )


def run_episode(
    policy,
    env_config: EnvConfig,
    suite: str,
    seed: int,
    map_seed: int,
    crowd_seed: int,
) -> EpisodeLog:
    env = NavEnv(env_config)
    obs = env.reset(map_seed=map_seed, crowd_seed=crowd_seed)
    policy.begin_episode(obs)
    records: list[StepRecord] = []
    arriving_time = None
    while True:
        if getattr(policy, "wants_state", False):
            policy.observe_state(
                (env.robot.x, env.robot.y, env.robot.heading),
                (env.goal.x, env.goal.y),
                [
                    (p.position.x, p.position.y, p.velocity.x, p.velocity.y, p.radius)
                    for p in env.peds
                ],
            )
        a_x, a_y = policy.act(obs)
        outcome = env.step((a_x, a_y))
        info = outcome.info
        robot = info["robot"]
        records.append(
            StepRecord(
                step=info["steps"],
                t=info["sim_time"],
                x=robot.x,
                y=robot.y,
                heading=robot.heading,
                v_l=info["twist"][0],
                omega=info["twist"][1],
                a_x=info["action"][0],
                a_y=info["action"][1],
                r_ego=outcome.reward_parts[0],
                r_social=outcome.reward_parts[1],
                r_goal=outcome.reward_parts[2],
                ego_violation=info["ego_violation"],
                social_violations=info["social_violations"],
                pedestrians=info["pedestrians"],
            )
        )
        obs = outcome.observation
        if outcome.done is not Status.RUNNING:
            if outcome.done is Status.REACHED:
                arriving_time = info["sim_time"]
            break
    return EpisodeLog(
        policy=policy.name,
        suite=suite,
        seed=seed,
        map_seed=map_seed,
        crowd_seed=crowd_seed,
        config=env_config.to_dict(),
        records=records,
        outcome=env.status.value,
        arriving_time=arriving_time,
    )


def episode_seeds(root_seed: int, runs: int) -> list[tuple[int, int, int]]:
    """(run seed, map seed, crowd seed) triples expanded from one root."""
    state = np.random.SeedSequence(root_seed).generate_state(2 * runs)
    return [(root_seed + r, int(state[2 * r]), int(state[2 * r + 1])) for r in range(runs)]


def run_suite(
    policy,
    suite: str,
    runs: int = 10,
    root_seed: int = 0,
    base_config: EnvConfig | None = None,
) -> list[EpisodeLog]:
    """One log per run; failures are logged, never raised."""
    cfg = suite_config(suite, base_config)
    logs = []
    for seed, map_seed, crowd_seed in episode_seeds(root_seed, runs):
        logs.append(run_episode(policy, cfg, suite, seed, map_seed, crowd_seed))
    return logs


# ---------------------------------------------------------------------------
# Metrics


def compute_metrics(logs: list[EpisodeLog]) -> Metrics:
    if not logs:
        raise ValueError("compute_metrics requires at least one episode log")
    successes = [log for log in logs if log.outcome == Status.REACHED.value]
    times = [log.arriving_time for log in successes]
    ego_scores = []
    social_scores = []
    for log in logs:
        n = max(log.steps, 1)
        ego_scores.append((1.0 - log.ego_violation_steps() / n) * 100.0)
        social_scores.append((1.0 - log.social_violation_steps() / n) * 100.0)
    return Metrics(
        runs=len(logs),
        success_rate=100.0 * len(successes) / len(logs),
        arriving_time_mean=float(np.mean(times)) if times else None,
        arriving_time_std=float(np.std(times)) if times else None,
        ego_score=float(np.mean(ego_scores)),
        social_score=float(np.mean(social_scores)),
    )


# ---------------------------------------------------------------------------
# Export

TRAJECTORY_COLUMNS = [
    "step",
    "t",
    "x",
    "y",
    "heading",
    "v_l",
    "omega",
    "a_x",
    "a_y",
    "r_ego",
    "r_social",
    "r_goal",
    "ego_violation",
    "social_violations",
    "outcome",
    "pedestrians",
]

EXPORT_FORMATS = ("trajectory-table", "metrics-table", "curve-series")


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def _traj_filename(log: EpisodeLog) -> str:
    return f"traj__{log.suite.replace(':', '-')}__{log.policy}__{log.seed}.csv"


def export_trajectory_table(log: EpisodeLog, out_dir) -> str:
    """Flat CSV, one row per policy step; pedestrians packed x:y:h;..."""
    path = os.path.join(out_dir, _traj_filename(log))
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for r in log.records:
        peds = ";".join(":".join(_fmt(v) for v in p) for p in r.pedestrians)
        row = [
            str(r.step),
            _fmt(r.t),
            _fmt(r.x),
            _fmt(r.y),
            _fmt(r.heading),
            _fmt(r.v_l),
            _fmt(r.omega),
            _fmt(r.a_x),
            _fmt(r.a_y),
            _fmt(r.r_ego),
            _fmt(r.r_social),
            _fmt(r.r_goal),
            str(int(r.ego_violation)),
            str(r.social_violations),
            log.outcome,
            peds,
        ]
        lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return path


def parse_trajectory_table(path) -> dict:
    """Recover per-step fields sufficient to recompute every metric."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        if header != TRAJECTORY_COLUMNS:
            raise ValueError(f"unexpected trajectory table columns in {path}")
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    cols = {name: i for i, name in enumerate(TRAJECTORY_COLUMNS)}
    outcome = rows[-1][cols["outcome"]] if rows else "timeout"
    return {
        "steps": len(rows),
        "outcome": outcome,
        "t": [float(r[cols["t"]]) for r in rows],
        "x": [float(r[cols["x"]]) for r in rows],
        "y": [float(r[cols["y"]]) for r in rows],
        "ego_violations": sum(int(r[cols["ego_violation"]]) for r in rows),
        "social_violation_steps": sum(1 for r in rows if int(r[cols["social_violations"]]) >= 1),
        "arriving_time": float(rows[-1][cols["t"]]) if outcome == "reached" else None,
    }


def metrics_from_tables(paths) -> Metrics:
    """Recompute suite metrics from exported trajectory tables."""
    parsed = [parse_trajectory_table(p) for p in paths]
    if not parsed:
        raise ValueError("no trajectory tables given")
    times = [p["arriving_time"] for p in parsed if p["outcome"] == "reached"]
    ego = [(1.0 - p["ego_violations"] / max(p["steps"], 1)) * 100.0 for p in parsed]
    social = [(1.0 - p["social_violation_steps"] / max(p["steps"], 1)) * 100.0 for p in parsed]
    return Metrics(
        runs=len(parsed),
        success_rate=100.0 * len(times) / len(parsed),
        arriving_time_mean=float(np.mean(times)) if times else None,
        arriving_time_std=float(np.std(times)) if times else None,
        ego_score=float(np.mean(ego)),
        social_score=float(np.mean(social)),
    )


def export_metrics_table(logs: list[EpisodeLog], out_dir) -> str:
    """Structured key-value document with the four headline metrics."""
    metrics = compute_metrics(logs)
    suite = logs[0].suite
    policy = logs[0].policy
    doc = {
        "suite": suite,
        "policy": policy,
        "runs": metrics.runs,
        "metrics": {
            "success_rate": metrics.success_rate,
            "arriving_time": (
                {"mean": metrics.arriving_time_mean, "std": metrics.arriving_time_std}
                if metrics.arriving_time_mean is not None
                else None
            ),
            "ego_score": metrics.ego_score,
            "social_score": metrics.social_score,
        },
    }
    path = os.path.join(out_dir, f"metrics__{suite.replace(':', '-')}__{policy}.json")
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
    return path


def export_curve_series(logs: list[EpisodeLog], out_dir) -> str:
    """Per-episode summary series for plotting."""
    suite = logs[0].suite
    policy = logs[0].policy
    path = os.path.join(out_dir, f"episodes__{suite.replace(':', '-')}__{policy}.csv")
    lines = ["episode,seed,outcome,steps,arriving_time,ego_score,social_score,reward_sum"]
    for i, log in enumerate(logs):
        n = max(log.steps, 1)
        reward_sum = sum(r.r_ego + r.r_social + r.r_goal for r in log.records)
        lines.append(
            ",".join(
                [
                    str(i),
                    str(log.seed),
                    log.outcome,
                    str(log.steps),
                    _fmt(log.arriving_time) if log.arriving_time is not None else "",
                    _fmt((1.0 - log.ego_violation_steps() / n) * 100.0),
                    _fmt((1.0 - log.social_violation_steps() / n) * 100.0),
                    _fmt(reward_sum),
                ]
            )
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return path


def export(logs: list[EpisodeLog], fmt: str, out_dir) -> list[str]:
    if not logs:
        raise ValueError("nothing to export")
    os.makedirs(out_dir, exist_ok=True)
    if fmt == "trajectory-table":
        return [export_trajectory_table(log, out_dir) for log in logs]
    if fmt == "metrics-table":
        return [export_metrics_table(logs, out_dir)]
    if fmt == "curve-series":
        return [export_curve_series(logs, out_dir)]
    raise ValueError(f"unknown export format {fmt!r}; expected one of {EXPORT_FORMATS}")
