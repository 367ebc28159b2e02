"""Experiment orchestration: generate -> pretrain -> classify -> fine-tune
-> report, with stage markers, config hashing, and resumable runs.

Directory layout under the setting's output directory:

    dataset.jsonl
    manifest.json
    pretrain/seed_<s>/...   pretrain/eval.json
    classify.json
    finetune/<method>/seed_<s>.json (+ .csv eval curve)
    report/analysis.json    report/summary.csv    report/curve_<method>.csv

Regime labels are persisted by the classify stage before any fine-tuning
output exists, so the prediction is made ahead of the outcome.
"""

from __future__ import annotations

import concurrent.futures as cf
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .agents import (
    Td3Hyper,
    agent_from_bc_fqe,
    bc_pretrain,
    fqe,
    load_agent,
    offline_rl_pretrain,
    policy_fn,
    save_agent,
)
from .data import (
    OfflineDataset,
    dataset_return,
    generate_dataset,
    generate_mixed_dataset,
    load_dataset,
    save_dataset,
)
from .envs import (
    BehaviorSpec,
    EnvSpec,
    compute_reference_scores,
    env_spec,
    evaluate_policy,
    make_env,
)
from .errors import ConfigError, MissingInputError
from .finetune import (
    ALL_METHODS,
    DATA_CENTRIC,
    POLICY_CENTRIC,
    FinetuneConfig,
    RunLog,
    last_k_eval_stat,
    run_finetune,
)
from .fsio import read_json, write_json_atomic, write_text_atomic
from .metrics import (
    COMPARABLE,
    INCONCLUSIVE,
    ClassComparison,
    ConfusionMatrix,
    EvalCurve,
    SampleStats,
    compare_classes,
    decompose,
    tost_classify,
)
from .seeding import stable_seed

MAP_COMPARABLE = "comparable"
MAP_DROP = "drop"

STAGE_GEN_DATA = "gen_data"
STAGE_PRETRAIN = "pretrain"
STAGE_CLASSIFY = "classify"
STAGE_FINETUNE = "finetune"
STAGE_REPORT = "report"

PRETRAIN_OFFLINE_RL = "offline_rl"
PRETRAIN_BC_FQE = "bc_fqe"


@dataclass
class ExperimentConfig:
    setting: str
    env: EnvSpec
    behavior: list[tuple[BehaviorSpec, int]]  # (behavior, n_traj) segments
    pretrain_kind: str = PRETRAIN_OFFLINE_RL
    pretrain_steps: int = 30_000
    pretrain_beta: float = 0.4
    fqe_steps: int | None = None  # bc_fqe only; defaults to pretrain_steps // 5
    methods: tuple[str, ...] = ALL_METHODS
    seeds: tuple[int, ...] = tuple(range(10))
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    hyper: Td3Hyper = field(default_factory=Td3Hyper)
    dataset_seed: int = 0
    reference_seed: int | None = None
    reference_episodes: int = 100
    tost_delta: float = 0.05
    tost_alpha: float = 0.05
    map_inconclusive: str = MAP_COMPARABLE
    last_k: int = 10
    out_dir: str | None = None

    def __post_init__(self):
        if not self.setting:
            raise ConfigError("setting name must be non-empty")
        if not self.behavior:
            raise ConfigError("need at least one behavior segment")
        if not self.methods:
            raise ConfigError("method list must be non-empty")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be non-empty and distinct")
        if self.pretrain_kind not in (PRETRAIN_OFFLINE_RL, PRETRAIN_BC_FQE):
            raise ConfigError(f"unknown pretrainer {self.pretrain_kind!r}")
        if self.map_inconclusive not in (MAP_COMPARABLE, MAP_DROP):
            raise ConfigError("map_inconclusive must be 'comparable' or 'drop'")
        if self.finetune.beta is None:
            self.finetune.beta = self.pretrain_beta
        self.finetune.validate()

    @property
    def resolved_reference_seed(self) -> int:
        if self.reference_seed is not None:
            return self.reference_seed
        return stable_seed("reference", self.dataset_seed)

    @property
    def resolved_fqe_steps(self) -> int:
        return self.fqe_steps if self.fqe_steps is not None else max(1, self.pretrain_steps // 5)

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "env": self.env.to_dict(),
            "behavior": [{**b.to_dict(), "n_traj": n} for b, n in self.behavior],
            "pretrain": {
                "kind": self.pretrain_kind,
                "steps": self.pretrain_steps,
                "beta": self.pretrain_beta,
                "fqe_steps": self.fqe_steps,
            },
            "methods": list(self.methods),
            "seeds": list(self.seeds),
            "finetune": self.finetune.to_dict(),
            "agent": self.hyper.to_dict(),
            "dataset_seed": self.dataset_seed,
            "reference_seed": self.reference_seed,
            "reference_episodes": self.reference_episodes,
            "tost": {"delta": self.tost_delta, "alpha": self.tost_alpha},
            "map_inconclusive": self.map_inconclusive,
            "last_k": self.last_k,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {
            "setting",
            "env",
            "behavior",
            "pretrain",
            "methods",
            "seeds",
            "finetune",
            "agent",
            "dataset_seed",
            "reference_seed",
            "reference_episodes",
            "tost",
            "map_inconclusive",
            "last_k",
            "out_dir",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            env = env_spec(data["env"]["kind"], data["env"].get("horizon"))
            raw_behavior = data["behavior"]
            if isinstance(raw_behavior, dict):
                raw_behavior = [raw_behavior]
            behavior = [
                (BehaviorSpec.from_dict(b), int(b.get("n_traj", 1))) for b in raw_behavior
            ]
            pre = data.get("pretrain", {})
            ft = FinetuneConfig(**data.get("finetune", {}))
            hyper_data = data.get("agent", {})
            hyper = Td3Hyper.from_dict({**Td3Hyper().to_dict(), **hyper_data})
            tost = data.get("tost", {})
            return cls(
                setting=data["setting"],
                env=env,
                behavior=behavior,
                pretrain_kind=pre.get("kind", PRETRAIN_OFFLINE_RL),
                pretrain_steps=int(pre.get("steps", 30_000)),
                pretrain_beta=float(pre.get("beta", 0.4)),
                fqe_steps=pre.get("fqe_steps"),
                methods=tuple(data.get("methods", ALL_METHODS)),
                seeds=tuple(int(s) for s in data.get("seeds", range(10))),
                finetune=ft,
                hyper=hyper,
                dataset_seed=int(data.get("dataset_seed", 0)),
                reference_seed=data.get("reference_seed"),
                reference_episodes=int(data.get("reference_episodes", 100)),
                tost_delta=float(tost.get("delta", 0.05)),
                tost_alpha=float(tost.get("alpha", 0.05)),
                map_inconclusive=data.get("map_inconclusive", MAP_COMPARABLE),
                last_k=int(data.get("last_k", 10)),
                out_dir=data.get("out_dir"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = read_json(path)
        except FileNotFoundError as exc:
            raise MissingInputError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    @property
    def root(self) -> Path:
        return Path(self.out_dir if self.out_dir else f"runs/{self.setting}")


class Paths:
    def __init__(self, config: ExperimentConfig):
        root = config.root
        self.root = root
        self.manifest = root / "manifest.json"
        self.dataset = root / "dataset.jsonl"
        self.pretrain_dir = root / "pretrain"
        self.pretrain_eval = root / "pretrain" / "eval.json"
        self.classify = root / "classify.json"
        self.finetune_dir = root / "finetune"
        self.report_dir = root / "report"
        self.analysis = root / "report" / "analysis.json"

    def checkpoint(self, seed: int) -> Path:
        return self.pretrain_dir / f"seed_{seed}"

    def run_file(self, method: str, seed: int) -> Path:
        return self.finetune_dir / method / f"seed_{seed}.json"

    def run_csv(self, method: str, seed: int) -> Path:
        return self.finetune_dir / method / f"seed_{seed}.csv"


# --- manifest / stage markers ---


def _load_manifest(paths: Paths) -> dict:
    if paths.manifest.exists():
        return read_json(paths.manifest)
    return {"config_hash": None, "version": __version__, "stages": {}}


def _mark_stage(paths: Paths, config: ExperimentConfig, stage: str) -> None:
    manifest = _load_manifest(paths)
    manifest["config_hash"] = config.config_hash
    manifest["version"] = __version__
    manifest.setdefault("stages", {})[stage] = {
        "done": True,
        "completed_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    write_json_atomic(paths.manifest, manifest)


def stage_done(paths: Paths, stage: str) -> bool:
    manifest = _load_manifest(paths)
    return bool(manifest.get("stages", {}).get(stage, {}).get("done"))


def _require_stage(paths: Paths, stage: str) -> None:
    if not stage_done(paths, stage):
        raise MissingInputError(
            f"stage {stage!r} has not completed for {paths.root}; run it first"
        )


def _check_hash(config: ExperimentConfig, found: str | None, origin: str, allow_mixed: bool):
    if allow_mixed:
        return
    if found != config.config_hash:
        raise ConfigError(
            f"{origin} was produced under config hash {found!r}, current is "
            f"{config.config_hash!r}; pass --allow-mixed to override"
        )


# --- stage: gen-data ---


def cmd_gen_data(config: ExperimentConfig, force: bool = False) -> Path:
    paths = Paths(config)
    if paths.dataset.exists() and not force:
        raise ConfigError(f"{paths.dataset} already exists; use --force to overwrite")
    paths.root.mkdir(parents=True, exist_ok=True)
    reference = compute_reference_scores(
        config.env, seed=config.resolved_reference_seed, episodes=config.reference_episodes
    )
    if len(config.behavior) == 1:
        behavior, n_traj = config.behavior[0]
        dataset = generate_dataset(
            config.env, behavior, n_traj, seed=config.dataset_seed, reference=reference
        )
    else:
        dataset = generate_mixed_dataset(
            config.env, config.behavior, seed=config.dataset_seed, reference=reference
        )
    save_dataset(dataset, paths.dataset, extra_header={"config_hash": config.config_hash})
    _mark_stage(paths, config, STAGE_GEN_DATA)
    return paths.dataset


def _load_pipeline_dataset(config: ExperimentConfig, allow_mixed: bool = False) -> OfflineDataset:
    paths = Paths(config)
    _require_stage(paths, STAGE_GEN_DATA)
    with open(paths.dataset, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
    _check_hash(config, header.get("config_hash"), str(paths.dataset), allow_mixed)
    return load_dataset(paths.dataset)


# --- stage: pretrain ---


def _pretrain_one(config: ExperimentConfig, dataset: OfflineDataset, seed: int):
    """Pretrain and evaluate one seed; returns (mean, per_episode)."""
    paths = Paths(config)
    train_seed = stable_seed("pretrain", seed)
    if config.pretrain_kind == PRETRAIN_OFFLINE_RL:
        agent = offline_rl_pretrain(
            dataset, config.pretrain_steps, config.pretrain_beta, train_seed, config.hyper
        )
    else:
        actor = bc_pretrain(dataset, config.pretrain_steps, train_seed, config.hyper)
        critic = fqe(actor, dataset, config.resolved_fqe_steps, train_seed, config.hyper)
        agent = agent_from_bc_fqe(actor, critic, config.hyper)
    save_agent(
        agent,
        paths.checkpoint(seed),
        beta=config.pretrain_beta,
        extra={"config_hash": config.config_hash, "seed": seed},
    )
    result = evaluate_policy(
        policy_fn(agent),
        config.env,
        dataset.reference,
        episodes=config.finetune.eval_episodes,
        seed=stable_seed("pretrain-eval", seed),
    )
    return result.mean, result.per_episode


def _pretrain_worker(config_dict: dict, seed: int):
    config = ExperimentConfig.from_dict(config_dict)
    dataset = _cached_dataset(str(Paths(config).dataset))
    return seed, _pretrain_one(config, dataset, seed)


_DATASETS: dict[str, OfflineDataset] = {}


def _cached_dataset(path: str) -> OfflineDataset:
    if path not in _DATASETS:
        _DATASETS[path] = load_dataset(path)
    return _DATASETS[path]


def cmd_pretrain(config: ExperimentConfig, jobs: int = 1, force: bool = False) -> Path:
    paths = Paths(config)
    dataset = _load_pipeline_dataset(config)
    if paths.pretrain_eval.exists() and stage_done(paths, STAGE_PRETRAIN) and not force:
        return paths.pretrain_eval
    results: dict[int, tuple[float, list[float]]] = {}
    if jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_pretrain_worker, config.to_dict(), seed) for seed in config.seeds
            ]
            for fut in cf.as_completed(futures):
                seed, payload = fut.result()
                results[seed] = payload
    else:
        for seed in config.seeds:
            results[seed] = _pretrain_one(config, dataset, seed)
    record = {
        "config_hash": config.config_hash,
        "episodes": config.finetune.eval_episodes,
        "seeds": list(config.seeds),
        "means": [results[s][0] for s in config.seeds],
        "per_episode": [results[s][1] for s in config.seeds],
    }
    write_json_atomic(paths.pretrain_eval, record)
    _mark_stage(paths, config, STAGE_PRETRAIN)
    return paths.pretrain_eval


# --- stage: classify ---


def cmd_classify(config: ExperimentConfig, allow_mixed: bool = False) -> Path:
    paths = Paths(config)
    _require_stage(paths, STAGE_PRETRAIN)
    dataset = _load_pipeline_dataset(config, allow_mixed)
    record = read_json(paths.pretrain_eval)
    _check_hash(config, record.get("config_hash"), str(paths.pretrain_eval), allow_mixed)
    policy_stats = SampleStats.from_values(record["means"])
    per_traj, data_mean = dataset_return(dataset)
    data_stats = SampleStats.from_values(per_traj)
    label = tost_classify(policy_stats, data_stats, config.tost_delta, config.tost_alpha)
    payload = {
        "config_hash": config.config_hash,
        **label.to_dict(),
        "policy": {"mean": policy_stats.mean, "std": policy_stats.std, "n": policy_stats.n},
        "data": {"mean": data_stats.mean, "std": data_stats.std, "n": data_stats.n},
    }
    write_json_atomic(paths.classify, payload)
    _mark_stage(paths, config, STAGE_CLASSIFY)
    return paths.classify


# --- stage: finetune ---


def run_seed_for(config_seed: int, method: str, seed_index: int) -> int:
    """Seed of one fine-tuning run, derived from the configured seed value,
    the method, and the seed's position in the config list."""
    return stable_seed("run", config_seed, method, seed_index)


def _finetune_one(config: ExperimentConfig, dataset: OfflineDataset, method: str, seed: int):
    paths = Paths(config)
    agent = load_agent(paths.checkpoint(seed))
    ft = FinetuneConfig(**{**config.finetune.to_dict(), "method": method})
    env = make_env(config.env)
    run_seed = run_seed_for(seed, method, config.seeds.index(seed))
    log, _ = run_finetune(env, dataset, agent, ft, seed=run_seed)
    payload = {
        "config_hash": config.config_hash,
        "config_seed": seed,
        "run_seed": run_seed,
        **log.to_dict(),
    }
    write_json_atomic(paths.run_file(method, seed), payload)
    _write_curve_csv(paths.run_csv(method, seed), log)
    return method, seed


def _write_curve_csv(path: Path, log: RunLog) -> None:
    lines = []
    n_ep = len(log.eval_curve.points[0].per_episode) if log.eval_curve.points else 0
    lines.append("step,mean," + ",".join(f"ret_{i}" for i in range(n_ep)))
    for p in log.eval_curve.points:
        lines.append(f"{p.step},{p.mean!r}," + ",".join(repr(v) for v in p.per_episode))
    write_text_atomic(path, "\n".join(lines) + "\n")


def _finetune_worker(config_dict: dict, method: str, seed: int):
    config = ExperimentConfig.from_dict(config_dict)
    dataset = _cached_dataset(str(Paths(config).dataset))
    return _finetune_one(config, dataset, method, seed)


def _valid_run_file(path: Path, config: ExperimentConfig) -> bool:
    try:
        data = read_json(path)
        RunLog.from_dict(data)
        return data.get("config_hash") == config.config_hash
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        return False


def _quarantine(path: Path) -> None:
    n = 0
    while True:
        target = path.with_name(f"{path.name}.corrupt-{n}")
        if not target.exists():
            path.rename(target)
            return
        n += 1


def cmd_finetune(config: ExperimentConfig, jobs: int = 1, force: bool = False) -> list[Path]:
    paths = Paths(config)
    _require_stage(paths, STAGE_CLASSIFY)  # prediction recorded before outcomes
    dataset = _load_pipeline_dataset(config)
    todo = []
    for method in config.methods:
        (paths.finetune_dir / method).mkdir(parents=True, exist_ok=True)
        for seed in config.seeds:
            run_file = paths.run_file(method, seed)
            if run_file.exists():
                if not force and _valid_run_file(run_file, config):
                    continue
                if not force:
                    _quarantine(run_file)
            todo.append((method, seed))
    if jobs > 1 and todo:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_finetune_worker, config.to_dict(), m, s) for m, s in todo
            ]
            for fut in cf.as_completed(futures):
                fut.result()
    else:
        for method, seed in todo:
            _finetune_one(config, dataset, method, seed)
    _mark_stage(paths, config, STAGE_FINETUNE)
    return [paths.run_file(m, s) for m in config.methods for s in config.seeds]


# --- stage: report ---


def _mapped_regime(label: str, policy: str) -> str | None:
    if label != INCONCLUSIVE:
        return label
    if policy == MAP_COMPARABLE:
        return COMPARABLE
    return None  # drop


def _curve_stats(curves: list[EvalCurve]) -> dict:
    steps = [p.step for p in curves[0].points]
    table = np.array([[p.mean for p in c.points] for c in curves])
    mean = table.mean(axis=0)
    if table.shape[0] > 1:
        stderr = table.std(axis=0, ddof=1) / np.sqrt(table.shape[0])
    else:
        stderr = np.zeros_like(mean)
    return {
        "steps": steps,
        "mean": mean.tolist(),
        "ci_lo": (mean - 1.96 * stderr).tolist(),
        "ci_hi": (mean + 1.96 * stderr).tolist(),
    }


def cmd_report(config: ExperimentConfig, allow_mixed: bool = False) -> Path:
    paths = Paths(config)
    _require_stage(paths, STAGE_FINETUNE)
    dataset = _load_pipeline_dataset(config, allow_mixed)
    classify = read_json(paths.classify)
    _check_hash(config, classify.get("config_hash"), str(paths.classify), allow_mixed)
    _, data_mean = dataset_return(dataset)

    runs: dict[str, dict[int, RunLog]] = {}
    missing: list[str] = []
    aborted: list[str] = []
    for method in config.methods:
        runs[method] = {}
        for seed in config.seeds:
            run_file = paths.run_file(method, seed)
            if not run_file.exists():
                missing.append(f"{method}/seed_{seed}")
                continue
            data = read_json(run_file)
            _check_hash(config, data.get("config_hash"), str(run_file), allow_mixed)
            log = RunLog.from_dict(data)
            if log.aborted:
                aborted.append(f"{method}/seed_{seed}")
                continue
            runs[method][seed] = log

    methods_report = {}
    last_k_lists: dict[str, list[list[float]]] = {}
    for method in config.methods:
        logs = [runs[method][s] for s in config.seeds if s in runs[method]]
        if not logs:
            methods_report[method] = {"seeds": [], "note": "no completed runs"}
            continue
        k = config.last_k
        last_k_values = [log.eval_curve.means()[-k:] for log in logs]
        last_k_scalars = [last_k_eval_stat(log, k) for log in logs]
        decos = [decompose(log.eval_curve, data_mean) for log in logs]
        methods_report[method] = {
            "seeds": [log.seed for log in logs],
            "config_seeds": [s for s in config.seeds if s in runs[method]],
            "last_k_per_seed": last_k_scalars,
            "last_k_mean": float(np.mean(last_k_scalars)),
            "decomposition": {
                "per_seed": [
                    {
                        "prior": d.prior,
                        "stability": d.stability,
                        "plasticity": d.plasticity,
                        "final": d.final,
                    }
                    for d in decos
                ],
                "mean": {
                    "prior": float(np.mean([d.prior for d in decos])),
                    "stability": float(np.mean([d.stability for d in decos])),
                    "plasticity": float(np.mean([d.plasticity for d in decos])),
                    "final": float(np.mean([d.final for d in decos])),
                },
            },
            "curve": _curve_stats([log.eval_curve for log in logs]),
        }
        last_k_lists[method] = last_k_values

    policy_variants = {m: last_k_lists[m] for m in POLICY_CENTRIC if m in last_k_lists}
    data_variants = {m: last_k_lists[m] for m in DATA_CENTRIC if m in last_k_lists}
    comparison: ClassComparison | None = None
    if policy_variants and data_variants:
        comparison = compare_classes(policy_variants, data_variants, alpha=config.tost_alpha)

    mapped = _mapped_regime(classify["label"], config.map_inconclusive)
    analysis = {
        "setting": config.setting,
        "config_hash": config.config_hash,
        "regime": {**{k: classify[k] for k in ("label", "p_lower", "p_upper", "mean_diff", "delta", "alpha")}, "mapped": mapped},
        "dataset_score": classify["data"],
        "pretrained_score": classify["policy"],
        "methods": methods_report,
        "class_comparison": comparison.to_dict() if comparison else None,
        "confusion_cell": (
            {"regime": mapped, "winner": comparison.winner}
            if comparison and mapped is not None
            else None
        ),
        "completeness": {
            "expected_runs": len(config.methods) * len(config.seeds),
            "completed_runs": sum(len(v) for v in runs.values()),
            "missing": missing,
            "aborted": aborted,
        },
    }
    paths.report_dir.mkdir(parents=True, exist_ok=True)
    write_json_atomic(paths.analysis, analysis)

    for method, entry in methods_report.items():
        if "curve" not in entry:
            continue
        curve = entry["curve"]
        lines = ["step,mean,ci_lo,ci_hi"]
        for s, m, lo, hi in zip(curve["steps"], curve["mean"], curve["ci_lo"], curve["ci_hi"]):
            lines.append(f"{s},{m!r},{lo!r},{hi!r}")
        write_text_atomic(paths.report_dir / f"curve_{method}.csv", "\n".join(lines) + "\n")

    summary = ["setting,method,n_seeds,last_k_mean,prior,stability,plasticity,final"]
    for method, entry in methods_report.items():
        if "decomposition" not in entry:
            continue
        d = entry["decomposition"]["mean"]
        summary.append(
            f"{config.setting},{method},{len(entry['seeds'])},{entry['last_k_mean']!r},"
            f"{d['prior']!r},{d['stability']!r},{d['plasticity']!r},{d['final']!r}"
        )
    write_text_atomic(paths.report_dir / "summary.csv", "\n".join(summary) + "\n")
    _mark_stage(paths, config, STAGE_REPORT)
    return paths.analysis


# --- cross-setting aggregation ---


def aggregate_matrix(analysis_paths: list) -> dict:
    """Build the regime-vs-outcome confusion matrix over several settings."""
    matrix = ConfusionMatrix()
    skipped = []
    for path in analysis_paths:
        analysis = read_json(path)
        cell = analysis.get("confusion_cell")
        if cell is None:
            skipped.append(str(path))
            continue
        matrix.add(cell["regime"], cell["winner"])
    return {
        "matrix": matrix.to_dict(),
        "summary": matrix.summary_line(),
        "settings": len(analysis_paths) - len(skipped),
        "skipped": skipped,
    }


def run_pipeline(config: ExperimentConfig, jobs: int = 1, force: bool = False) -> Path:
    """Convenience wrapper running every stage in order."""
    paths = Paths(config)
    if force or not paths.dataset.exists():
        cmd_gen_data(config, force=force)
    cmd_pretrain(config, jobs=jobs, force=force)
    cmd_classify(config)
    cmd_finetune(config, jobs=jobs, force=force)
    return cmd_report(config)
