"""Training and evaluation loops over populations, one worker per seed."""

from __future__ import annotations

import csv
import json
import multiprocessing
import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from commons_lab import __version__
from commons_lab.analysis.metrics import TrainingCurve, efficiency
from commons_lab.errors import ConfigError, IncompatibleCheckpointError
from commons_lab.harness.config import SCRIPTED_KINDS, AgentSpec, ExperimentConfig, agent_config
from commons_lab.nn import checkpoint as ckpt
from commons_lab.rollout import episode_seed, run_episode

EVAL_SALT = 7
AGENT_SALT = 2


def obs_shape(env_config) -> tuple:
    w = env_config.observation_window
    return (w, w, 3)


def build_agent(spec: AgentSpec, shape: tuple, seed: int):
    cfg = agent_config(spec)
    if spec.kind == "world_model":
        from commons_lab.world_model.agent import WorldModelAgent
        return WorldModelAgent(shape, cfg, seed)
    if spec.kind == "pg":
        from commons_lab.model_free.pg import PGAgent
        return PGAgent(shape, cfg, seed)
    if spec.kind == "q":
        from commons_lab.model_free.q import QAgent
        return QAgent(shape, cfg, seed)
    from commons_lab.agents.scripted import ScriptedAgent
    return ScriptedAgent(cfg, seed)


def load_agent(source: str, shape: tuple, seed: int = 0):
    """A scripted kind name or a checkpoint path, checked against the env's observation shape."""
    if source in SCRIPTED_KINDS:
        return build_agent(AgentSpec(source), shape, seed)
    _, meta = ckpt.load(source)
    kind = meta.get("kind")
    if kind == "world_model":
        from commons_lab.world_model.agent import WorldModelAgent as cls
    elif kind == "pg":
        from commons_lab.model_free.pg import PGAgent as cls
    elif kind == "q":
        from commons_lab.model_free.q import QAgent as cls
    else:
        raise IncompatibleCheckpointError(f"{source}: unknown checkpoint kind {kind!r}")
    return cls.load(source, obs_shape=shape)


def make_population(cfg: ExperimentConfig, seed: int) -> list:
    shape = obs_shape(cfg.env)
    return [build_agent(spec, shape, episode_seed(seed, i, salt=AGENT_SALT))
            for i, spec in enumerate(cfg.population)]


def evaluate(env_config, agents, episodes: int, seed: int, salt: int = EVAL_SALT) -> dict:
    """Greedy rollouts without learning. Std fields are population std (0 for one episode)."""
    effs, depleted, fires = [], 0, []
    for k in range(episodes):
        out = run_episode(env_config, agents, episode_seed(seed, k, salt=salt), explore=False, learn=False,
                          episode=k)
        effs.append(efficiency(out.returns))
        depleted += out.depletion_step is not None
        fires.append(sum(out.beam_fires) / len(agents))
    return {"episodes": episodes, "mean_eff": float(np.mean(effs)), "std_eff": float(np.std(effs)),
            "depletion_rate": depleted / episodes, "beam_fire_rate": float(np.mean(fires)),
            "efficiencies": [float(e) for e in effs]}


class SeedRun:
    """File layout of one seed's output directory."""

    def __init__(self, root: Path, seed: int):
        self.dir = Path(root) / f"seed_{seed}"
        self.metrics = self.dir / "metrics.jsonl"
        self.evals = self.dir / "eval.jsonl"
        self.checkpoints = self.dir / "checkpoints"
        self.logs = self.dir / "logs"
        self.resume = self.dir / "resume.pkl"
        self.status = self.dir / "status.json"


def _truncate_jsonl(path: Path, keep) -> None:
    if not path.exists():
        return
    lines = [ln for ln in path.read_text().splitlines() if ln.strip() and keep(json.loads(ln))]
    path.write_text("".join(ln + "\n" for ln in lines))


def _atomic_pickle(path: Path, obj) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as f:
        pickle.dump(obj, f, protocol=pickle.HIGHEST_PROTOCOL)
    os.replace(tmp, path)


def _save_checkpoints(paths: SeedRun, agents) -> list:
    out = []
    paths.checkpoints.mkdir(parents=True, exist_ok=True)
    for i, agent in enumerate(agents):
        if getattr(agent, "learns", False):
            p = paths.checkpoints / f"agent{i}_{agent.kind}.ckpt"
            agent.save(p)
            out.append(p)
    return out


def run_seed(cfg_dict: dict, seed: int, root: str) -> dict:
    """Train one population for one seed; resumes from ``resume.pkl`` when present."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    paths = SeedRun(Path(root), seed)
    paths.dir.mkdir(parents=True, exist_ok=True)
    run_id = f"{cfg.name}-seed{seed}"
    label = cfg.population_label
    log_every = cfg.log_every or cfg.eval_every

    start = 0
    if paths.resume.exists():
        with open(paths.resume, "rb") as f:
            saved = pickle.load(f)
        agents, start = saved["agents"], saved["episode"]
        _truncate_jsonl(paths.metrics, lambda r: r["episode"] < start)
        _truncate_jsonl(paths.evals, lambda r: r["episode"] <= start)
    else:
        agents = make_population(cfg, seed)
        for p in (paths.metrics, paths.evals, paths.status):
            p.unlink(missing_ok=True)
    learning = any(getattr(a, "learns", False) for a in agents)
    checkpoints: list = []
    logs: list = sorted(str(p) for p in paths.logs.glob("*.jsonl")) if start else []

    with open(paths.metrics, "a") as mf, open(paths.evals, "a") as ef:
        for ep in range(start, cfg.episodes):
            record = (ep + 1) % log_every == 0
            out = run_episode(cfg.env, agents, episode_seed(seed, ep), explore=True, learn=True,
                              record=record, episode=ep)
            stats = [a.train_epoch() if getattr(a, "learns", False) else None for a in agents]
            if record:
                paths.logs.mkdir(exist_ok=True)
                lp = paths.logs / f"train_ep{ep:05d}.jsonl"
                out.log.save(lp)
                logs.append(str(lp))
            rec = {"run_id": run_id, "episode": ep, "efficiency": efficiency(out.returns),
                   "depletion_step": out.depletion_step, "beam_fires": out.beam_fires, "agent_kind": label,
                   "phase": "train", "returns": out.returns}
            if learning:
                rec["train"] = stats
            mf.write(json.dumps(rec) + "\n")
            mf.flush()
            if (ep + 1) % cfg.eval_every == 0 or ep + 1 == cfg.episodes:
                if cfg.eval_episodes and (ep + 1) % cfg.eval_every == 0:
                    ev = evaluate(cfg.env, agents, cfg.eval_episodes, episode_seed(seed, ep + 1, salt=EVAL_SALT))
                    ef.write(json.dumps({"run_id": run_id, "episode": ep + 1, "efficiency": ev["mean_eff"],
                                         "efficiency_std": ev["std_eff"], "depletion_rate": ev["depletion_rate"],
                                         "beam_fire_rate": ev["beam_fire_rate"], "agent_kind": label,
                                         "phase": "eval"}) + "\n")
                    ef.flush()
                if learning:
                    checkpoints = _save_checkpoints(paths, agents)
                    if ep + 1 < cfg.episodes:
                        _atomic_pickle(paths.resume, {"agents": agents, "episode": ep + 1})
    paths.resume.unlink(missing_ok=True)
    result = {"seed": seed, "dir": str(paths.dir), "metrics": str(paths.metrics), "eval": str(paths.evals),
              "checkpoints": [str(p) for p in checkpoints], "logs": logs, "status": "complete"}
    paths.status.write_text(json.dumps(result, indent=1))
    return result


def _read_jsonl(path) -> list:
    path = Path(path)
    if not path.exists():
        return []
    return [json.loads(ln) for ln in path.read_text().splitlines() if ln.strip()]


def write_summary(path: Path, curve: TrainingCurve, episodes: list) -> None:
    mean, std = curve.aggregate()
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["episode", "mean_eff", "std_eff"])
        for e, m, s in zip(episodes, mean, std):
            w.writerow([e, repr(float(m)), repr(float(s))])


def summarise(cfg: ExperimentConfig, root: Path, seeds) -> dict:
    """summary.csv from evaluations (train-episode curve when there are none) plus summary_train.csv."""
    train = TrainingCurve(smoothing=cfg.smoothing)
    evals = TrainingCurve(smoothing=max(1, cfg.smoothing // cfg.eval_every))
    eval_eps = None
    for s in seeds:
        paths = SeedRun(root, s)
        train.add(s, [r["efficiency"] for r in _read_jsonl(paths.metrics)])
        ev = _read_jsonl(paths.evals)
        if ev:
            evals.add(s, [r["efficiency"] for r in ev])
            eval_eps = [r["episode"] for r in ev]
    out = {}
    n_train = min(len(v) for v in train.runs.values())
    write_summary(root / "summary_train.csv", train, list(range(n_train)))
    out["summary_train"] = str(root / "summary_train.csv")
    if evals.runs and len(evals.runs) == len(seeds):
        write_summary(root / "summary.csv", evals, eval_eps)
    else:
        write_summary(root / "summary.csv", train, list(range(n_train)))
    out["summary"] = str(root / "summary.csv")
    return out


def cmd_train(cfg: ExperimentConfig, out: str | Path | None = None, seeds=None, parallel: int | None = None,
              progress=None) -> dict:
    """Run every seed (optionally in parallel worker processes) and aggregate. Returns the manifest."""
    if seeds is not None:
        cfg.seeds = list(seeds)
        cfg.__post_init__()
    if parallel is not None:
        if parallel < 1:
            raise ConfigError("parallel must be >= 1")
        cfg.parallelism = parallel
    root = Path(out) if out else cfg.resolved_output_dir()
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.to_dict(), "version": __version__, "status": "running",
                "seeds": {str(s): {"dir": str(SeedRun(root, s).dir), "status": "pending"} for s in cfg.seeds}}
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1))
    cfg_dict = cfg.to_dict()
    results = {}
    if cfg.parallelism > 1 and len(cfg.seeds) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(cfg.parallelism, len(cfg.seeds)), mp_context=ctx) as pool:
            futures = {s: pool.submit(run_seed, cfg_dict, s, str(root)) for s in cfg.seeds}
            for s, fut in futures.items():
                results[s] = fut.result()
                if progress:
                    progress(s, results[s])
    else:
        for s in cfg.seeds:
            results[s] = run_seed(cfg_dict, s, str(root))
            if progress:
                progress(s, results[s])
    manifest["seeds"] = {str(s): r for s, r in results.items()}
    manifest.update(summarise(cfg, root, cfg.seeds))
    manifest["status"] = "complete"
    manifest_path.write_text(json.dumps(manifest, indent=1))
    return manifest
