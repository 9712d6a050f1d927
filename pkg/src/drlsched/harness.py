"""Experiment orchestration behind the command-line interface.

Seeds: training jobsets for iteration ``i`` come from ``workload.seed`` with
spawn key ``(TRAIN_JOBSET_KEY, i, k)``; held-out jobsets come from
``eval.seed`` with key ``(EVAL_JOBSET_KEY, j)``, so they never coincide with
training jobsets.  Random baselines draw from ``(eval.seed, RANDOM_KEY, j)``.
"""

from __future__ import annotations

import csv
import dataclasses
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import policy as pol
from . import trainer as tr
from .baselines import HeuristicKind, run_heuristic_episode
from .config import ExperimentConfig
from .workload import generate_jobsets, write_jobsets

TRAIN_JOBSET_KEY = 0
EVAL_JOBSET_KEY = 2
RANDOM_KEY = 3

COMPARISON_HEADER = ["scheduler", "mean_slowdown", "std_slowdown", "mean_reward", "jobs_dropped"]
EVAL_HEADER = "iteration,greedy_mean_slowdown,greedy_mean_reward,truncated_jobs"


def training_jobsets(cfg: ExperimentConfig, iteration: int):
    return generate_jobsets(cfg.workload, cfg.train.jobsets_per_iteration,
                            TRAIN_JOBSET_KEY, iteration)


def heldout_jobsets(cfg: ExperimentConfig, count: Optional[int] = None):
    params = dataclasses.replace(cfg.workload, seed=cfg.eval_seed)
    return generate_jobsets(params, cfg.eval_jobsets if count is None else count, EVAL_JOBSET_KEY)


def initial_params(cfg: ExperimentConfig) -> pol.PolicyParams:
    return pol.init_params(cfg.net, tr.rng_for(cfg.train.seed, tr.INIT_KEY))


def _fmt(x):
    return "" if x is None else repr(x)


@dataclass
class ComparisonRow:
    scheduler: str
    mean_slowdown: Optional[float]
    std_slowdown: Optional[float]
    mean_reward: float
    jobs_dropped: int

    def as_list(self):
        return [self.scheduler, _fmt(self.mean_slowdown), _fmt(self.std_slowdown),
                repr(self.mean_reward), str(self.jobs_dropped)]


def compare_schedulers(cfg: ExperimentConfig, params: Optional[pol.PolicyParams],
                       jobsets) -> list[ComparisonRow]:
    """DRL (greedy) against SJF, Packer, the random heuristic and the uniform policy."""
    max_len = cfg.train.max_episode_length
    rows = []

    def add(name, summary):
        rows.append(ComparisonRow(name, summary.mean_slowdown, summary.std_slowdown,
                                  summary.mean_reward, summary.jobs_dropped))

    if params is not None:
        add("drl", tr.evaluate(params, jobsets, cfg.env, max_len))
    for kind in HeuristicKind:
        episodes = [run_heuristic_episode(cfg.env, js, kind,
                                          tr.rng_for(cfg.eval_seed, RANDOM_KEY, j), max_len)
                    for j, js in enumerate(jobsets)]
        add(kind.value, tr.summarize_episodes(episodes))
    rngs = [tr.rng_for(cfg.eval_seed, RANDOM_KEY, j) for j in range(len(jobsets))]
    add("uniform", tr.evaluate(None, jobsets, cfg.env, max_len, rngs=rngs))
    return rows


def write_comparison(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_HEADER)
        for row in rows:
            writer.writerow(row.as_list())


def format_comparison(rows) -> str:
    lines = [f"{'scheduler':<10} {'slowdown':>10} {'std':>8} {'reward':>10} {'dropped':>8}"]
    for r in rows:
        sd = "n/a" if r.mean_slowdown is None else f"{r.mean_slowdown:.3f}"
        std = "n/a" if r.std_slowdown is None else f"{r.std_slowdown:.3f}"
        lines.append(f"{r.scheduler:<10} {sd:>10} {std:>8} {r.mean_reward:>10.2f} "
                     f"{r.jobs_dropped:>8}")
    return "\n".join(lines)


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _truncate_csv(path, header, last_iteration):
    """Keep only rows up to ``last_iteration`` (rows past a checkpoint are replayed)."""
    if not os.path.exists(path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
        return
    lines = _read_lines(path)
    kept = [header] + [ln for ln in lines[1:] if ln and int(ln.split(",", 1)[0]) <= last_iteration]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(kept) + "\n")


def _append(path, line):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def cmd_train(cfg: ExperimentConfig, out_dir: Optional[str] = None, resume: bool = False,
              checkpoint: Optional[str] = None, stop_iteration: Optional[int] = None,
              final_report: bool = True, log=print) -> pol.PolicyParams:
    """Train, writing metrics.csv, eval.csv and checkpoints under ``out_dir``.

    ``stop_iteration`` ends the run early (as an interruption would); the
    run can then be continued with ``resume=True``.
    """
    out = out_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    metrics_path = os.path.join(out, "metrics.csv")
    eval_path = os.path.join(out, "eval.csv")
    latest = os.path.join(out, "latest.ckpt")
    if resume or checkpoint:
        source = checkpoint or latest
        params, meta = pol.load_params(source, cfg.net)
        done = int(meta.get("iteration", 0))
        log(f"resuming from {source} after iteration {done}")
    else:
        params, done = initial_params(cfg), 0
        for path in (metrics_path, eval_path):
            if os.path.exists(path):
                os.remove(path)
    _truncate_csv(metrics_path, tr.METRICS_HEADER, done)
    _truncate_csv(eval_path, EVAL_HEADER, done)
    heldout = heldout_jobsets(cfg)

    def on_iteration(new_params, report):
        _append(metrics_path, report.csv_row())
        pol.save_params(new_params, latest, {"iteration": report.iteration})
        msg = (f"iter {report.iteration:4d}  reward {report.mean_total_reward:9.3f}  "
               f"slowdown {report.mean_slowdown:7.3f}  len {report.mean_episode_length:7.1f}  "
               f"{report.wall_time:6.2f}s")
        if report.iteration % cfg.train.eval_every == 0:
            pol.save_params(new_params, os.path.join(out, f"checkpoint-{report.iteration:04d}.ckpt"),
                            {"iteration": report.iteration})
            ev = tr.evaluate(new_params, heldout, cfg.env, cfg.train.max_episode_length)
            _append(eval_path, f"{report.iteration},{_fmt(ev.mean_slowdown)},"
                               f"{ev.mean_reward!r},{ev.truncated_jobs}")
            msg += f"  | held-out greedy slowdown {ev.mean_slowdown}"
        log(msg)

    params = tr.train(params, cfg.env, cfg.train, lambda it: training_jobsets(cfg, it),
                      start_iteration=done + 1, stop_iteration=stop_iteration,
                      callback=on_iteration)
    if stop_iteration is None or stop_iteration >= cfg.train.num_iterations:
        last = max(done, cfg.train.num_iterations)
        pol.save_params(params, os.path.join(out, "final.ckpt"), {"iteration": last})
        if final_report:
            rows = compare_schedulers(cfg, params, heldout)
            write_comparison(rows, os.path.join(out, "evaluation.csv"))
            text = format_comparison(rows)
            with open(os.path.join(out, "evaluation.txt"), "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
            log(text)
    return params


def cmd_evaluate(cfg: ExperimentConfig, checkpoint: str, num_jobsets: Optional[int] = None,
                 log=print) -> tr.EvalSummary:
    params, _ = pol.load_params(checkpoint, cfg.net)
    summary = tr.evaluate(params, heldout_jobsets(cfg, num_jobsets), cfg.env,
                          cfg.train.max_episode_length)
    log(f"mean slowdown {summary.mean_slowdown}  std {summary.std_slowdown}  "
        f"mean reward {summary.mean_reward:.3f}  dropped {summary.jobs_dropped}  "
        f"truncated {summary.truncated_jobs}")
    return summary


def cmd_compare(cfg: ExperimentConfig, checkpoint: Optional[str], num_jobsets: Optional[int] = None,
                out_dir: Optional[str] = None, log=print) -> list[ComparisonRow]:
    params = pol.load_params(checkpoint, cfg.net)[0] if checkpoint else None
    rows = compare_schedulers(cfg, params, heldout_jobsets(cfg, num_jobsets))
    out = out_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    write_comparison(rows, os.path.join(out, "comparison.csv"))
    log(format_comparison(rows))
    return rows


def cmd_generate(cfg: ExperimentConfig, count: int, out_dir: str, log=print) -> list[str]:
    try:
        paths = write_jobsets(cfg.workload, count, out_dir)
    except OSError as exc:
        raise OSError(f"cannot write jobsets to {out_dir}: {exc}") from exc
    log(f"wrote {len(paths)} jobsets to {out_dir}")
    return paths


def uniform_policy_slowdown(cfg: ExperimentConfig, jobsets) -> Optional[float]:
    rngs = [tr.rng_for(cfg.eval_seed, RANDOM_KEY, j) for j in range(len(jobsets))]
    return tr.evaluate(None, jobsets, cfg.env, cfg.train.max_episode_length, rngs=rngs).mean_slowdown


def mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def eprint(*args):
    print(*args, file=sys.stderr)
