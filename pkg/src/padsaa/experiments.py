"""Experiment harness: desk-scale reproductions of the empirical protocol.

Each run emits UTF-8 CSVs (header row; provenance and timing information on
comment lines prefixed ``#``), a per-replication raw log, a JSON manifest
capturing configuration, seeds and solver identity, and static SVG plots
where figures apply.  Given the same spec (seeds included) the CSVs are
byte-identical apart from the ``#`` lines; the two solver benchmarks
(separation, constraint generation) are the exception, since wall-clock
columns are their payload.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _svgplot
from .backend import SOLVER_NAME
from .feasibility import estimate_recourse_likelihood
from .padded import (PaddedMasterInfeasibleError, PaddingMode,
                     constraint_generation_solve, separation_milp_fixed_recourse,
                     separation_milp_general)
from .saa import solve_saa, extract_solution
from .sampling import derive_seed, draw_iid_sample
from .trp import TRPConfig, TRPParams, build_trp_padded, generate_trp, is_completely_reliable
from .backend import solve_lp

EXPERIMENTS = ("table_continuous", "table_integer", "padding_sweep",
               "separation_benchmark", "cg_benchmark", "counterexample")


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    sizes: tuple = ((10, 10),)
    N_values: tuple = (100, 500, 1000)
    gammas: tuple = tuple(round(0.1 * g, 10) for g in range(21))
    factor_count: int = 0
    integer_first_stage: bool = False
    reps: int = 20
    eval_samples: int = 20_000
    base_seed: int = 20240
    out_dir: str = "results"
    time_limit: float = 600.0
    n_bits: int = 3
    counterexample_N: tuple = (5, 10, 20)
    trp_params: TRPParams = field(default_factory=TRPParams)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.reps < 1 or self.eval_samples < 1:
            raise ValueError("reps and eval_samples must be >= 1")


@dataclass
class ResultRow:
    config: tuple
    obj_mean: float
    obj_ci: float
    obj_min: float
    obj_max: float
    viol_mean: float
    viol_ci: float
    viol_min: float
    viol_max: float
    solve_time: float
    failures: int


def _ci_halfwidth(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return 1.96 * values.std(ddof=1) / math.sqrt(values.size)


def _stats(values):
    values = np.asarray(values, dtype=float)
    return (float(values.mean()), _ci_halfwidth(values),
            float(values.min()), float(values.max()))


def write_csv(path: str, header, rows, timing_rows=None) -> None:
    """Data rows are deterministic given the spec; the provenance stamp and
    any timing information live on '#' comment lines, which are excluded
    from the byte-determinism contract."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# generated {time.strftime('%Y-%m-%dT%H:%M:%S')} by {SOLVER_NAME}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        for row in (timing_rows or []):
            fh.write("# timing," + ",".join(str(_fmt(v)) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path: str):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


def _write_manifest(spec: ExperimentSpec, extra: dict | None = None) -> None:
    payload = {"spec": {**asdict(spec), "trp_params": asdict(spec.trp_params)},
               "solver": SOLVER_NAME}
    payload.update(extra or {})
    path = os.path.join(spec.out_dir, f"{spec.experiment}-manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _instance_seed(spec: ExperimentSpec, n: int, m: int) -> int:
    return derive_seed(spec.base_seed, 1_000_000 + 1000 * n + m)


def run_table_experiment(spec: ExperimentSpec) -> str:
    """SAA objective and estimated recourse-likelihood violation per
    (n, m, N), aggregated over replications."""
    os.makedirs(spec.out_dir, exist_ok=True)
    rows, raw = [], []
    for n, m in spec.sizes:
        cfg = TRPConfig(n=n, m=m, p=n if spec.integer_first_stage else 0,
                        seed=_instance_seed(spec, n, m), params=spec.trp_params)
        inst = generate_trp(cfg)
        for N in spec.N_values:
            objs, viols, times = [], [], []
            failures = 0
            for r in range(spec.reps):
                tag = f"{n}-{m}-{N}-{r}"
                try:
                    t0 = time.perf_counter()
                    sample = draw_iid_sample(
                        inst.spec, N, derive_seed(spec.base_seed, hash_tag(tag, 0)))
                    sol = solve_saa(inst.problem, sample)
                    est = estimate_recourse_likelihood(
                        inst.problem, sol.x, inst.spec, spec.eval_samples,
                        derive_seed(spec.base_seed, hash_tag(tag, 1)),
                        signs=inst.signs)
                    dt = time.perf_counter() - t0
                except Exception as exc:  # failed replication: logged, excluded
                    failures += 1
                    raw.append([n, m, N, r, "failed", "", "", str(exc)])
                    continue
                objs.append(sol.objective)
                viols.append(1.0 - est.phi_hat)
                times.append(dt)
                raw.append([n, m, N, r, "ok", sol.objective, 1.0 - est.phi_hat, ""])
            if objs:
                om, oc, olo, ohi = _stats(objs)
                vm, vc, vlo, vhi = _stats(viols)
                rows.append(ResultRow((n, m, N), om, oc, olo, ohi, vm, vc, vlo, vhi,
                                      float(np.mean(times)), failures))
    name = spec.experiment
    path = os.path.join(spec.out_dir, f"{name}.csv")
    write_csv(path,
              ["n", "m", "N", "obj_mean", "obj_ci95", "obj_min", "obj_max",
               "viol_mean", "viol_ci95", "viol_min", "viol_max", "failures"],
              [[*r.config, r.obj_mean, r.obj_ci, r.obj_min, r.obj_max,
                r.viol_mean, r.viol_ci, r.viol_min, r.viol_max,
                r.failures] for r in rows],
              timing_rows=[[*r.config, r.solve_time] for r in rows])
    write_csv(os.path.join(spec.out_dir, f"{name}-raw.csv"),
              ["n", "m", "N", "rep", "status", "objective", "violation", "error"], raw)
    _write_manifest(spec)
    return path


def hash_tag(tag: str, salt: int) -> int:
    """Stable integer from a replication tag (never Python's salted hash)."""
    acc = 1469598103934665603
    for ch in f"{tag}|{salt}".encode():
        acc = ((acc ^ ch) * 1099511628211) % (1 << 64)
    return acc


def run_padding_sweep(spec: ExperimentSpec) -> str:
    """Average padded objective and fraction of completely reliable
    solutions over a gamma grid; one sample per replication shared across
    the grid.  Emits one SVG per N alongside the CSV."""
    os.makedirs(spec.out_dir, exist_ok=True)
    n, m = spec.sizes[0]
    cfg = TRPConfig(n=n, m=m, seed=_instance_seed(spec, n, m), params=spec.trp_params)
    inst = generate_trp(cfg)
    rows, raw = [], []
    for N in spec.N_values:
        saa_objs = []
        per_gamma_obj = {g: [] for g in spec.gammas}
        per_gamma_rel = {g: [] for g in spec.gammas}
        per_gamma_infeas = {g: 0 for g in spec.gammas}
        for r in range(spec.reps):
            tag = f"sweep-{N}-{r}"
            sample = draw_iid_sample(inst.spec, N,
                                     derive_seed(spec.base_seed, hash_tag(tag, 0)))
            saa_objs.append(solve_saa(inst.problem, sample).objective)
            for g in spec.gammas:
                try:
                    res = solve_lp(build_trp_padded(inst, sample, g),
                                   want_vertex=True).require_optimal()
                except Exception:
                    per_gamma_infeas[g] += 1
                    raw.append([N, g, r, "infeasible", "", ""])
                    continue
                sol = extract_solution(inst.problem, sample, res)
                reliable = is_completely_reliable(inst, sol.x)
                per_gamma_obj[g].append(sol.objective)
                per_gamma_rel[g].append(1.0 if reliable else 0.0)
                raw.append([N, g, r, "ok", sol.objective, int(reliable)])
        saa_mean = float(np.mean(saa_objs))
        xs, avg_obj, frac_rel = [], [], []
        for g in spec.gammas:
            if not per_gamma_obj[g]:
                rows.append([N, g, "", "", saa_mean, per_gamma_infeas[g]])
                continue
            ao = float(np.mean(per_gamma_obj[g]))
            fr = float(np.mean(per_gamma_rel[g]))
            rows.append([N, g, ao, fr, saa_mean, per_gamma_infeas[g]])
            xs.append(g)
            avg_obj.append(ao)
            frac_rel.append(fr)
        _svgplot.write_line_plot(
            os.path.join(spec.out_dir, f"padding_sweep-N{N}.svg"),
            xs, {"average objective": avg_obj, "fraction reliable": frac_rel},
            xlabel="gamma", ylabel="average objective",
            title=f"Padded SAA, N={N}",
            second_axis={"fraction reliable"}, y2label="fraction reliable")
    path = os.path.join(spec.out_dir, "padding_sweep.csv")
    write_csv(path, ["N", "gamma", "avg_objective", "fraction_reliable",
                     "saa_mean_objective", "infeasible_count"], rows)
    write_csv(os.path.join(spec.out_dir, "padding_sweep-raw.csv"),
              ["N", "gamma", "rep", "status", "objective", "reliable"], raw)
    _write_manifest(spec)
    return path


def run_separation_benchmark(spec: ExperimentSpec, N: int = 100, n: int = 10) -> str:
    """Head-to-head of the two separation MILPs on factor-variant instances:
    time, gap at limit, node count and root-relaxation gap."""
    os.makedirs(spec.out_dir, exist_ok=True)
    rows = []
    for m, l in spec.sizes:
        cfg = TRPConfig(n=n, m=m, l=l, seed=_instance_seed(spec, n, 100 * m + l),
                        params=spec.trp_params)
        inst = generate_trp(cfg)
        sample = draw_iid_sample(inst.spec, N,
                                 derive_seed(spec.base_seed, hash_tag(f"sep-{m}-{l}", 0)))
        x_hat = solve_saa(inst.problem, sample).x
        general = separation_milp_general(inst.problem, sample, x_hat,
                                          signs=inst.signs, time_limit=spec.time_limit)
        fixed = separation_milp_fixed_recourse(inst.problem, sample, x_hat,
                                               signs=inst.signs,
                                               time_limit=spec.time_limit)
        rows.append([m, l,
                     general.wall_time, general.mip_gap, general.node_count,
                     general.gap_lp, general.status,
                     fixed.wall_time, fixed.mip_gap, fixed.node_count,
                     fixed.gap_lp, fixed.status])
    path = os.path.join(spec.out_dir, "separation_benchmark.csv")
    write_csv(path, ["m", "l",
                     "general_t_ip_s", "general_gap", "general_nodes",
                     "general_gap_lp", "general_status",
                     "fixed_t_ip_s", "fixed_gap", "fixed_nodes",
                     "fixed_gap_lp", "fixed_status"], rows)
    _write_manifest(spec)
    return path


def run_cg_benchmark(spec: ExperimentSpec, N: int = 1000) -> str:
    """Constraint generation on factor-variant instances over the gamma
    grid: total / separation time and number of separation MILPs solved."""
    os.makedirs(spec.out_dir, exist_ok=True)
    rows = []
    gammas = [g for g in spec.gammas if g <= 1.0]
    for n, m in spec.sizes:
        l = spec.factor_count or m
        cfg = TRPConfig(n=n, m=m, l=l, seed=_instance_seed(spec, n, m),
                        params=spec.trp_params)
        inst = generate_trp(cfg)
        sample = draw_iid_sample(inst.spec, N,
                                 derive_seed(spec.base_seed, hash_tag(f"cg-{n}-{m}", 0)))
        totals, sep_times, milps, reliable_flags = [], [], [], []
        for g in gammas:
            mode = PaddingMode(variant="mixed_scenario_cg", gamma=g,
                               signs=inst.signs, separation="fixed_recourse")
            t0 = time.perf_counter()
            try:
                sol, trace = constraint_generation_solve(
                    inst.problem, sample, mode, time_limit=spec.time_limit)
            except PaddedMasterInfeasibleError:
                continue
            totals.append(time.perf_counter() - t0)
            sep_times.append(sum(it.separation_wall_time for it in trace.iterations))
            milps.append(trace.n_separations)
            if g > 0 and trace.status == "feasible_certified":
                reliable_flags.append(1.0 if is_completely_reliable(inst, sol.x) else 0.0)
        rows.append([n, m, float(np.mean(totals)), float(np.mean(sep_times)),
                     float(np.mean(milps)),
                     float(np.mean(reliable_flags)) if reliable_flags else ""])
    path = os.path.join(spec.out_dir, "cg_benchmark.csv")
    write_csv(path, ["n", "m", "mean_total_time_s", "mean_milp_time_s",
                     "mean_milps_solved", "fraction_reliable_at_positive_gamma"], rows)
    _write_manifest(spec)
    return path


def run_counterexample(n_bits: int, N_grid, R: int, seed: int,
                       out_dir: str = "results") -> str:
    """Finite-support example where the SAA optimum is the sample maximum:
    empirical frequency of an infinite true objective versus the closed form
    (1 - 2^-n)^N."""
    if n_bits > 12:
        raise ValueError("n_bits at most 12 keeps the support manageable")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for N in N_grid:
        draws = rng.binomial(n_bits, 0.5, size=(R, N)) / n_bits
        x_hats = draws.max(axis=1)
        freq = float((x_hats < 1.0).mean())
        theory = (1.0 - 0.5 ** n_bits) ** N
        se = math.sqrt(theory * (1.0 - theory) / R)
        rows.append([n_bits, N, R, freq, theory, se,
                     (freq - theory) / se if se else 0.0])
    path = os.path.join(out_dir, "counterexample.csv")
    write_csv(path, ["n_bits", "N", "reps", "empirical_freq_infeasible",
                     "closed_form", "stderr", "z_score"], rows)
    return path


def run_experiment(spec: ExperimentSpec) -> str:
    if spec.experiment in ("table_continuous", "table_integer"):
        return run_table_experiment(spec)
    if spec.experiment == "padding_sweep":
        return run_padding_sweep(spec)
    if spec.experiment == "separation_benchmark":
        return run_separation_benchmark(spec)
    if spec.experiment == "cg_benchmark":
        return run_cg_benchmark(spec)
    if spec.experiment == "counterexample":
        return run_counterexample(spec.n_bits, spec.counterexample_N, spec.reps,
                                  spec.base_seed, spec.out_dir)
    raise ValueError(spec.experiment)
