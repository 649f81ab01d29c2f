"""Command-line front end.

Subcommands: ``trp-gen``, ``saa-solve``, ``padded-solve``, ``estimate-phi``,
``bounds``, ``experiment``.  Instance files use the JSON schema documented
in the README; ``trp-gen`` writes a ``<name>.meta.json`` sidecar carrying
the distribution so the solve commands can sample scenarios.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bounds as bounds_mod
from .experiments import ExperimentSpec, run_counterexample, run_experiment
from .model import load_problem, problem_to_dict, save_problem
from .feasibility import estimate_recourse_likelihood
from .padded import PaddingMode, constraint_generation_solve, solve_padded
from .saa import SAASolution, solve_saa
from .sampling import DistributionSpec, derive_seed, draw_iid_sample
from .trp import TRPConfig, TRPParams, generate_trp


def _load_spec_for(instance_path: str, dist_path: str | None) -> DistributionSpec:
    path = dist_path or instance_path.replace(".json", ".meta.json")
    if not os.path.exists(path):
        raise SystemExit(f"no distribution available: expected {path} "
                         "(pass --dist or generate via trp-gen)")
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return DistributionSpec.from_dict(data.get("distribution", data))


def _meta_signs(instance_path: str, dist_path: str | None):
    path = dist_path or instance_path.replace(".json", ".meta.json")
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if "signs" in data:
            return np.array(data["signs"], dtype=int)
    return None


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out-dir", default="results")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="padsaa")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("trp-gen", help="generate a resource-planning instance")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--l", type=int, default=0, help="factor count (0 = monotone base)")
    gen.add_argument("--integer", action="store_true", help="pure integer first stage")
    gen.add_argument("--demand-scale", type=float, default=0.1)
    gen.add_argument("--out", required=True)
    _add_common(gen)

    slv = subs.add_parser("saa-solve", help="solve the standard SAA")
    slv.add_argument("--instance", required=True)
    slv.add_argument("--dist", default=None)
    slv.add_argument("--n-scenarios", type=int, required=True)
    slv.add_argument("--out", default=None, help="write the solution JSON here")
    slv.add_argument("--dump-lp", default=None)
    slv.add_argument("--time-limit", type=float, default=None)
    _add_common(slv)

    pad = subs.add_parser("padded-solve", help="solve a padded SAA")
    pad.add_argument("--instance", required=True)
    pad.add_argument("--dist", default=None)
    pad.add_argument("--n-scenarios", type=int, required=True)
    pad.add_argument("--gamma", type=float, required=True)
    pad.add_argument("--mode", choices=["rhs", "monotone", "cg"], default="monotone")
    pad.add_argument("--separation", choices=["general", "fixed_recourse", "brute_force"],
                     default="fixed_recourse")
    pad.add_argument("--out", default=None)
    pad.add_argument("--dump-lp", default=None)
    pad.add_argument("--time-limit", type=float, default=600.0)
    _add_common(pad)

    phi = subs.add_parser("estimate-phi", help="estimate the recourse likelihood")
    phi.add_argument("--instance", required=True)
    phi.add_argument("--dist", default=None)
    phi.add_argument("--solution", required=True, help="solution JSON from saa-solve")
    phi.add_argument("--eval-samples", type=int, default=100_000)
    _add_common(phi)

    bnd = subs.add_parser("bounds", help="print the closed-form bound calculators")
    bnd.add_argument("--eps", type=float, default=0.05)
    bnd.add_argument("--beta", type=float, default=0.01)
    bnd.add_argument("--n1", type=int, default=10)
    bnd.add_argument("--n2", type=int, default=20)
    bnd.add_argument("--m1", type=int, default=10)
    bnd.add_argument("--m2", type=int, default=30)
    bnd.add_argument("--N", type=int, default=None, help="report the probability bound at this N")
    bnd.add_argument("--gamma-tilde", type=float, default=None)
    bnd.add_argument("--excluded-count", type=int, default=None)
    bnd.add_argument("--d", type=int, default=None)
    bnd.add_argument("--diameter", type=float, default=None)
    bnd.add_argument("--lipschitz", type=float, default=None)
    bnd.add_argument("--gamma", type=float, default=None)
    bnd.add_argument("--eta", type=float, default=None)
    bnd.add_argument("--eta-tilde", type=float, default=None)

    exp = subs.add_parser("experiment", help="run a named experiment")
    exp.add_argument("name", choices=["table_continuous", "table_integer",
                                      "padding_sweep", "separation_benchmark",
                                      "cg_benchmark", "counterexample", "bounds_report"])
    exp.add_argument("--sizes", default=None,
                     help="comma-separated pairs, e.g. 10x10,20x10")
    exp.add_argument("--n-values", default=None, help="comma list of sample sizes")
    exp.add_argument("--gammas", default=None, help="comma list of padding levels")
    exp.add_argument("--reps", type=int, default=20)
    exp.add_argument("--eval-samples", type=int, default=20_000)
    exp.add_argument("--time-limit", type=float, default=600.0)
    exp.add_argument("--n-bits", type=int, default=3)
    _add_common(exp)

    args = parser.parse_args(argv)

    if args.command == "trp-gen":
        cfg = TRPConfig(n=args.n, m=args.m, p=args.n if args.integer else 0,
                        l=args.l, demand_scale=args.demand_scale, seed=args.seed)
        inst = generate_trp(cfg)
        save_problem(inst.problem, args.out)
        meta_path = args.out.replace(".json", ".meta.json")
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(inst.metadata(), fh, indent=2)
        print(f"wrote {args.out} and {meta_path}")
        return 0

    if args.command == "saa-solve":
        problem = load_problem(args.instance)
        spec = _load_spec_for(args.instance, args.dist)
        sample = draw_iid_sample(spec, args.n_scenarios, args.seed)
        if args.dump_lp:
            from .saa import build_extensive_form
            build_extensive_form(problem, sample).dump_lp(args.dump_lp)
        sol = solve_saa(problem, sample, time_limit=args.time_limit)
        print(f"objective {sol.objective:.6f}  vertex={sol.is_vertex}")
        print("x =", np.array2string(sol.x, precision=6))
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(sol.to_json())
        return 0

    if args.command == "padded-solve":
        problem = load_problem(args.instance)
        spec = _load_spec_for(args.instance, args.dist)
        signs = _meta_signs(args.instance, args.dist)
        sample = draw_iid_sample(spec, args.n_scenarios, args.seed)
        variant = {"rhs": "rhs_only", "monotone": "monotone_shortcut",
                   "cg": "mixed_scenario_cg"}[args.mode]
        mode = PaddingMode(variant=variant, gamma=args.gamma, signs=signs,
                           separation=args.separation)
        if args.dump_lp and variant != "mixed_scenario_cg":
            from .padded import build_padded_monotone, build_padded_rhs
            builder = build_padded_rhs if variant == "rhs_only" else \
                (lambda p, s, g: build_padded_monotone(p, s, g, signs))
            builder(problem, sample, args.gamma).dump_lp(args.dump_lp)
        if variant == "mixed_scenario_cg":
            sol, trace = constraint_generation_solve(problem, sample, mode,
                                                     time_limit=args.time_limit)
            print(f"status {trace.status} after {trace.n_separations} separations")
        else:
            sol = solve_padded(problem, sample, mode, time_limit=args.time_limit)
        print(f"objective {sol.objective:.6f}")
        print("x =", np.array2string(sol.x, precision=6))
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(sol.to_json())
        return 0

    if args.command == "estimate-phi":
        problem = load_problem(args.instance)
        spec = _load_spec_for(args.instance, args.dist)
        signs = _meta_signs(args.instance, args.dist)
        with open(args.solution, encoding="utf-8") as fh:
            sol = SAASolution.from_json(fh.read())
        est = estimate_recourse_likelihood(problem, sol.x, spec, args.eval_samples,
                                           derive_seed(args.seed, 1), signs=signs)
        print(f"phi_hat = {est.phi_hat:.6f} +- {est.ci_halfwidth:.6f} (95% CI, "
              f"M={est.M})")
        return 0

    if args.command == "bounds":
        _print_bounds(args)
        return 0

    if args.command == "experiment":
        if args.name == "bounds_report":
            _print_bounds(argparse.Namespace(
                eps=0.05, beta=0.01, n1=10, n2=20, m1=10, m2=30, N=None,
                gamma_tilde=None, excluded_count=None, d=None, diameter=None,
                lipschitz=None, gamma=None, eta=None, eta_tilde=None))
            return 0
        kwargs = {}
        if args.sizes:
            kwargs["sizes"] = tuple(tuple(int(v) for v in part.split("x"))
                                    for part in args.sizes.split(","))
        if args.n_values:
            kwargs["N_values"] = tuple(int(v) for v in args.n_values.split(","))
        if args.gammas:
            kwargs["gammas"] = tuple(float(v) for v in args.gammas.split(","))
        spec = ExperimentSpec(
            experiment=args.name,
            integer_first_stage=(args.name == "table_integer"),
            reps=args.reps, eval_samples=args.eval_samples,
            base_seed=args.seed, out_dir=args.out_dir,
            time_limit=args.time_limit, n_bits=args.n_bits, **kwargs)
        path = run_experiment(spec)
        print(f"wrote {path}")
        return 0

    return 1


def _print_bounds(args) -> None:
    inputs = bounds_mod.LPBoundInputs(eps=args.eps, beta=args.beta, n1=args.n1,
                                      n2=args.n2, m1=args.m1, m2=args.m2)
    print(f"{'bound':<46}{'value'}")
    print(f"{'log basic-solution count bound':<46}"
          f"{bounds_mod.basic_solution_count_bound(args.n1, args.n2, args.m1, args.m2):.6f}")
    print(f"{'sample size, two-stage LP':<46}"
          f"{bounds_mod.sample_size_two_stage_lp(inputs)}")
    if args.N is not None:
        value = bounds_mod.feasibility_prob_bound(args.N, args.eps, args.n1,
                                                  args.n2, args.m1, args.m2)
        print(f"{'P(recourse likelihood >= 1-eps) at N':<46}{value:.6f}")
    if args.gamma_tilde is not None and args.excluded_count is not None:
        fin = bounds_mod.FiniteXBoundInputs(excluded_count=args.excluded_count,
                                            beta=args.beta,
                                            gamma_tilde=args.gamma_tilde)
        print(f"{'sample size, finite feasible set':<46}"
              f"{bounds_mod.sample_size_finite_X(fin)}")
    if args.eta is not None and args.d is not None:
        pad = bounds_mod.PaddingBoundInputs(d=args.d, diameter=args.diameter,
                                            lipschitz=args.lipschitz,
                                            gamma=args.gamma, eta=args.eta,
                                            beta=args.beta)
        print(f"{'sample size, padded (product marginals)':<46}"
              f"{bounds_mod.sample_size_padded(pad, 'product_marginal')}")
    if args.eta_tilde is not None:
        pad = bounds_mod.PaddingBoundInputs(n2=args.n2, m2=args.m2,
                                            eta_tilde=args.eta_tilde, eps=args.eps)
        print(f"{'sample size, padded (rhs-only)':<46}"
              f"{bounds_mod.sample_size_padded(pad, 'rhs_only')}")


if __name__ == "__main__":
    sys.exit(main())
