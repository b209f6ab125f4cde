"""Batch front end: scenario and table in, tradeoff curves and dumps out.

Each scheme is swept over the primary requirements and written to
``curve_<scheme>.csv``; the variable-power run also writes the region grid
and one policy per requirement.  ``manifest.json`` records every input
needed to regenerate the outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .adaptation import Policy, optimize_constant_power, optimize_variable_power, policy_to_csv
from .amc_model import AmcTable, format_table, load_table
from .baselines import TdmaConfig, UnderlayConfig, calibrate_peak, evaluate_underlay, interweave_tdma
from .channel import Scenario, format_scenario, parse_scenario_values, scenario_from_values
from .montecarlo_eval import ConstantPowerEvaluator, TradeoffPoint, curve_to_csv, evaluate_policy
from .region_grid import RegionGrid, build_grid, estimate_region_stats, grid_to_csv

SCHEMES = ("variable", "constant", "underlay", "interweave")

# Baseline parameter grids, searched for the best point at each requirement.
UNDERLAY_PTH_GRID = tuple(float(v) for v in np.logspace(-3, 1, 41))
TDMA_TAU_GRID = tuple(float(v) for v in np.round(np.linspace(0.0, 1.0, 51), 10))


@dataclass(frozen=True)
class SweepSettings:
    rays: int = 2
    products: int = 50
    mc_samples: int = 1_000_000
    blocks: int = 1_000_000
    seed: int = 0
    workers: int = 1

    # Independent seeds per stage, all derived from ``seed``.
    @property
    def pilot_seed(self) -> int:
        return self.seed

    @property
    def stats_seed(self) -> int:
        return self.seed + 1

    @property
    def eval_seed(self) -> int:
        return self.seed + 2

    @property
    def constant_seed(self) -> int:
        return self.seed + 3


def section_v_scenario(**overrides) -> Scenario:
    """Symmetric interference-limited setup with unit direct and 0.05 cross means."""
    return replace(Scenario(s11=1.0, s22=1.0, s12=0.05, s21=0.05), **overrides)


def prepare_grid(scenario: Scenario, table: AmcTable, settings: SweepSettings) -> RegionGrid:
    grid = build_grid(table, scenario.ber_targets, settings.rays, settings.products, scenario,
                      seed=settings.pilot_seed)
    return estimate_region_stats(grid, scenario, settings.mc_samples, settings.stats_seed)


def _point(scheme, k1_req, report, feasible, predicted=(math.nan, math.nan), parameter=math.nan):
    return TradeoffPoint(scheme, k1_req, feasible, report if feasible else None,
                         predicted_k1=predicted[0], predicted_k2=predicted[1], parameter=parameter)


def sweep_variable(scenario, table, k1_reqs, settings, grid=None):
    """Variable-power curve plus the policy used at every requirement.

    A policy that meets a higher requirement also meets every lower one, so
    each point keeps the best predicted policy found at its own or any higher
    requirement.  ``parameter`` records the requirement that produced it.
    """
    grid = grid or prepare_grid(scenario, table, settings)
    reqs = list(k1_reqs)
    chosen: list[tuple[Policy, float] | None] = [None] * len(reqs)
    best = None
    for j in range(len(reqs) - 1, -1, -1):
        pol = optimize_variable_power(grid, scenario.with_requirement(reqs[j]))
        if pol.feasible and (best is None or pol.k2_avg > best[0].k2_avg):
            best = (pol, reqs[j])
        chosen[j] = best
    points, policies = [], []
    cache = {}
    for req, pick in zip(reqs, chosen):
        if pick is None:
            points.append(_point("variable", req, None, False))
            policies.append(None)
            continue
        pol, source = pick
        if source not in cache:
            cache[source] = evaluate_policy(pol, grid, scenario, table, settings.blocks, settings.eval_seed,
                                            settings.workers)
        points.append(_point("variable", req, cache[source], True, (pol.k1_avg, pol.k2_avg), source))
        policies.append(pol)
    return points, policies, grid


def sweep_constant(scenario, table, k1_reqs, settings):
    ev = ConstantPowerEvaluator(scenario, table, settings.mc_samples, settings.constant_seed)
    points, policies = [], []
    for req in k1_reqs:
        pol = optimize_constant_power(scenario.with_requirement(req), table, evaluator=ev)
        report = None
        if pol.feasible:
            report = evaluate_policy(pol, None, scenario, table, settings.blocks, settings.eval_seed,
                                     settings.workers)
        points.append(_point("constant", req, report, pol.feasible, (pol.k1_avg, pol.k2_avg), pol.power))
        policies.append(pol)
    return points, policies


def _best_feasible(scheme, k1_reqs, candidates):
    """Per requirement, the candidate with the largest cognitive ASE whose primary ASE meets it."""
    points = []
    for req in k1_reqs:
        ok = [(p, r) for p, r in candidates if r.primary_ase >= req]
        if not ok:
            points.append(_point(scheme, req, None, False))
            continue
        param, rep = max(ok, key=lambda c: (c[1].cognitive_ase, -c[0]))
        points.append(_point(scheme, req, rep, True, parameter=param))
    return points


def underlay_candidates(scenario, table, settings, pth_grid=UNDERLAY_PTH_GRID):
    out = []
    for pth in pth_grid:
        cfg = UnderlayConfig(pth, calibrate_peak(pth, scenario))
        out.append((pth, evaluate_underlay(cfg, scenario, table, settings.blocks, settings.eval_seed,
                                           settings.workers)))
    return out


def sweep_underlay(scenario, table, k1_reqs, settings, pth_grid=UNDERLAY_PTH_GRID):
    return _best_feasible("underlay", k1_reqs, underlay_candidates(scenario, table, settings, pth_grid))


def interweave_candidates(scenario, table, settings, tau_grid=TDMA_TAU_GRID):
    return [(tau, interweave_tdma(scenario, table, TdmaConfig(tau), settings.blocks, settings.eval_seed,
                                  settings.workers)) for tau in tau_grid]


def sweep_interweave(scenario, table, k1_reqs, settings, tau_grid=TDMA_TAU_GRID):
    return _best_feasible("interweave", k1_reqs, interweave_candidates(scenario, table, settings, tau_grid))


# --- argument handling -------------------------------------------------------


def parse_k1_list(text: str) -> list[float]:
    """``a:b:step`` (inclusive of ``b``) or a comma list; result must be ascending."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"--k1-req range must be a:b:step, got {text!r}")
        a, b, step = (float(p) for p in parts)
        if step <= 0 or b < a:
            raise ValueError("--k1-req range needs b >= a and step > 0")
        n = int(math.floor((b - a) / step + 1e-9))
        vals = [round(a + i * step, 12) for i in range(n + 1)]
    else:
        vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ValueError("--k1-req is empty")
    if any(v < 0 for v in vals):
        raise ValueError("primary requirements must be non-negative")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ValueError("primary requirements must be strictly ascending")
    return vals


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cogamc", description=__doc__.splitlines()[0])
    p.add_argument("--scenario", type=Path, help="scenario document (key = value lines)")
    p.add_argument("--table", type=Path, help="mode table document; the shipped table by default")
    p.add_argument("--scheme", choices=SCHEMES + ("all",), default="all")
    p.add_argument("--k1-req", default="0:3.75:0.25", help="a:b:step or comma list (default %(default)s)")
    p.add_argument("--rays", type=_positive_int, help="ray sectors L (default 2)")
    p.add_argument("--products", type=_positive_int, help="product bands C (default 50)")
    p.add_argument("--regions", type=_positive_int, help="target region count; sets products = regions / rays")
    p.add_argument("--mc-samples", type=_positive_int, default=1_000_000)
    p.add_argument("--blocks", type=_positive_int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", type=Path, default=Path("cogamc_out"))
    p.add_argument("--emit-defaults", action="store_true", help="print the shipped table and a scenario template")
    doc = p.add_argument_group("scenario overrides (take precedence over the document)")
    for key in ("s11_mean", "s12_mean", "s21_mean", "s22_mean", "n0", "p1", "p2_budget", "b1", "b2",
                "design_margin", "pathloss_e"):
        doc.add_argument("--" + key.replace("_", "-"), type=float, dest=key)
    doc.add_argument("--pathloss-d", type=_float_list, dest="pathloss_d",
                     help="transmitter separation; a comma list gives one variable-power curve per value")
    return p


def resolve_scenario(args) -> tuple[dict, list[float] | None]:
    values = parse_scenario_values(args.scenario.read_text(encoding="utf-8")) if args.scenario else {}
    for key in ("s11_mean", "s12_mean", "s21_mean", "s22_mean", "n0", "p1", "p2_budget", "b1", "b2",
                "design_margin", "pathloss_e"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    distances = args.pathloss_d
    if distances is not None:
        if len(distances) == 1:
            values["pathloss_d"] = distances[0]
            distances = None
        elif args.scheme not in ("variable", "all"):
            raise ValueError("a list of --pathloss-d values is only supported for the variable scheme")
    return values, distances


def grid_settings(args) -> SweepSettings:
    rays = args.rays or 2
    products = args.products or 50
    if args.regions:
        if args.products:
            raise ValueError("give --products or --regions, not both")
        products = max(1, round(args.regions / rays))
    return SweepSettings(rays=rays, products=products, mc_samples=args.mc_samples, blocks=args.blocks,
                         seed=args.seed, workers=args.workers)


def emit_defaults(stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(format_table(load_table(), "shipped mode table"))
    stream.write("\n# scenario template\n")
    stream.write(format_scenario(section_v_scenario()))


def run(args) -> int:
    table = load_table(args.table)
    values, distances = resolve_scenario(args)
    base = section_v_scenario()
    k1_reqs = parse_k1_list(args.k1_req)
    settings = grid_settings(args)
    schemes = SCHEMES if args.scheme == "all" else (args.scheme,)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "policies").mkdir(exist_ok=True)

    runs = []
    if distances is None:
        runs.append(("", scenario_from_values(values, base), schemes))
    else:
        for d in distances:
            runs.append((f"_d{d:g}", scenario_from_values({**values, "pathloss_d": d}, base), ("variable",)))

    for _, scenario, _ in runs:
        for t in (scenario.ber_targets.design_primary, scenario.ber_targets.design_cognitive):
            table.check_targets(t)

    files = []
    for tag, scenario, run_schemes in runs:
        header = f"cogamc {__version__} seed={settings.seed}\n" + format_scenario(scenario).strip()
        for scheme in run_schemes:
            if scheme == "variable":
                points, policies, grid = sweep_variable(scenario, table, k1_reqs, settings)
                _write(out / f"grid{tag}.csv", grid_to_csv(grid), files)
                for req, pol in zip(k1_reqs, policies):
                    if pol is not None:
                        _write(out / "policies" / f"variable{tag}_k1_{req:g}.csv",
                               policy_to_csv(pol, grid, settings.eval_seed), files)
            elif scheme == "constant":
                points, policies = sweep_constant(scenario, table, k1_reqs, settings)
                for req, pol in zip(k1_reqs, policies):
                    _write(out / "policies" / f"constant{tag}_k1_{req:g}.csv",
                           policy_to_csv(pol, seed=settings.constant_seed), files)
            elif scheme == "underlay":
                points = sweep_underlay(scenario, table, k1_reqs, settings)
            else:
                points = sweep_interweave(scenario, table, k1_reqs, settings)
            _write(out / f"curve_{scheme}{tag}.csv", curve_to_csv(points, header), files)

    manifest = {
        "version": __version__,
        "scheme": args.scheme,
        "k1_required": k1_reqs,
        "settings": {
            "rays": settings.rays, "products": settings.products, "mc_samples": settings.mc_samples,
            "blocks": settings.blocks, "seed": settings.seed, "pilot_seed": settings.pilot_seed,
            "stats_seed": settings.stats_seed, "eval_seed": settings.eval_seed,
            "constant_seed": settings.constant_seed,
        },
        "scenarios": {tag or "main": format_scenario(sc) for tag, sc, _ in runs},
        "pathloss_d": distances,
        "table": format_table(table),
        "underlay_pth_grid": list(UNDERLAY_PTH_GRID),
        "tdma_tau_grid": list(TDMA_TAU_GRID),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def _write(path: Path, text: str, files: list) -> None:
    path.write_text(text, encoding="utf-8")
    files.append(str(path.relative_to(path.parents[1] if path.parent.name == "policies" else path.parent)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.emit_defaults:
        emit_defaults()
        return 0
    try:
        return run(args)
    except (ValueError, OSError) as exc:
        print(f"cogamc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
