"""Scenario-driven command line front end.

One subcommand per analysis plus `all` (which runs the scenario's pipeline
list). Every run writes per-analysis CSV files, two-column plot data for
each scale ladder, a human-readable summary and a manifest echoing the
configuration. Exit status is 0 iff every assertion requested by the
scenario passed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import _kernels as kr
from . import conditions as cond
from . import dimension as dim
from . import flow as fl
from . import scenario as sc
from . import sets as st
from . import transport as tr
from . import vortex_wave as vw
from .distance import DistanceEvaluator, neighborhood_measure
from .reports import (fmt, write_csv, write_manifest, write_plot_data,
                      write_points_csv, write_summary)
from .sets import Box

STAGES = ("dimension", "print", "conditions", "flow", "avoidance",
          "transport", "vortex-wave")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fractalflow",
        description="numerical laboratory for transport flows past fractal singular sets",
    )
    parser.add_argument("stage", choices=STAGES + ("all",))
    parser.add_argument("--config", required=True, help="scenario JSON path")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--threads", type=int, default=None, help="worker cap (0 = auto)")
    args = parser.parse_args(argv)

    try:
        cfg = sc.load_config(args.config)
    except (sc.ConfigError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    out_dir = Path(args.out) if args.out else Path("runs") / cfg["name"]
    stages = cfg["pipeline"] if args.stage == "all" else [args.stage]

    started = time.perf_counter()
    summary: list[str] = [f"scenario {cfg['name']} (seed {cfg['seed']}, backend {kr.BACKEND})"]
    failures: list[str] = []
    for stage in stages:
        runner = _RUNNERS[stage]
        try:
            stage_failures = runner(cfg, out_dir, summary)
        except Exception as exc:  # surfaced per stage with the path context
            print(f"error in stage {stage}: {exc}", file=sys.stderr)
            return 2
        failures.extend(f"{stage}: {msg}" for msg in stage_failures)
    wall = time.perf_counter() - started

    summary.append("")
    if failures:
        summary.append("FAILED assertions:")
        summary.extend("  " + f for f in failures)
    else:
        summary.append("all requested assertions passed")
    write_summary(out_dir / "summary.txt", summary)
    write_manifest(out_dir / "manifest.json", {
        "name": cfg["name"],
        "seed": cfg["seed"],
        "stages": list(stages),
        "config": cfg,
        "versions": {"fractalflow": __version__, "numpy": np.__version__,
                     "backend": kr.BACKEND},
        "wall_time_seconds": wall,  # excluded from the bit-identity contract
    })
    for line in summary:
        print(line)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# stage runners; each returns a list of failed-assertion messages


def _run_dimension(cfg, out_dir, summary):
    dcfg = cfg["dimension"]
    target, _ = sc.build_set(cfg)
    if target is None:
        raise sc.ConfigError("dimension stage needs a set recipe")
    if isinstance(target, st.ProductSet) and target.time_interval is not None:
        points: object = target.spatial
        spatial_pts = target.spatial.points
    else:
        sample = target.sample_spacetime(cfg["horizon"] / 256.0)
        points = sample[:, 1:]
        spatial_pts = points
    if isinstance(points, st.InitialSet):
        write_points_csv(out_dir / "set_points.csv", points.points)
    else:
        sample = target.sample_spacetime(cfg["horizon"] / 64.0)
        write_points_csv(out_dir / "set_points.csv", sample[:, 1:], sample[:, 0])
    ladder = dim.dyadic_ladder(dcfg["eps_max"], dcfg["eps_min"], dcfg["base"])
    counts = [(float(e), dim.box_count(points, float(e))) for e in ladder]
    write_csv(out_dir / "dimension_counts.csv", ["epsilon", "count"], counts)
    write_plot_data(out_dir / "dimension_counts.dat",
                    [c[0] for c in counts], [c[1] for c in counts])
    est = dim.estimate_box_dimension(points, ladder)
    rows = [("grid_count", est.fitted_dim, est.lower_proxy, est.upper_proxy,
             est.r_squared, est.scale_window[0], est.scale_window[1])]
    failures = []
    mink = None
    if dcfg["compare_methods"]:
        spatial = np.atleast_2d(spatial_pts)
        pad = 4.0 * dcfg["eps_max"]
        box = Box(spatial.min(axis=0) - pad, spatial.max(axis=0) + pad)
        ev = DistanceEvaluator(st.make_product((0.0, cfg["horizon"]),
                                               st.InitialSet(spatial, spatial.shape[1])))
        mink = dim.estimate_minkowski_dimension(
            ev, 0.0, ladder, box, cfg["seed"], dcfg["minkowski_samples"])
        rows.append(("minkowski", mink.fitted_dim, mink.lower_proxy, mink.upper_proxy,
                     mink.r_squared, mink.scale_window[0], mink.scale_window[1]))
        measures = [neighborhood_measure(ev, 0.0, float(e), box, cfg["seed"],
                                         samples=dcfg["minkowski_samples"])
                    for e in ladder]
        write_csv(out_dir / "minkowski_ladder.csv", ["epsilon", "measure", "stderr"],
                  [(float(e), m.value, m.standard_error)
                   for e, m in zip(ladder, measures)])
        write_plot_data(out_dir / "minkowski_ladder.dat", ladder,
                        [m.value for m in measures])
        if abs(mink.fitted_dim - est.fitted_dim) > 0.1:
            failures.append(
                f"cross-method disagreement {abs(mink.fitted_dim - est.fitted_dim):.3f} > 0.1")
    write_csv(out_dir / "dimension_fit.csv",
              ["method", "fitted_dim", "lower_proxy", "upper_proxy", "r_squared",
               "eps_min", "eps_max"], rows)
    summary.append(f"dimension: grid fit {est.fitted_dim:.4f} "
                   f"(local slopes {est.lower_proxy:.4f}..{est.upper_proxy:.4f})")
    if mink is not None:
        summary.append(f"dimension: minkowski fit {mink.fitted_dim:.4f}")
    if dcfg["expected_dim"] is not None:
        err = abs(est.fitted_dim - dcfg["expected_dim"])
        if err > dcfg["tolerance"]:
            failures.append(f"fitted {est.fitted_dim:.4f} vs expected "
                            f"{dcfg['expected_dim']} (tol {dcfg['tolerance']})")
    return failures


def _run_print(cfg, out_dir, summary):
    pcfg = cfg["print"]
    target, _ = sc.build_set(cfg)
    if target is None:
        raise sc.ConfigError("print stage needs a set recipe")
    evaluator = DistanceEvaluator(target)
    domain = sc.domain_box(cfg)
    scan = dim.print_scan(evaluator, domain, pcfg["eps_floor"], cfg["seed"],
                          time_slices=pcfg["time_slices"], eps_max=pcfg["eps_max"],
                          samples=pcfg["samples"])
    verdict_rows = []
    failures: list[str] = []
    scan_written = False
    for a in pcfg["alphas"]:
        for b in pcfg["betas"]:
            alpha, beta = float(a), sc.exponent(b)
            v = dim.print_membership(
                evaluator, alpha, beta, domain, pcfg["eps_floor"], cfg["seed"],
                margin=pcfg["margin"], scan=scan)
            lo, mean, hi = v.gamma_summary
            verdict_rows.append((alpha, beta if np.isfinite(beta) else "inf",
                                 v.verdict, lo, mean, hi, v.time_agg_exponent,
                                 pcfg["margin"], pcfg["eps_floor"]))
            if not scan_written:
                write_csv(out_dir / "print_scan.csv", ["t", "gamma", "stderr"],
                          [(s.t, s.gamma, s.gamma_stderr) for s in v.slices])
                write_plot_data(out_dir / "print_scan.dat",
                                [s.t for s in v.slices],
                                [s.gamma if np.isfinite(s.gamma) else -1.0 for s in v.slices])
                scan_written = True
            summary.append(f"print: ({alpha}, {b}) -> {v.verdict}")
    write_csv(out_dir / "print_verdicts.csv",
              ["alpha", "beta", "verdict", "gamma_min", "gamma_mean", "gamma_max",
               "time_agg_exponent", "margin", "eps_floor"], verdict_rows)
    return failures


def _run_conditions(cfg, out_dir, summary):
    ccfg = cfg["conditions"]
    target, _ = sc.build_set(cfg)
    if target is None:
        raise sc.ConfigError("conditions stage needs a set recipe")
    field = sc.build_field(cfg)
    report = cond.wellposedness_check(
        field, target, sc.exponent(ccfg["p"]), sc.exponent(ccfg["q"]),
        ccfg["holder_exponent"], ccfg["sup_section_dim"], sc.domain_box(cfg),
        seed=cfg["seed"], excision=ccfg["excision"],
        spatial_resolution=ccfg["spatial_resolution"],
        time_slices=ccfg["time_slices"], sectional=ccfg["sectional"])
    rows = [(e.name, e.status, json.dumps(e.evidence, sort_keys=True, default=fmt),
             json.dumps(e.exponents, sort_keys=True, default=fmt), e.note)
            for e in report.entries]
    write_csv(out_dir / "conditions.csv",
              ["condition", "status", "evidence", "exponents", "note"], rows)
    for e in report.entries:
        summary.append(f"conditions: {e.name} -> {e.status}")
    summary.append(f"conditions: exponent threshold q_bar = {report.threshold_q}")
    failures = []
    if ccfg["fail_on_violation"]:
        for e in report.entries:
            if e.status == "violated":
                failures.append(f"{e.name} violated")
    return failures


def _build_flow(cfg):
    fcfg = cfg["flow"]
    field = sc.build_field(cfg)
    target, trajectories = sc.build_set(cfg)
    mode = fcfg["distance_mode"]
    if target is None:
        distance = None
    elif trajectories is not None:
        mode = "sectional" if mode == "auto" else mode
        distance = fl.distance_from_trajectories(trajectories, cfg["horizon"], mode)
    elif isinstance(target, st.ProductSet) and target.time_interval is not None:
        distance = fl.distance_from_static_points(target.spatial.points)
    else:
        raise sc.ConfigError("flow distance needs a vortex graph or a time-axis product set")
    domain = sc.domain_box(cfg)
    x0, w = fl.sample_initial(domain, fcfg["count"], fcfg["sampling"], cfg["seed"])
    if distance is not None:
        d0 = kr.eval_distance(distance, 0.0, x0)
        keep = d0 > fcfg["delta_min"]
        x0, w = x0[keep], w[keep]
    times = np.linspace(0.0, cfg["horizon"], fcfg["output_times"])
    ens = fl.integrate_flow(field, x0, w, times, distance,
                            h_max=fcfg["h_max"], c_step=fcfg["c_step"],
                            h_floor=fcfg["h_floor"], delta_min=fcfg["delta_min"])
    return ens, domain


def _run_flow(cfg, out_dir, summary):
    fcfg = cfg["flow"]
    ens, domain = _build_flow(cfg)
    failures = []
    rows = []
    cap = min(fcfg["export_max"], ens.count)
    for i in range(cap):
        for k, t in enumerate(ens.times):
            d = ens.interval_min[k - 1, i] if k else ens.d_initial[i]
            rows.append((i, float(t), *ens.positions[k, i].tolist(),
                         d, ens.status_name(i)))
    n = ens.ambient_dim
    write_csv(out_dir / "trajectories.csv",
              ["id", "t", *[f"x{j + 1}" for j in range(n)], "d", "status"], rows)
    res, resolved = fl.integral_residual(ens)
    res_max = float(res[resolved].max()) if resolved.any() else 0.0
    unresolved = int((~resolved & ens.alive()).sum())
    counts = {name: int((ens.status == code).sum())
              for code, name in fl.STATUS_NAMES.items()}
    write_csv(out_dir / "flow_summary.csv",
              ["members", "alive", "absorbed", "absorbed_flagged", "escaped",
               "max_integral_residual", "residual_unresolved"],
              [(ens.count, counts["alive"], counts["absorbed"],
                counts["absorbed_flagged"], counts["escaped"], res_max,
                unresolved)])
    summary.append(f"flow: {ens.count} members, statuses {counts}, "
                   f"max resolved residual {res_max:.2e} "
                   f"({unresolved} members too fast for the output grid)")
    if res_max > fcfg["residual_tolerance"]:
        failures.append(f"integral residual {res_max:.2e} above "
                        f"{fcfg['residual_tolerance']}")
    boxes_cfg = fcfg["compressibility_boxes"]
    boxes = ([Box(np.asarray(b["lo"], dtype=float), np.asarray(b["hi"], dtype=float))
              for b in boxes_cfg] if boxes_cfg else _default_boxes(domain))
    comp = fl.compressibility_estimate(ens, boxes, min_hits=fcfg["compressibility_min_hits"])
    write_csv(out_dir / "compressibility.csv",
              ["time", "box", "ratio", "stderr", "hits", "flagged"], comp.rows)
    summary.append(f"flow: compressibility L = {comp.L:.4f}")
    return failures


def _default_boxes(domain: Box) -> list[Box]:
    span = domain.hi - domain.lo
    boxes = []
    for fx, fy in ((0.25, 0.25), (0.25, 0.65), (0.6, 0.4), (0.45, 0.55)):
        lo = domain.lo + span * np.array([fx, fy] + [0.3] * (domain.dim - 2))[: domain.dim]
        boxes.append(Box(lo, lo + 0.15 * span))
    return boxes


def _run_avoidance(cfg, out_dir, summary):
    acfg = cfg["avoidance"]
    ens, domain = _build_flow(cfg)
    deltas = sc.delta_ladder(acfg["delta_k_min"], acfg["delta_k_max"], acfg["delta_base"])
    comp = fl.compressibility_estimate(ens, _default_boxes(domain))
    L = comp.L
    report = fl.avoidance_statistics(
        ens, acfg["r0"], deltas, domain, L, seed=cfg["seed"],
        excision=acfg["excision"], samples=acfg["samples"],
        tolerance=acfg["tolerance"])
    rows = list(zip(report.deltas, report.mu, report.stderr, report.product,
                    np.full(report.deltas.size, report.bound)))
    write_csv(out_dir / "avoidance.csv",
              ["delta", "mu_F", "stderr", "product", "bound"], rows)
    write_plot_data(out_dir / "avoidance.dat", report.deltas, report.product)
    summary.append(f"avoidance: bound {report.bound:.4f} (L={L:.3f}), "
                   f"max product {report.product.max():.4f}")
    failures = []
    if not report.all_bounded:
        failures.append("avoidance product exceeded the theoretical bound")
    if np.any(np.diff(report.mu[::-1]) < 0):
        failures.append("mu(F(delta)) not monotone in delta")
    return failures


def _gaussian(center, sigma):
    c = np.asarray(center, dtype=float)

    def u0(pts):
        return np.exp(-((pts - c) ** 2).sum(axis=1) / (2.0 * sigma ** 2))

    return u0


_BETAS = {
    "identity": lambda z: z,
    "square": lambda z: z * z,
    "cos": np.cos,
}


def _run_transport(cfg, out_dir, summary):
    tcfg = cfg["transport"]
    field = sc.build_field(cfg)
    domain = sc.domain_box(cfg)
    u0 = _gaussian(tcfg["initial_center"], tcfg["initial_sigma"])
    horizon = cfg["horizon"]
    failures = []
    residual_rows = []
    last = None
    for resolution in tcfg["resolutions"]:
        steps = max(4, int(round(tcfg["time_steps_per_unit"] * horizon
                                 * resolution / max(tcfg["resolutions"]))))
        u = tr.solve_transport(field, u0, domain, resolution, horizon, steps,
                               interpolation=tcfg["interpolation"],
                               boundary=tcfg["boundary"],
                               cfl_bound=tcfg["cfl_bound"])
        bump = _bump_from_cfg(tcfg, domain, horizon)
        for beta_name in tcfg["betas"]:
            r = tr.renormalization_residual(u, field, _BETAS[beta_name], bump, u0=u0)
            residual_rows.append((beta_name, "bump0", 1.0 / resolution, r))
        last = u
    write_csv(out_dir / "transport_residuals.csv",
              ["beta", "phi_id", "h", "residual"], residual_rows)
    gw = tr.gronwall_check(last, field)
    write_csv(out_dir / "transport_gronwall.csv",
              ["t", "energy", "rhs_bound"],
              list(zip(gw.times, gw.energy, gw.rhs_bound)))
    rows = []
    nodes = last.nodes()
    for k in (0, len(last.times) - 1):
        for pt, val in zip(nodes, last.values[k].ravel()):
            rows.append((float(last.times[k]), *pt.tolist(), val))
    write_csv(out_dir / "transport_snapshots.csv",
              ["t", *[f"x{j + 1}" for j in range(domain.dim)], "u"], rows)
    summary.append(f"transport: gronwall margin {gw.max_violation_margin:.3e}, "
                   f"energy ratio {gw.conservation_ratio:.4f}")
    if gw.max_violation_margin > tcfg["gronwall_margin"]:
        failures.append(f"gronwall margin {gw.max_violation_margin:.3e} above "
                        f"{tcfg['gronwall_margin']}")
    div_free = np.allclose(
        field.divergence(0.0, nodes[: min(64, nodes.shape[0])]), 0.0, atol=1e-12)
    if div_free and abs(gw.conservation_ratio - 1.0) > tcfg["conservation_tolerance"]:
        failures.append(f"energy drift {abs(gw.conservation_ratio - 1.0):.3e}")
    if len(residual_rows) >= 2:
        first_res = residual_rows[0][3]
        last_res = residual_rows[-1][3]
        if len(tcfg["resolutions"]) > 1 and last_res > first_res:
            failures.append("renormalization residual did not decrease under refinement")
    return failures


def _bump_from_cfg(tcfg, domain: Box, horizon: float) -> tr.SpaceTimeBump:
    center_t = tcfg["bump_center_time"] if tcfg["bump_center_time"] is not None else 0.45 * horizon
    center = (np.asarray(tcfg["bump_center"], dtype=float)
              if tcfg["bump_center"] is not None
              else (domain.lo + domain.hi) / 2.0)
    rt = tcfg["bump_radius_time"] if tcfg["bump_radius_time"] is not None else 0.4 * horizon
    rx = (np.asarray(tcfg["bump_radius"], dtype=float)
          if tcfg["bump_radius"] is not None
          else 0.35 * (domain.hi - domain.lo))
    bump = tr.SpaceTimeBump(center_t, center, rt, rx)
    bump.validate_support(domain, horizon)
    return bump


def _run_vortex_wave(cfg, out_dir, summary):
    vcfg = cfg["vortex_wave"]
    grid_box = Box(np.asarray(vcfg["grid_lo"], dtype=float),
                   np.asarray(vcfg["grid_hi"], dtype=float))
    amp = vcfg["omega_amplitude"]
    center = np.asarray(vcfg["omega_center"], dtype=float)
    sigma = vcfg["omega_sigma"]
    omega0 = lambda pts: amp * np.exp(-((pts - center) ** 2).sum(axis=1) / (2 * sigma ** 2))
    pts, w, areas = vw.particles_from_grid(omega0, grid_box, vcfg["grid_resolution"])
    result = vw.simulate_vortex_wave(
        pts, w, np.asarray(vcfg["z0"], dtype=float), vcfg["strength"],
        cfg["horizon"], np.linspace(0.0, cfg["horizon"], vcfg["output_times"]),
        blob_radius=vcfg["blob_radius"], area_weights=areas,
        normalized=vcfg["normalized"], h_max=vcfg["h_max"],
        delta_min=vcfg["delta_min"])
    write_csv(out_dir / "vortex_trajectory.csv", ["t", "z1", "z2"],
              [(float(t), z[0], z[1]) for t, z in zip(result.times, result.vortex_path)])
    rows = []
    cap = min(vcfg["export_max"], pts.shape[0])
    for snap in result.snapshots:
        for i in range(cap):
            rows.append((snap.time, i, snap.positions[i, 0], snap.positions[i, 1],
                         snap.weights[i]))
    write_csv(out_dir / "vw_snapshots.csv", ["t", "id", "x1", "x2", "omega"], rows)
    deltas = sc.delta_ladder(vcfg["delta_k_min"], vcfg["delta_k_max"], vcfg["delta_base"])
    report, omega_frac = vw.vortex_avoidance_report(result, deltas, vcfg["r0"],
                                                    seed=cfg["seed"])
    write_csv(out_dir / "vw_avoidance.csv",
              ["delta", "mu_F", "stderr", "product", "bound", "omega_fraction"],
              list(zip(report.deltas, report.mu, report.stderr, report.product,
                       np.full(report.deltas.size, report.bound), omega_frac)))
    total0 = result.snapshots[0].total_vorticity
    total1 = result.snapshots[-1].total_vorticity
    summary.append(f"vortex-wave: {pts.shape[0]} particles, vortex moved "
                   f"{np.linalg.norm(result.vortex_path[-1] - result.vortex_path[0]):.4f}")
    failures = []
    if total0 != total1:
        failures.append("total vorticity not exactly conserved")
    return failures


_RUNNERS = {
    "dimension": _run_dimension,
    "print": _run_print,
    "conditions": _run_conditions,
    "flow": _run_flow,
    "avoidance": _run_avoidance,
    "transport": _run_transport,
    "vortex-wave": _run_vortex_wave,
}


if __name__ == "__main__":
    sys.exit(main())
