"""``gasketlab`` command line.

Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure (this
includes a ``verify`` run with a failing check).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from . import green as gr
from . import hydro, io, pde, zrp
from .errors import GasketError, NumericalError, ValidationError
from .gasket import Address, block_of, build_graph, dump_graph
from .operators import dirichlet_form, harmonic_extension, harmonic_function


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str, count: int | None = None) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from exc
    if count is not None and len(vals) != count:
        raise ValidationError(f"expected {count} values, got {len(vals)}")
    return vals


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from exc


def _address(text: str, level: int) -> Address:
    """``i,j`` at ``level`` or ``m:i,j`` at level ``m``."""
    m = level
    if ":" in text:
        head, text = text.split(":", 1)
        m = int(head)
    i, j = _ints(text)
    return Address(m, i, j)


def _manifest(args, seed=None, rng=None) -> io.RunManifest:
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return io.RunManifest(subcommand=args.command, params=params, seed=seed, rng=rng)


def _finish(manifest: io.RunManifest, out) -> None:
    if out:
        io.write_manifest(io.manifest_path(out), manifest.finish())


def _rate(text: str) -> zrp.RateFunction:
    if text == "linear":
        return zrp.rate_linear()
    if text == "indicator":
        return zrp.rate_indicator()
    if text.startswith("table:"):
        header, rows = io.read_csv(text[6:])
        col = header.index("g") if "g" in header else len(header) - 1
        return zrp.rate_from_table([r[col] for r in rows])
    raise ValidationError(f"unknown rate {text!r}; use linear, indicator or table:FILE")


def _default_profile(alpha, height=1.0):
    """Level-1 bump with corner values ``alpha``."""
    g1 = build_graph(1)
    u = hydro.bump_profile(1, height)
    u[list(g1.boundary)] = alpha
    return 1, u


# -- subcommands -------------------------------------------------------------


def cmd_graph(args) -> int:
    g = build_graph(args.level)
    print(f"level {g.level}: {g.n_vertices} vertices, {g.n_edges} edges, boundary {list(g.boundary)}")
    man = _manifest(args)
    if args.out:
        dump_graph(g, args.out)
    if args.figure:
        from .report import plot_field

        plot_field(g, np.zeros(g.n_vertices), args.figure, title=f"Γ_{g.level}", cmap="Greys")
    _finish(man, args.out)
    return 0


def cmd_harmonic(args) -> int:
    g = build_graph(args.level)
    b = _floats(args.boundary, 3)
    u = harmonic_function(g, *b)
    e0 = sum((b[i] - b[j]) ** 2 for i, j in ((0, 1), (1, 2), (0, 2)))
    print(f"E_{g.level}(h, h) = {dirichlet_form(g, u)!r}; E_0 of the corner data = {e0!r}")
    man = _manifest(args)
    if args.out:
        io.write_field(args.out, g, u)
    if args.figure:
        from .report import plot_field

        plot_field(g, u, args.figure, title="harmonic extension")
    _finish(man, args.out)
    return 0


def _phi(args, u_max):
    if args.phi == "linear":
        return pde.phi_linear()
    if args.phi == "zr-geometric":
        return pde.phi_zr_geometric(args.u_max or max(u_max, 1e-6))
    if args.phi == "custom-table":
        if not args.phi_table:
            raise ValidationError("--phi custom-table needs --phi-table FILE with columns u,phi")
        header, rows = io.read_csv(args.phi_table)
        arr = np.array(rows, dtype=float)
        return pde.phi_from_table(arr[:, 0], arr[:, 1])
    raise ValidationError(f"unknown φ {args.phi!r}")


def cmd_solve(args) -> int:
    g = build_graph(args.level)
    alpha = _floats(args.alpha, 3)
    man = _manifest(args)
    if args.u0:
        m, coarse = io.read_profile(args.u0)
        man.add_input(args.u0)
        u0 = harmonic_extension(coarse, m, g.level) if m < g.level else io.read_field(args.u0, g)
    else:
        m, coarse = _default_profile(alpha)
        u0 = harmonic_extension(coarse, m, g.level)
    phi = _phi(args, float(max(u0.max(), max(alpha))))
    prob = pde.PdeProblem(g, u0, phi, T=args.T, alpha=alpha, scheme=args.scheme, dt=args.dt)
    trace = pde.integrate(prob)
    rows = [
        (t, l2, ei, float(f.min()), float(f.max()))
        for t, l2, ei, f in zip(trace.times, trace.l2_sq, trace.energy_integral, trace.fields)
    ]
    if args.out:
        io.write_csv(args.out, ("t", "l2_sq", "energy_integral", "u_min", "u_max"), rows)
    if args.final:
        io.write_field(args.final, g, trace.fields[-1])
    print(f"integrated to T={args.T} in {trace.steps} steps ({args.scheme}); ‖u_T‖² = {float(trace.l2_sq[-1])!r}")
    if all(a == 0.0 for a in alpha):
        lhs, rhs = pde.energy_report(trace, phi.eps0)
        print(f"energy estimate: lhs={lhs!r} <= rhs={rhs!r}: {lhs <= rhs * (1 + 1e-6)}")
    if args.figure:
        from .report import plot_trace

        plot_trace(trace, args.figure)
    _finish(man, args.out)
    return 0


def cmd_green(args) -> int:
    g = build_graph(args.level)
    y = g.index_of(_address(args.source, g.level).at_level(g.level))
    col = gr.green_column_direct(g, y)
    print(f"G(., {tuple(int(c) for c in g.lattice[y])}) on Γ_{g.level}: max {float(col.values.max())!r}, residual {col.residual:.2e}")
    man = _manifest(args)
    if args.out:
        io.write_field(args.out, g, col.values)
    if args.figure:
        from .report import plot_field

        plot_field(g, col.values, args.figure, title="Green column")
    _finish(man, args.out)
    return 0


def cmd_appendix(args) -> int:
    man = _manifest(args)
    if args.mode == "diagonal":
        rows = gr.iterate_diagonal(args.steps, start=_floats(args.start, 2) if args.start else (0.0, 0.0))
        header, limit = ("k", "a_k", "b_k"), gr.DIAGONAL_FIXED_POINT
        out_rows = [(int(r[0]), float(r[1]), float(r[2])) for r in rows]
    elif args.mode == "corner":
        rows = gr.iterate_corner(args.steps, start=(0.0, 0.0, args.gamma))
        header = ("k", "alpha_k", "beta_k", "gamma_k")
        limit = tuple(gr.corner_fixed_point(args.gamma))
        out_rows = [(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in rows]
    else:
        x = _address(args.vertex, 2)
        lo = max(x.coarsest().level, args.n_min)
        seq = gr.diagonal_sequence_direct(x, lo, args.n_max)
        header, limit = ("n", "a_n", "b_n"), gr.DIAGONAL_FIXED_POINT
        out_rows = [(int(n), float(a), float(b)) for n, a, b in zip(seq.levels, seq.a, seq.b)]
        rows = np.array(out_rows, dtype=float)
    last = out_rows[-1]
    print(f"{args.mode}: last row {last}; limit {tuple(float(v) for v in limit)}")
    if args.out:
        io.write_csv(args.out, header, out_rows)
    if args.figure:
        from .report import plot_recursion

        plot_recursion(np.asarray(rows, dtype=float)[:, :3], args.figure, limit=limit[:2],
                      labels=header[1:3])
    _finish(man, args.out)
    return 0


def _initial(args, g, rate, alpha):
    text = args.init
    if text == "empty":
        return np.zeros(g.n_vertices, dtype=np.int64), None
    if text == "stationary":
        ens = zrp.stationary_ensemble(g, rate, alpha)
    elif text.startswith("equilibrium"):
        path = text.split(":", 1)[1] if ":" in text else None
        if path:
            m, coarse = io.read_profile(path)
            u0 = harmonic_extension(coarse, m, g.level) if m < g.level else io.read_field(path, g)
        else:
            m, coarse = _default_profile(alpha)
            u0 = harmonic_extension(coarse, m, g.level)
        ens = zrp.Ensemble.from_density(g, rate, u0)
    else:
        raise ValidationError(f"unknown --init {text!r}; use empty, stationary or equilibrium[:FILE]")
    return None, (lambda rng: zrp.sample_product(ens, rng=rng))


def cmd_simulate(args) -> int:
    g = build_graph(args.level)
    rate = _rate(args.rate)
    alpha = _floats(args.alpha, 3)
    observe = [s for s in args.observe.split(",") if s]
    ks = []
    for ob in observe:
        if ob.startswith("oneblock:"):
            ks.append(int(ob.split(":", 1)[1]))
        elif ob not in ("density", "timeavg"):
            raise ValidationError(f"unknown observer {ob!r}")
    site = g.index_of(_address(args.site, g.level).at_level(g.level)) if ks else None
    blocks = [block_of(g, site, k) for k in ks]
    init, sampler = _initial(args, g, rate, alpha)
    grid = zrp.macro_grid(args.T, args.samples)
    man = _manifest(args, seed=args.seed, rng=zrp.RNG_ALGORITHM)
    start = time.perf_counter()

    def task(r, seed):
        out = zrp.simulate(g, rate, alpha, init, args.T, seed, grid=grid, blocks=blocks,
                           corner_mode=args.corner_mode, snapshots="density" in observe,
                           initial_sampler=sampler)
        return out

    outs = zrp.run_replicas(task, args.replicas, args.seed, args.threads)
    data = {"times": grid, "level": g.level, "replicas": args.replicas}
    if "density" in observe:
        snaps = np.array([o.snapshots for o in outs], dtype=float)
        data["density_mean"] = snaps.mean(axis=0)
        data["density_se"] = snaps.std(axis=0, ddof=1) / np.sqrt(len(outs)) if len(outs) > 1 else None
    if "timeavg" in observe:
        avg = np.array([o.site_integrals[1] for o in outs]) / max(args.T, 1e-300)
        data["timeavg_g_mean"] = avg.mean(axis=0)
    if ks:
        tables = {}
        for b, k in enumerate(ks):
            d_rate = np.abs([o.site_integrals[1, site] - o.block_integrals[0, b] for o in outs])
            d_weighted = np.abs([o.site_integrals[2, site] - o.block_integrals[1, b] for o in outs])
            tables[str(k)] = {
                "rate": asdict(zrp.Estimate.of(d_rate)),
                "weighted": asdict(zrp.Estimate.of(d_weighted)),
            }
        data["oneblock"] = {"site": list(map(int, g.lattice[site])), "by_k": tables}
    events = int(sum(o.counters["events"] for o in outs))
    meta = {
        "seed": args.seed,
        "rng": zrp.RNG_ALGORITHM,
        "events": events,
        "wall_s": time.perf_counter() - start,
        "version": __version__,
        "counters": [o.counters for o in outs],
    }
    print(f"{args.replicas} replicas, {events} events, final mean particles "
          f"{np.mean([o.final.sum() for o in outs]):.4g}")
    if args.out:
        io.write_json(args.out, {"metadata": meta, "data": data, "manifest": man.finish().to_dict()})
    if args.figure:
        from .report import plot_field

        mean_final = np.mean([o.final for o in outs], axis=0).astype(float)
        plot_field(g, mean_final, args.figure, title=f"mean occupation at t={args.T}")
    return 0


def cmd_hydro(args) -> int:
    rate = _rate(args.rate)
    man = _manifest(args, seed=args.seed, rng=zrp.RNG_ALGORITHM)
    if args.u0:
        m, coarse = io.read_profile(args.u0)
        man.add_input(args.u0)
    else:
        m, coarse = _default_profile(_floats(args.alpha, 3) if args.alpha else (0.0, 0.0, 0.0))
    if args.alpha:
        alpha = _floats(args.alpha, 3)
        got = tuple(float(coarse[v]) for v in build_graph(m).boundary)
        if np.abs(np.subtract(got, alpha)).max() > 1e-12:
            raise ValidationError(f"profile corners {got} differ from --alpha {alpha}")
    e = hydro.HydroExperiment(
        levels=_ints(args.levels), rate=rate, u0_coarse=coarse, coarse_level=m, t=args.T,
        replicas=args.replicas, blocks=args.blocks, seed=args.seed, threads=args.threads,
        green_cache=args.green_cache,
    )
    result = hydro.run_hydro(e, out_path=args.out)
    for r in result.rows:
        print(f"n={r.level}: E‖ξ_t-u_t‖²₋₁ = {r.err.mean:.4e} ± {r.err.se:.1e}  "
              f"(t=0: {r.init.mean:.4e}); F={r.F.mean:.3e} G={r.G.mean:.3e}; "
              f"identity residual {r.residual.mean:.2e} ± {r.residual.se:.1e}")
    if args.figure:
        from .report import plot_hydro

        plot_hydro(result.rows, args.figure)
    _finish(man, args.out)
    return 0


def cmd_verify(args) -> int:
    from .verification import run_suite

    results = run_suite(args.suite, threads=args.threads, echo=print)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    if args.out:
        io.write_json(args.out, {
            "suite": args.suite,
            "results": [{"key": r.key, "title": r.title, "passed": r.passed, "detail": r.detail,
                         "elapsed_s": r.elapsed} for r in results],
        })
    return 0 if passed == len(results) else 2


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gasketlab", description="Sierpinski gasket analysis and particle simulation")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("graph", help="build Γ_n and report its size")
    s.add_argument("--level", type=int, required=True)
    s.add_argument("--out", help="graph JSON")
    s.add_argument("--figure")
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("harmonic", help="harmonic extension of corner values")
    s.add_argument("--level", type=int, required=True)
    s.add_argument("--boundary", default="1,0,0", help="values at a0,a1,a2")
    s.add_argument("--out", help="field CSV")
    s.add_argument("--figure")
    s.set_defaults(func=cmd_harmonic)

    s = sub.add_parser("solve", help="integrate du/dt = Δ_n φ(u)")
    s.add_argument("--level", type=int, required=True)
    s.add_argument("--phi", choices=("linear", "zr-geometric", "custom-table"), default="linear")
    s.add_argument("--phi-table", help="CSV of (u, phi) pairs for custom-table")
    s.add_argument("--u-max", type=float, help="working range for ε₀ (zr-geometric)")
    s.add_argument("--alpha", default="0,0,0")
    s.add_argument("--u0", help="field CSV (any level <= n; coarser fields are extended harmonically)")
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--scheme", choices=("rk4", "implicit"), default="rk4")
    s.add_argument("--dt", type=float)
    s.add_argument("--out", help="trace CSV")
    s.add_argument("--final", help="field CSV of u_T")
    s.add_argument("--figure")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("green", help="Green function column by direct solve")
    s.add_argument("--level", type=int, required=True)
    s.add_argument("--source", required=True, help="i,j at the given level, or m:i,j")
    s.add_argument("--out", help="field CSV")
    s.add_argument("--figure")
    s.set_defaults(func=cmd_green)

    s = sub.add_parser("appendix", help="diagonal and corner recursions")
    s.add_argument("--mode", choices=("diagonal", "corner", "direct"), default="diagonal")
    s.add_argument("--steps", type=int, default=60)
    s.add_argument("--start", help="a,b starting pair for diagonal mode")
    s.add_argument("--gamma", type=float, default=-0.5)
    s.add_argument("--vertex", default="2:1,1", help="vertex m:i,j for direct mode")
    s.add_argument("--n-min", type=int, default=3)
    s.add_argument("--n-max", type=int, default=8)
    s.add_argument("--out", help="sequence CSV")
    s.add_argument("--figure")
    s.set_defaults(func=cmd_appendix)

    s = sub.add_parser("simulate", help="zero-range process replicas")
    s.add_argument("--level", type=int, required=True)
    s.add_argument("--rate", default="indicator", help="indicator, linear or table:FILE")
    s.add_argument("--alpha", default="0,0,0")
    s.add_argument("--init", default="empty", help="empty, stationary or equilibrium[:FILE]")
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--observe", default="density", help="comma list of density, timeavg, oneblock:k")
    s.add_argument("--site", default="2:1,1", help="vertex for oneblock observers")
    s.add_argument("--corner-mode", choices=("alpha", "omit"), default="alpha")
    s.add_argument("--samples", type=int, default=10, help="uniform grid intervals for snapshots")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", help="run JSON")
    s.add_argument("--figure")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("hydro", help="particles versus PDE in H_-1 over levels")
    s.add_argument("--levels", default="3,4,5")
    s.add_argument("--rate", default="indicator")
    s.add_argument("--u0", help="coarse profile CSV (level from a level column or the row count)")
    s.add_argument("--alpha", help="corner densities; must match the profile")
    s.add_argument("--T", type=float, default=0.05)
    s.add_argument("--replicas", type=int, default=100)
    s.add_argument("--blocks", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--green-cache", help="directory for cached Δ_n G diagonals")
    s.add_argument("--out", help="result CSV")
    s.add_argument("--figure")
    s.set_defaults(func=cmd_hydro)

    s = sub.add_parser("verify", help="run the acceptance checks")
    s.add_argument("--suite", choices=("exact", "all"), default="exact")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", help="results JSON")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except ValidationError as exc:
        print(f"gasketlab {args.command}: invalid input: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"gasketlab {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except GasketError as exc:
        print(f"gasketlab {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"gasketlab {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
