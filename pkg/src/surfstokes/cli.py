"""Batch convergence-study driver and verification suites.

``surfstokes study`` builds a refinement family, solves the penalized
stream-function system on every level, measures all error variants and
emits a CSV or Markdown table with observed convergence orders.
``surfstokes verify`` runs the identity, operator, algebra, geometric
fidelity and negative-control suites and prints a machine-readable
summary.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (
    ErrorRecord,
    observed_orders,
    random_surface_points,
    stream_error,
    velocity_error,
    verify_global_ibp,
    verify_hessian_identities,
)
from .assembly import (
    assemble_rhs,
    assemble_system,
    manufactured_force,
    manufactured_problem,
)
from .fe_space import build_fe_space, reference_basis, triangle_quadrature
from .geometry import LevelSetSurface, frame_arrays
from .jets import X1, X2
from .linalg import NonConvergenceError, dense_eigen_min, solve_dense_kkt, solve_mean_zero
from .mesh import build_base_mesh, build_mapped_mesh, mesh_size, refine
from .surface_ops import element_frames, hess_like_tables, hessian_tables

ALL_VARIANTS = ("stream_tilde", "stream_ce", "vel_piola", "vel_ce")
CSV_HEADER = (
    "level,h,ndof,err_stream_tilde,rate,err_stream_ce,rate,"
    "err_vel_piola,rate,err_vel_ce,rate,iters,seconds"
)


def make_surface(name: str) -> LevelSetSurface:
    if name == "sphere":
        return LevelSetSurface.unit_sphere()
    if name == "ellipsoid":
        return LevelSetSurface.stretched_ellipsoid()
    raise ValueError(f"unknown surface {name!r}")


@dataclass
class StudyConfig:
    surface: str = "ellipsoid"
    k: int = 2
    k_g: int = 2
    levels: tuple[int, ...] = (1, 2, 3, 4)
    sigma: float | None = None
    quad_order: int | None = None
    solver_tol: float = 1e-10
    max_iter: int = 30000
    variants: tuple[str, ...] = ALL_VARIANTS
    problem: str = "exponential"
    out: str | None = None
    fmt: str = "csv"
    timings: bool = False

    def validate(self) -> None:
        if not 2 <= self.k <= 4:
            raise ValueError("field degree k must be in 2..4")
        if not 1 <= self.k_g <= 4:
            raise ValueError("geometric degree k_g must be in 1..4")
        if len(self.levels) == 0:
            raise ValueError("levels must be a nonempty increasing list")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if min(self.levels) < 0:
            raise ValueError("levels must be non-negative")
        unknown = set(self.variants) - set(ALL_VARIANTS)
        if unknown:
            raise ValueError(f"unknown error variants {sorted(unknown)}")
        if self.fmt not in ("csv", "md"):
            raise ValueError("output format must be csv or md")
        make_surface(self.surface)
        manufactured_problem(self.problem)

    @property
    def sigma_value(self) -> float:
        return 10.0 * self.k**2 if self.sigma is None else float(self.sigma)


@dataclass
class ConvergenceReport:
    config: StudyConfig
    records: list[ErrorRecord] = field(default_factory=list)

    def rates(self) -> dict[str, list]:
        hs = [r.h for r in self.records]
        out = {}
        for variant in ALL_VARIANTS:
            errs = [getattr(r, f"err_{variant}") for r in self.records]
            if len(errs) >= 2 and all(e is not None for e in errs):
                out[variant] = observed_orders(errs, hs)
            else:
                out[variant] = [None] * max(len(errs) - 1, 0)
        return out

    def to_csv_text(self) -> str:
        rates = self.rates()
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for i, rec in enumerate(self.records):
            cells = [str(rec.level), f"{rec.h:.6e}", str(rec.ndof)]
            for variant in ALL_VARIANTS:
                err = getattr(rec, f"err_{variant}")
                cells.append("" if err is None else f"{err:.6e}")
                rate = rates[variant][i - 1] if i > 0 else None
                cells.append("" if rate is None else f"{rate:.5f}")
            cells.append(str(rec.iterations))
            seconds = rec.seconds if self.config.timings else 0.0
            cells.append(f"{seconds:.3f}")
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def to_markdown_text(self) -> str:
        rates = self.rates()
        cols = ["level", "h", "ndof"]
        for variant in ALL_VARIANTS:
            cols += [f"err_{variant}", "rate"]
        cols += ["iters", "seconds"]
        lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        for i, rec in enumerate(self.records):
            cells = [str(rec.level), f"{rec.h:.4e}", str(rec.ndof)]
            for variant in ALL_VARIANTS:
                err = getattr(rec, f"err_{variant}")
                cells.append("-" if err is None else f"{err:.4e}")
                rate = rates[variant][i - 1] if i > 0 else None
                cells.append("-" if rate is None else f"{rate:.3f}")
            cells.append(str(rec.iterations))
            cells.append(f"{rec.seconds:.3f}" if self.config.timings else "0.000")
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def write(self) -> None:
        if self.config.out is None:
            return
        text = self.to_csv_text() if self.config.fmt == "csv" else self.to_markdown_text()
        with open(self.config.out, "w", encoding="ascii", newline="") as f:
            f.write(text)


def solve_level(surface, base, config: StudyConfig):
    """Assemble and solve one refinement level; returns (record, mesh, space, coeffs)."""
    mesh = build_mapped_mesh(surface, base, config.k_g)
    space = build_fe_space(mesh, config.k)
    stream, pressure = manufactured_problem(config.problem)
    system = assemble_system(mesh, space, config.sigma_value, config.quad_order)
    b = assemble_rhs(
        mesh,
        space,
        lambda x: manufactured_force(surface, x, stream, pressure),
        config.quad_order,
    )
    sol = solve_mean_zero(
        system.matrix, system.mean_vector, b, config.solver_tol, config.max_iter
    )
    rec = ErrorRecord(
        level=base.level,
        h=mesh_size(mesh)[0],
        ndof=space.ndof,
        iterations=sol.iterations,
    )
    if "stream_tilde" in config.variants:
        rec.err_stream_tilde = stream_error(mesh, space, sol.x, "tilde", stream)
    if "stream_ce" in config.variants:
        rec.err_stream_ce = stream_error(mesh, space, sol.x, "ce", stream)
    if "vel_piola" in config.variants:
        rec.err_vel_piola = velocity_error(mesh, space, sol.x, "piola", stream)
    if "vel_ce" in config.variants:
        rec.err_vel_ce = velocity_error(mesh, space, sol.x, "ce", stream)
    return rec, mesh, space, sol.x


def run_convergence_study(config: StudyConfig) -> ConvergenceReport:
    """Run the whole refinement family; flushes partial output on failure."""
    config.validate()
    surface = make_surface(config.surface)
    report = ConvergenceReport(config)
    base = build_base_mesh(surface, config.levels[0])
    try:
        for level in config.levels:
            while base.level < level:
                base = refine(surface, base)
            t0 = time.perf_counter()
            rec, _, _, _ = solve_level(surface, base, config)
            rec.seconds = time.perf_counter() - t0
            report.records.append(rec)
    except NonConvergenceError:
        report.write()
        raise
    report.write()
    return report


# -- verification suites -----------------------------------------------------


@dataclass
class SuiteResult:
    passed: bool
    details: dict


def _suite_hessian_identities(surface, seed=7) -> SuiteResult:
    pts = random_surface_points(surface, 50, seed)
    res_stream = verify_hessian_identities(surface, manufactured_problem("exponential")[0], pts)
    res_killing = verify_hessian_identities(surface, manufactured_problem("rotation")[0], pts)
    ok = res_stream <= 1e-8 and res_killing <= 1e-8
    return SuiteResult(ok, {"stream": res_stream, "rotation": res_killing})


def _suite_ibp(level: int, k_g: int) -> SuiteResult:
    sphere = LevelSetSurface.unit_sphere()
    levels = [max(level - 2, 0), max(level - 1, 1), level]
    residuals = [
        verify_global_ibp(sphere, X1 * X2, X1 * X2, 2, lv, k_g).residual for lv in levels
    ]
    hs = [np.sqrt(2.0) / 2**lv for lv in levels]
    rate = observed_orders(residuals, hs)[-1]
    killing = verify_global_ibp(sphere, 1.0 * X2, 1.0 * X2, 1, level, k_g)
    decreasing = residuals[0] > residuals[-1]
    rate_ok = rate is not None and abs(rate - (k_g + 1)) <= 1.5
    ok = decreasing and (rate_ok or residuals[-1] < 1e-10) and killing.residual <= 1e-8
    return SuiteResult(
        ok,
        {
            "residuals": residuals,
            "rate": rate,
            "expected_rate": k_g + 1,
            "killing_residual": killing.residual,
        },
    )


def _suite_operators(surface, level: int, k: int, k_g: int, seed=11) -> SuiteResult:
    base = build_base_mesh(surface, min(level, 2))
    mesh = build_mapped_mesh(surface, base, k_g)
    space = build_fe_space(mesh, k)
    rule = triangle_quadrature(2 * k + 2)
    geom_tab = reference_basis(k_g).eval(rule.points)
    ref = space.basis.eval(rule.points)
    rng = np.random.default_rng(seed)
    sym = trace = equiv = 0.0
    for t in range(mesh.n_elements):
        fr = element_frames(mesh, t, rule.points, tables=geom_tab)
        coeffs = rng.standard_normal(space.basis.n_basis)
        g = np.einsum("qnd,n->qd", ref[1], coeffs)[:, None, :]
        h = np.einsum("qnde,n->qde", ref[2], coeffs)[:, None, :, :]
        M = hessian_tables(fr, g, h)[:, 0]
        H = hess_like_tables(fr, g, h)[:, 0]
        scale = np.linalg.norm(M, axis=(-2, -1)) + 1e-30
        sym = max(sym, float((np.linalg.norm(M - M.transpose(0, 2, 1), axis=(-2, -1)) / scale).max()))
        hscale = np.linalg.norm(H, axis=(-2, -1)) + 1e-30
        trace = max(trace, float((np.abs(np.trace(H, axis1=1, axis2=2)) / hscale).max()))
        from .surface_ops import curl_deformation_tables

        E = curl_deformation_tables(fr, g, h)[:, 0]
        equiv = max(equiv, float(np.linalg.norm(E - H, axis=(-2, -1)).max() / (1.0 + hscale.max())))
        if t >= 19:
            break
    ok = sym <= 1e-13 and trace <= 1e-12 and equiv <= 1e-10
    return SuiteResult(ok, {"symmetry": sym, "trace": trace, "equivalence": equiv})


def _suite_algebra(surface, level: int, k: int, sigma: float, k_g: int) -> SuiteResult:
    base = build_base_mesh(surface, min(level, 1))
    mesh = build_mapped_mesh(surface, base, k_g)
    space = build_fe_space(mesh, k)
    system = assemble_system(mesh, space, sigma)
    stream, pressure = manufactured_problem("exponential")
    b = assemble_rhs(mesh, space, lambda x: manufactured_force(surface, x, stream, pressure))
    asym = system.matrix.max_asymmetry()
    scale = float(np.abs(system.matrix.values).max())
    ones_residual = float(np.abs(system.matrix.matvec(np.ones(space.ndof))).max())
    eig_min = dense_eigen_min(system.matrix, system.mean_vector)
    sol = solve_mean_zero(system.matrix, system.mean_vector, b)
    x_ref, _ = solve_dense_kkt(system.matrix, system.mean_vector, b)
    rel = float(np.linalg.norm(sol.x - x_ref) / np.linalg.norm(x_ref))
    cx = abs(float(system.mean_vector @ sol.x)) / (
        np.linalg.norm(sol.x) * np.linalg.norm(system.mean_vector)
    )
    ok = (
        asym == 0.0
        and ones_residual <= 1e-12 * scale
        and eig_min > 0.0
        and rel <= 1e-8
        and cx <= 1e-10
    )
    return SuiteResult(
        ok,
        {
            "max_asymmetry": asym,
            "ones_residual": ones_residual,
            "eig_min": eig_min,
            "solver_vs_kkt": rel,
            "constraint": cx,
        },
    )


def _suite_geometry(surface, k_g: int) -> SuiteResult:
    rule = triangle_quadrature(8)
    geom_tab = reference_basis(k_g).eval(rule.points)
    max_d, max_n, hs = [], [], []
    for level in (1, 2, 3):
        base = build_base_mesh(surface, level)
        mesh = build_mapped_mesh(surface, base, k_g)
        d_worst = n_worst = 0.0
        for t in range(mesh.n_elements):
            fr = element_frames(mesh, t, rule.points, tables=geom_tab)
            normal, dist, _ = frame_arrays(surface, fr.x)
            d_worst = max(d_worst, float(np.abs(dist).max()))
            n_worst = max(n_worst, float(np.linalg.norm(normal - fr.n, axis=1).max()))
        max_d.append(d_worst)
        max_n.append(n_worst)
        hs.append(mesh_size(mesh)[0])
    rate_d = observed_orders(max_d, hs)
    rate_n = observed_orders(max_n, hs)
    ok = abs(rate_d[-1] - (k_g + 1)) <= 0.5 and abs(rate_n[-1] - k_g) <= 0.5
    return SuiteResult(
        ok,
        {
            "max_dist": max_d,
            "max_normal_gap": max_n,
            "dist_rates": rate_d,
            "normal_rates": rate_n,
        },
    )


def _suite_negative_control(surface, k: int, sigma: float, k_g: int) -> SuiteResult:
    base = build_base_mesh(surface, 1)
    mesh = build_mapped_mesh(surface, base, k_g)
    space = build_fe_space(mesh, k)
    system = assemble_system(mesh, space, sigma)
    flipped = system.matrix_with_sigma(-sigma)
    asym = flipped.max_asymmetry()
    eig_min = dense_eigen_min(flipped, system.mean_vector)
    ok = asym == 0.0 and eig_min <= 0.0
    return SuiteResult(ok, {"flipped_asymmetry": asym, "flipped_eig_min": eig_min})


def run_verification(
    surface_name: str = "sphere",
    level: int = 2,
    k: int = 2,
    k_g: int = 2,
    sigma: float | None = None,
) -> dict[str, SuiteResult]:
    surface = make_surface(surface_name)
    sig = 10.0 * k**2 if sigma is None else float(sigma)
    return {
        "hessian_identities": _suite_hessian_identities(surface),
        "ibp_balance": _suite_ibp(level, k_g),
        "operators": _suite_operators(surface, level, k, k_g),
        "algebra": _suite_algebra(surface, level, k, sig, k_g),
        "geometry_fidelity": _suite_geometry(surface, k_g),
        "negative_control": _suite_negative_control(surface, k, sig, k_g),
    }


# -- command line ------------------------------------------------------------


def _parse_levels(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    if ".." in text:
        a, b = text.split("..", 1)
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(p) for p in text.split(",") if p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfstokes",
        description="Stream-function interior-penalty solver on closed level-set surfaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    st = sub.add_parser("study", help="run a batch convergence study")
    st.add_argument("--surface", choices=("ellipsoid", "sphere"), default="ellipsoid")
    st.add_argument("--k", type=int, default=2, help="field polynomial degree")
    st.add_argument("--kg", type=int, default=2, help="geometry polynomial degree")
    st.add_argument("--levels", default="1..4", help="refinement levels, e.g. 1..4 or 1,2,3")
    st.add_argument("--sigma", type=float, default=None, help="penalty (default 10 k^2)")
    st.add_argument("--quad-order", type=int, default=None)
    st.add_argument("--solver-tol", type=float, default=1e-10)
    st.add_argument("--max-iter", type=int, default=30000)
    st.add_argument("--variants", default=",".join(ALL_VARIANTS))
    st.add_argument("--problem", choices=("exponential", "rotation"), default="exponential")
    st.add_argument("--out", default=None, help="output table path")
    st.add_argument("--format", dest="fmt", choices=("csv", "md"), default="csv")
    st.add_argument(
        "--timings",
        action="store_true",
        help="write measured wall times (off keeps identical runs bitwise identical)",
    )

    vf = sub.add_parser("verify", help="run the verification suites")
    vf.add_argument("--surface", choices=("ellipsoid", "sphere"), default="sphere")
    vf.add_argument("--level", type=int, default=2)
    vf.add_argument("--k", type=int, default=2)
    vf.add_argument("--kg", type=int, default=2)
    vf.add_argument("--sigma", type=float, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "study":
        try:
            config = StudyConfig(
                surface=args.surface,
                k=args.k,
                k_g=args.kg,
                levels=_parse_levels(args.levels),
                sigma=args.sigma,
                quad_order=args.quad_order,
                solver_tol=args.solver_tol,
                max_iter=args.max_iter,
                variants=tuple(v for v in args.variants.split(",") if v),
                problem=args.problem,
                out=args.out,
                fmt=args.fmt,
                timings=args.timings,
            )
            config.validate()
        except ValueError as exc:
            parser.error(str(exc))
        try:
            report = run_convergence_study(config)
        except NonConvergenceError as exc:
            print(f"solver failed: {exc}", file=sys.stderr)
            return 1
        sys.stdout.write(report.to_markdown_text())
        return 0
    if args.command == "verify":
        suites = run_verification(args.surface, args.level, args.k, args.kg, args.sigma)
        all_ok = True
        for name, result in suites.items():
            status = "PASS" if result.passed else "FAIL"
            print(f"{name}: {status}")
            all_ok &= result.passed
        print(
            json.dumps(
                {
                    name: {"passed": r.passed, "details": r.details}
                    for name, r in suites.items()
                },
                default=float,
            )
        )
        return 0 if all_ok else 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
