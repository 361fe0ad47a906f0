"""Command-line front end: ``choquard {solve,sweep,spectrum,hls}``.

Settings come from built-in defaults, then an optional ``key=value`` file
(``--config``), then command-line flags.  Every run writes the resolved
settings next to its outputs.  Exit codes: 0 success (or PASS), 1 bad
configuration or parameters outside the admissible windows, 2 numerical
failure (non-convergence, or a FAIL verdict).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from choquard import linop, riesz, solver
from choquard.errors import ChoquardError, ConfigError, ConvergenceError, DomainError, UsageError
from choquard.grid import RadialFn, h1_distance, make_grid, sup_norm
from choquard.specfun import Params, hls_bound, hls_sharp_diagonal, scaling_s

__all__ = ["main", "fit_decay_rate", "SweepRecord", "hls_extremizer_ratio", "load_config", "write_svg"]

log = logging.getLogger("choquard")

CSV_COLUMNS = (
    "alpha",
    "converged",
    "energy",
    "h1_dist",
    "sup_dist",
    "nehari_residual",
    "pde_residual",
    "iterations",
    "decay_rate_fit",
    "amplitude_ratio",
)

DEFAULTS = {
    "N": 3,
    "p": 2.0,
    "alpha": 2.0,
    "alphas": "",
    "mode": "alpha0",
    "grid_n": solver.DEFAULT_N,
    "rmax": solver.DEFAULT_RMAX,
    "tol": 1e-8,
    "max_iter": 500,
    "jobs": 1,
    "out": "choquard-out",
    "rescaled": False,
}

SWEEP_DEFAULTS = {
    "alpha0": {"p": 2.0, "alphas": "1,0.5,0.25,0.1,0.05"},
    "alphaN": {"p": 3.0, "alphas": "2,2.5,2.8,2.9,2.95"},
}

_TYPES = {"N": int, "p": float, "alpha": float, "alphas": str, "mode": str, "grid_n": int, "rmax": float,
          "tol": float, "max_iter": int, "jobs": int, "out": str, "rescaled": None}


# ---------------------------------------------------------------------------
# configuration


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def load_config(path) -> dict:
    """Read a ``key = value`` file; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def _coerce(key, value):
    kind = _TYPES[key]
    try:
        if kind is None:
            return _parse_bool(value)
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def _resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.command == "sweep":
        mode = getattr(args, "mode", None) or DEFAULTS["mode"]
        cfg.update(SWEEP_DEFAULTS.get(mode, {}))
    if args.config:
        file_cfg = load_config(args.config)
        if args.command == "sweep" and "mode" in file_cfg and getattr(args, "mode", None) is None:
            cfg.update(SWEEP_DEFAULTS.get(file_cfg["mode"], {}))
        cfg.update(file_cfg)
    for key in _TYPES:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _write_resolved(cfg: dict, out: Path, command: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"# resolved settings for `choquard {command}`"]
    lines += [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    (out / f"{command}.config").write_text("\n".join(lines) + "\n")


def _grid(cfg):
    if cfg["grid_n"] < 16 or cfg["rmax"] <= 0:
        raise ConfigError("grid-n must be >= 16 and rmax > 0")
    return make_grid(int(cfg["grid_n"]), float(cfg["rmax"]), "uniform", int(cfg["N"]))


# ---------------------------------------------------------------------------
# diagnostics


def fit_decay_rate(profile, window=(0.5, 0.8)) -> float:
    """Rate c in u ≈ C e^{-c r}: minus the least-squares slope of log u on [0.5, 0.8]·R_max."""
    if isinstance(profile, RadialFn):
        r, u, R = profile.grid.nodes, profile.values, profile.grid.R_max
    else:
        r, u = (np.asarray(a, dtype=float) for a in profile)
        R = float(r[-1])
    sel = (r >= window[0] * R) & (r <= window[1] * R)
    if sel.sum() < 2:
        raise DomainError("decay fit window holds fewer than two nodes")
    if np.any(u[sel] <= 0):
        raise DomainError("profile is not positive on the decay fit window; increase R_max or the grid resolution")
    slope = np.polyfit(r[sel], np.log(u[sel]), 1)[0]
    return float(-slope)


def hls_extremizer_ratio(N: int, alpha: float, n: int = 1200, R_max: float = 60.0) -> float:
    """∬ h(x)h(y)|x-y|^{-(N-α)} / ‖h‖_t² for h = (1+|x|²)^{-(N+α)/2}, t = 2N/(N+α).

    The part with both points inside the ball of radius R_max uses the
    sector-0 kernel matrix.  The cross part with one point outside is added
    in the monopole approximation, using h ~ r^{-(N+α)}; the part with both
    points outside is O(R_max^{-N-α}) and dropped.
    """
    if not 0.0 < alpha < N:
        raise DomainError(f"alpha must lie in (0, {N}), got {alpha}")
    g = make_grid(n, R_max, "uniform", N)
    r, m, S = g.nodes, g.mass, g.sphere
    h = (1.0 + r * r) ** (-(N + alpha) / 2.0)
    K = riesz.build_kernel(g, alpha, 0)
    inner = S * float(m @ (h * K.apply(h)))
    l1 = S * (float(m @ h) + R_max ** (-alpha) / alpha)
    inner += 2.0 * S * l1 * R_max ** (-N) / N
    t = 2.0 * N / (N + alpha)
    lt = (S * (float(m @ h**t) + R_max ** (-N) / N)) ** (1.0 / t)
    return inner / lt**2


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRecord:
    alpha: float
    converged: bool
    energy: float = math.nan
    h1_dist: float = math.nan
    sup_dist: float = math.nan
    nehari_residual: float = math.nan
    pde_residual: float = math.nan
    iterations: int = 0
    decay_rate_fit: float = math.nan
    amplitude_ratio: float = math.nan
    message: str = ""

    def row(self) -> list[str]:
        def f(x):
            return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.12e}"

        return [
            f"{self.alpha:.6g}",
            "true" if self.converged else "false",
            f(self.energy),
            f(self.h1_dist),
            f(self.sup_dist),
            f(self.nehari_residual),
            f(self.pde_residual),
            str(int(self.iterations)),
            f(self.decay_rate_fit),
            f(self.amplitude_ratio),
        ]


def _sweep_one(task) -> SweepRecord:
    mode, N, p, alpha, n, R, tol, max_iter, limit_values = task
    grid = make_grid(n, R, "uniform", N)
    limit = RadialFn(grid, np.asarray(limit_values), 0)
    try:
        params = Params(N, alpha, p)
        params.require_admissible()
        st = solver.solve_choquard(params, grid, tol=tol, max_iter=max_iter)
        decay = fit_decay_rate(st.profile)
        amp = math.nan
        if mode == "alphaN":
            amp = st.profile.values[0] * scaling_s(N, alpha, p) / limit.values[0]
            st = solver.rescale_to_v(st)
        bad = st.invariant_violations(max(tol, 1e-8))
        rec = SweepRecord(
            alpha=alpha,
            converged=not bad,
            energy=st.energy,
            h1_dist=h1_distance(st.profile, limit),
            sup_dist=sup_norm(st.profile - limit),
            nehari_residual=st.nehari_residual,
            pde_residual=st.pde_residual,
            iterations=st.iterations,
            decay_rate_fit=decay,
            amplitude_ratio=amp,
            message="; ".join(bad),
        )
    except ConvergenceError as exc:
        rec = SweepRecord(alpha=alpha, converged=False, iterations=max_iter, message=str(exc))
        if exc.state is not None:
            rec.pde_residual = exc.state.pde_residual
    except (ChoquardError, ArithmeticError) as exc:
        rec = SweepRecord(alpha=alpha, converged=False, message=str(exc))
    return rec


def write_csv(records, path: Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in sorted(records, key=lambda r: r.alpha):
        w.writerow(rec.row())
    path.write_text(buf.getvalue())


def write_svg(xs, ys, path: Path, xlabel: str, ylabel: str, title: str = "") -> None:
    """Polyline of (x, y) on log-log axes; nonpositive or non-finite points are skipped."""
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y)]
    W, H, m = 480, 360, 60
    body = []
    if pts:
        lx = [math.log10(x) for x, _ in pts]
        ly = [math.log10(y) for _, y in pts]
        x0, x1 = math.floor(min(lx)), math.ceil(max(lx))
        y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
        x1 = x1 if x1 > x0 else x0 + 1
        y1 = y1 if y1 > y0 else y0 + 1

        def X(v):
            return m + (v - x0) / (x1 - x0) * (W - 2 * m)

        def Y(v):
            return H - m - (v - y0) / (y1 - y0) * (H - 2 * m)

        for d in range(x0, x1 + 1):
            body.append(f'<line x1="{X(d):.1f}" y1="{H - m}" x2="{X(d):.1f}" y2="{H - m + 5}" stroke="black"/>')
            body.append(f'<text x="{X(d):.1f}" y="{H - m + 18}" font-size="11" text-anchor="middle">1e{d}</text>')
        for d in range(y0, y1 + 1):
            body.append(f'<line x1="{m - 5}" y1="{Y(d):.1f}" x2="{m}" y2="{Y(d):.1f}" stroke="black"/>')
            body.append(f'<text x="{m - 8}" y="{Y(d) + 4:.1f}" font-size="11" text-anchor="end">1e{d}</text>')
        poly = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in sorted(zip(lx, ly)))
        body.append(f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="2"/>')
        for a, b in zip(lx, ly):
            body.append(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" fill="steelblue"/>')
    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="{m}" y="{m}" width="{W - 2 * m}" height="{H - 2 * m}" fill="none" stroke="black"/>',
        *body,
        f'<text x="{W / 2}" y="{H - 15}" font-size="13" text-anchor="middle">{xlabel}</text>',
        f'<text x="15" y="{H / 2}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {H / 2})">{ylabel}</text>',
        f'<text x="{W / 2}" y="{m / 2}" font-size="14" text-anchor="middle">{title}</text>',
        "</svg>",
    ]
    path.write_text("\n".join(svg) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(cfg: dict) -> int:
    out = Path(cfg["out"])
    _write_resolved(cfg, out, "solve")
    params = Params(cfg["N"], cfg["alpha"], cfg["p"])
    params.require_admissible()
    grid = _grid(cfg)
    try:
        st = solver.solve_choquard(params, grid, tol=cfg["tol"], max_iter=cfg["max_iter"])
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        print("residual trace: " + " ".join(f"{x:.3e}" for x in exc.trace), file=sys.stderr)
        if exc.state is not None:
            (out / "groundstate.json").write_text(exc.state.to_json())
        return 2
    if cfg["rescaled"]:
        st = solver.rescale_to_v(st)
    (out / "groundstate.json").write_text(st.to_json())
    print(
        f"converged N={params.N} p={params.p:g} alpha={params.alpha:g} formulation={st.formulation} "
        f"E={st.energy:.12g} nehari={st.nehari_residual:.3e} pde={st.pde_residual:.3e} iterations={st.iterations}"
    )
    return 0


def cmd_sweep(cfg: dict) -> int:
    mode = cfg["mode"]
    if mode not in SWEEP_DEFAULTS:
        raise ConfigError(f"sweep mode must be alpha0 or alphaN, got {mode!r}")
    alphas = [float(a) for a in str(cfg["alphas"]).replace(" ", "").split(",") if a]
    if not alphas:
        raise ConfigError("empty alphas list")
    N, p = int(cfg["N"]), float(cfg["p"])
    for a in alphas:
        P = Params(N, a, p)
        bad = P.near_zero_violations() if mode == "alpha0" else P.near_N_violations()
        if bad:
            raise DomainError(f"alpha = {a:g} is outside the {mode} window: " + "; ".join(bad))
    out = Path(cfg["out"])
    _write_resolved(cfg, out, "sweep")
    grid = _grid(cfg)
    if mode == "alpha0":
        limit = solver.solve_local_shooting(N, 2.0 * p, grid)
    else:
        limit = solver.limit_N_ground_state(N, p, grid)
    (out / f"limit_{mode}.json").write_text(limit.to_json())
    tasks = [(mode, N, p, a, grid.n, grid.R_max, cfg["tol"], cfg["max_iter"], limit.profile.values.tolist()) for a in alphas]
    jobs = max(1, int(cfg["jobs"]))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            records = list(ex.map(_sweep_one, tasks))
    else:
        records = [_sweep_one(t) for t in tasks]
    records.sort(key=lambda r: r.alpha)
    write_csv(records, out / f"sweep_{mode}.csv")
    if mode == "alpha0":
        xs, xlabel = [r.alpha for r in records], "alpha"
    else:
        xs, xlabel = [N - r.alpha for r in records], "N - alpha"
    write_svg(xs, [r.h1_dist for r in records], out / f"sweep_{mode}.svg", xlabel, "H1 distance to limit", f"{mode} sweep")
    meta = {"limit_energy": limit.energy, "limit_h1_norm": limit.h1_norm, "messages": {f"{r.alpha:g}": r.message for r in records if r.message}}
    (out / f"sweep_{mode}.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    for r in records:
        print(",".join(r.row()))
    return 0 if all(r.converged for r in records) else 2


def cmd_spectrum(cfg: dict) -> int:
    p = float(cfg["p"])
    if p < 2.0:
        raise DomainError(f"p = {p:g} < 2: the linearised equation is only well defined for p >= 2")
    out = Path(cfg["out"])
    _write_resolved(cfg, out, "spectrum")
    params = Params(cfg["N"], cfg["alpha"], p)
    params.require_admissible()
    grid = _grid(cfg)
    try:
        st = solver.solve_choquard(params, grid, tol=cfg["tol"], max_iter=cfg["max_iter"])
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return 2
    if cfg["rescaled"]:
        st = solver.rescale_to_v(st)
    report = linop.nondegeneracy_report(st)
    (out / "spectrum.json").write_text(linop.report_json(report))
    print(
        f"{report['verdict']} l1_eigenvalue={report['l1_eigenvalue']:.3e} l1_similarity={report['l1_similarity']:.8f} "
        f"l0_gap={report['l0_gap']:.4g} l0_negative={report['l0_negative_count']} l2_gap={report['l2_gap']:.4g}"
    )
    return 0 if report["verdict"] == "PASS" else 2


def cmd_hls(cfg: dict) -> int:
    N, alpha = int(cfg["N"]), float(cfg["alpha"])
    if not 0.0 < alpha < N:
        raise DomainError(f"alpha must lie in (0, {N}), got {alpha:g}")
    t = 2.0 * N / (N + alpha)
    bound = hls_bound(N, alpha, t)
    sharp = hls_sharp_diagonal(N, alpha)
    ratio = hls_extremizer_ratio(N, alpha)
    rows = [
        ("N", f"{N}"),
        ("alpha", f"{alpha:g}"),
        ("diagonal exponent", f"{t:.12g}"),
        ("bound", f"{bound:.12g}"),
        ("sharp diagonal constant", f"{sharp:.12g}"),
        ("extremizer ratio", f"{ratio:.12g}"),
        ("relative deviation", f"{abs(ratio - sharp) / sharp:.3e}"),
    ]
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--N", type=int)
    common.add_argument("--p", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--alphas", type=str, help="comma-separated list")
    common.add_argument("--grid-n", dest="grid_n", type=int)
    common.add_argument("--rmax", type=float)
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", type=str)
    common.add_argument("--config", type=str)
    common.add_argument("--rescaled", action="store_const", const=True, default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="choquard", description="Radial ground states of the Choquard equation")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="compute one ground state")
    sw = sub.add_parser("sweep", parents=[common], help="alpha sweep against the limit profile")
    sw.add_argument("--mode", choices=sorted(SWEEP_DEFAULTS))
    sub.add_parser("spectrum", parents=[common], help="nondegeneracy report")
    sub.add_parser("hls", parents=[common], help="HLS constants")
    return ap


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "spectrum": cmd_spectrum, "hls": cmd_hls}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DomainError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
