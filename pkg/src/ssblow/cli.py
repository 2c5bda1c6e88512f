"""Command-line front end: profile construction, scans, simulations,
verification suites, and plot-ready CSV export.

Config files are flat ``key=value`` text; command-line flags override file
entries.  Every command writes exactly one ``manifest.json`` into the output
directory, embedding the config verbatim, the tool version, and a content
hash, so reruns with the same seed/config are byte-identical.

Exit codes: 0 pass, 1 check failure, 2 usage error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import angular as ang
from . import biot_savart as bsv
from . import checks as chk
from . import model as mdl
from .fields import EVEN_ODD, ODD_ODD, AngularField, save_field2d
from .grids import radial_grid, theta_grid

COMMANDS = ("profile", "scan", "invariant", "simulate", "elliptic",
            "verify", "convergence")


@dataclass
class RunConfig:
    command: str
    n_theta: int = 128
    n_z: int = 240
    z_max: float = 50.0
    alpha: float = 0.0
    a_star: float = 130.0
    T: float = 10.0
    dt: float = 0.0          # 0: choose from the CFL bound
    seed: int = 0
    out_dir: str = "out"
    format: str = "csv"
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command}")
        if min(self.n_theta, self.n_z) <= 0:
            raise ValueError("grid sizes must be positive")
        if not 0.0 <= self.alpha <= 2.0:
            raise ValueError("alpha must lie in [0, 2]")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")

    def to_dict(self) -> dict:
        d = {
            "command": self.command, "n_theta": self.n_theta,
            "n_z": self.n_z, "z_max": self.z_max, "alpha": self.alpha,
            "a_star": self.a_star, "T": self.T, "dt": self.dt,
            "seed": self.seed, "out_dir": self.out_dir, "format": self.format,
        }
        d.update(self.extra)
        return d


def parse_config_file(path: str | Path) -> dict:
    """Flat key=value text; '#' starts a comment."""
    entries: dict = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        entries[key] = val
    return entries


def _content_hash(cfg: RunConfig) -> str:
    payload = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    tg = theta_grid(cfg.n_theta)
    h = hashlib.sha256(payload)
    h.update(tg.nodes.tobytes())
    if cfg.command != "invariant":
        rg = radial_grid(cfg.n_z, cfg.z_max)
        h.update(rg.nodes.tobytes())
    return h.hexdigest()


def write_manifest(cfg: RunConfig, results: dict, out: Path) -> None:
    manifest = {
        "schema_version": 1,
        "tool": "ssblow",
        "version": __version__,
        "config": cfg.to_dict(),
        "content_hash": _content_hash(cfg),
        "threads_cap": os.environ.get("SSBLOW_THREADS", ""),
        "results": results,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(x)) if isinstance(x, (int, float, np.floating, np.integer)) else x
                         for x in row])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_profile(cfg: RunConfig, out: Path) -> int:
    gs = ang.ground_state(cfg.n_theta, cfg.a_star)
    profile = mdl.build_profile_alpha0(gs, radial_grid(cfg.n_z, cfg.z_max))
    tg = gs.gamma_star.grid
    _write_csv(out / "ground_state.csv", ["theta", "gamma1", "gamma2"],
               zip(tg.nodes, gs.gamma_star.g1.values, gs.gamma_star.g2.values))
    save_field2d(profile.state.omega0, out / "omega0.csv")
    save_field2d(profile.state.p1, out / "p1.csv")
    _write_csv(out / "p0.csv", ["z", "p0"],
               zip(profile.state.rgrid.nodes, profile.state.p0))
    results = {
        "b_star": gs.b_star,
        "ground_state_residual": gs.residual,
        "decay_rate": gs.decay_rate,
        "slashed_mean_gamma1": 2.0,
        "steady_residual_alpha0": mdl.steady_residual_alpha0(profile.state),
        "L12_total_omega0": bsv.L12_total(profile.state.omega0),
        "exponent_gamma1": ang.singular_exponent_fit(gs.gamma_star.g1),
        "exponent_gamma2": ang.singular_exponent_fit(gs.gamma_star.g2),
        "kernel_residual": mdl.kernel_residual(profile),
    }
    write_manifest(cfg, results, out)
    return 0


def cmd_scan(cfg: RunConfig, out: Path) -> int:
    tg = theta_grid(cfg.n_theta)
    G0 = ang.seed_pair(tg)
    lo = float(cfg.extra.get("a_lo", 100.0))
    hi = float(cfg.extra.get("a_hi", 160.0))
    n_pts = int(cfg.extra.get("n_points", 7))
    table = ang.scan_Astar(np.linspace(lo, hi, n_pts), G0, cfg.T)
    root = ang.find_Astar_root(G0, lo, hi, cfg.T, tol=0.1)
    _write_csv(out / "scan.csv", ["a_star", "drift", "root"],
               [(a, d, root) for a, d in table])
    write_manifest(cfg, {"root": root, "bracket": [lo, hi]}, out)
    return 0


def cmd_invariant(cfg: RunConfig, out: Path) -> int:
    tg = theta_grid(cfg.n_theta)
    G0 = ang.seed_pair(tg)
    _, series = ang.evolve_angular(G0, cfg.a_star, cfg.T,
                                   dt=cfg.dt or None, record_invariant=True)
    _write_csv(out / "invariant.csv", ["t", "I", "norm"],
               zip(series["t"], series["invariant"], series["norm"]))
    drift = (series["invariant"][-1] - series["invariant"][0]) / G0.norm()
    write_manifest(cfg, {"drift": float(drift), "a_star": cfg.a_star}, out)
    return 0


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    kind = cfg.extra.get("kind", "firstorder")
    if kind == "firstorder":
        tg = theta_grid(cfg.n_theta)
        rng = np.random.default_rng(cfg.seed)
        omega0 = cfg.extra.get("omega0", "smooth")
        if omega0 == "zero":
            om = AngularField(tg, np.zeros(tg.n_theta), ODD_ODD)
        else:
            om = AngularField(tg, np.sin(2 * tg.nodes)
                              + 0.3 * np.sin(4 * tg.nodes), ODD_ODD)
        P = AngularField(tg, tg.cos_theta.copy(), EVEN_ODD)
        res = mdl.simulate_firstorder(om, P, cfg.T, dt=cfg.dt or None)
        _write_csv(out / "firstorder.csv",
                   ["t", "sup_omega", "sup_p"],
                   zip(res["t"], res["sup_omega"], res["sup_p"]))
        results = {
            "blew_up": res["blew_up"],
            "max_step_drift": float(np.max(res["step_drift"])),
            "growth_factor": float(res["sup_p"].max()
                                   / max(res["sup_p"][0], 1e-300)),
        }
    elif kind == "damped":
        profile = mdl.profile_alpha0(cfg.n_theta, cfg.n_z, cfg.z_max)
        scale = float(cfg.extra.get("f0_scale", 0.9))
        f_final, series, g_final = mdl.simulate_damped_flow(
            profile.state * scale, cfg.alpha, T=cfg.T, profile=profile,
            return_good=True)
        _write_csv(out / "damped_residuals.csv", ["step", "residual"],
                   enumerate(series))
        results = {
            "final_flow_residual": float(series[-1]),
            "modulated_steady_residual":
                mdl.steady_residual_good(g_final, profile),
            "distance_to_profile":
                mdl.state_norm(f_final - profile.state),
        }
    else:
        raise ValueError(f"unknown simulate kind {kind}")
    write_manifest(cfg, results, out)
    return 0


def cmd_elliptic(cfg: RunConfig, out: Path) -> int:
    rg, tg = radial_grid(cfg.n_z, cfg.z_max), theta_grid(cfg.n_theta)
    rng = np.random.default_rng(cfg.seed)
    vals = np.zeros((rg.n_z, tg.n_theta))
    for m in range(1, 7):
        vals += np.outer(chk.random_radial(rg, rng), np.sin(2 * m * tg.nodes)) / m**2
    from .fields import Field2D
    F = Field2D(rg, tg, vals, ODD_ODD, 1)
    psi = bsv.solve_BSLaw(F, cfg.alpha)
    save_field2d(psi, out / "psi.csv")
    diag = {
        "alpha": cfg.alpha,
        "estimate_constant": bsv.elliptic_estimate_constant(F, cfg.alpha),
        "hardy": bsv.hardy_checks(200, cfg.n_theta, cfg.seed),
    }
    with open(out / "solver_diagnostics.json", "w") as fh:
        json.dump(diag, fh, indent=1, sort_keys=True)
    write_manifest(cfg, diag, out)
    return 0


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    config = {
        "n_theta": cfg.n_theta, "n_z": cfg.n_z, "z_max": cfg.z_max,
        "seed": cfg.seed,
    }
    if "checks" in cfg.extra:
        config["checks"] = [c for c in cfg.extra["checks"].split(",") if c]
    reports = chk.run_suite(config)
    (out / "report.txt").write_text(chk.report_to_text(reports) + "\n")
    (out / "report.json").write_text(chk.reports_to_json(reports) + "\n")
    ok = all(r.passed for r in reports)
    write_manifest(cfg, {"passed": ok,
                         "n_checks": len(reports),
                         "failed": [r.name for r in reports if not r.passed]},
                   out)
    print(chk.report_to_text(reports))
    return 0 if ok else 1


def cmd_convergence(cfg: RunConfig, out: Path) -> int:
    name = cfg.extra.get("check", "steady_residual_alpha0")
    levels = [(cfg.n_theta // 2, cfg.n_z // 2),
              (3 * cfg.n_theta // 4, 3 * cfg.n_z // 4),
              (cfg.n_theta, cfg.n_z)]
    rep = chk.convergence_study(name, levels, cfg.z_max)
    _write_csv(out / "convergence.csv", ["n_theta", "value"], rep.grid_levels)
    write_manifest(cfg, rep.to_dict(), out)
    return 0 if rep.passed else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ssblow",
        description="Self-similar blow-up profile construction and checks")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--ntheta", type=int)
    p.add_argument("--nz", type=int)
    p.add_argument("--zmax", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--astar", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--set", action="append", default=[],
                   help="extra key=value entries (repeatable)")
    return p


_FLAG_MAP = {
    "ntheta": "n_theta", "nz": "n_z", "zmax": "z_max", "alpha": "alpha",
    "astar": "a_star", "T": "T", "dt": "dt", "seed": "seed",
    "out": "out_dir", "format": "format",
}

_CASTS = {
    "n_theta": int, "n_z": int, "z_max": float, "alpha": float,
    "a_star": float, "T": float, "dt": float, "seed": int,
    "out_dir": str, "format": str,
}


def make_config(args) -> RunConfig:
    cfg = RunConfig(command=args.command)
    if args.config:
        for key, val in parse_config_file(args.config).items():
            if key in _CASTS:
                setattr(cfg, key, _CASTS[key](val))
            else:
                cfg.extra[key] = val
    for flag, attr in _FLAG_MAP.items():
        val = getattr(args, flag if flag != "out" else "out", None)
        if val is not None:
            setattr(cfg, attr, val)
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        cfg.extra[key.strip()] = val.strip()
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = {
        "profile": cmd_profile, "scan": cmd_scan, "invariant": cmd_invariant,
        "simulate": cmd_simulate, "elliptic": cmd_elliptic,
        "verify": cmd_verify, "convergence": cmd_convergence,
    }[cfg.command]
    try:
        return handler(cfg, out)
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        write_manifest(cfg, {"error": str(exc)}, out)
        return 3


if __name__ == "__main__":
    sys.exit(main())
