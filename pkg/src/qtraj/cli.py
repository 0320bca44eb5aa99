"""Command-line front end: ``qtraj check|ito|simulate|converge``.

Every subcommand is a pure function of the config file bytes and the seed.
Exit codes: 0 pass, 1 failed check, 2 config or validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .discrete import (
    MeasurementScheme,
    completeness_residual,
    collective_commutator_check,
    conditional_maps,
    floquet_unitary,
    run_discrete_trajectory,
)
from .itoalg import (
    displaced_gauge_process,
    gauge_process,
    output_differential,
    quadrature_process,
    unitarity_defect,
)
from .model import (
    ItoCoefficients,
    SystemModel,
    canonical_qubit_model,
    decoupled_model,
    ito_coefficients,
    ito_coefficients_series,
    matrix_from_json,
    matrix_to_json,
    require_valid,
    unitarity_residual,
)
from .numerics import NUMBER, SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Z, ValidationError, dag
from .sse import integrate_diffusive, integrate_jump, integrate_jump_offset
from .stats import MIN_SAMPLES, sse_convergence_sweep, weak_convergence_sweep

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

MODES = ("discrete", "diffusive", "jump", "jump_offset")
NAMED_OPERATORS = {
    "sigma_x": SIGMA_X,
    "sigma_z": SIGMA_Z,
    "sigma_plus": SIGMA_PLUS,
    "sigma_minus": SIGMA_MINUS,
    "number": NUMBER,
}
OUTPUT_FORMATS = ("csv",)

EXACT_TOL = 1e-10
SPECIALIZATION_TOL = 1e-12
SERIES_TOL = 1e-10


class ConfigError(ValidationError):
    pass


def _require(data: dict, key: str):
    if key not in data:
        raise ConfigError(f"config is missing required field {key!r}")
    return data[key]


def _parse_model(spec, base: Path) -> SystemModel:
    if isinstance(spec, str):
        spec = {"path": spec}
    if not isinstance(spec, dict):
        raise ConfigError("model must be an object or a file path")
    if "path" in spec:
        path = Path(spec["path"])
        if not path.is_absolute():
            path = base / path
        return SystemModel.load(path)
    preset = spec.get("preset")
    if preset is None:
        return SystemModel.from_dict(spec)
    if preset == "canonical":
        return canonical_qubit_model(float(spec.get("kappa", 0.5)))
    if preset == "decay":
        # H11 = 0 gives L = -i sigma_-, pure decay at unit rate
        z = np.zeros((2, 2))
        return SystemModel(H00=z, H01=SIGMA_PLUS, H10=SIGMA_MINUS, H11=z)
    if preset == "decoupled":
        return decoupled_model(matrix_from_json(_require(spec, "H00")))
    raise ConfigError(f"unknown model preset {preset!r}")


def _parse_operator(spec, dim: int) -> np.ndarray:
    if isinstance(spec, str):
        if spec not in NAMED_OPERATORS:
            raise ConfigError(f"unknown named operator {spec!r}")
        op = NAMED_OPERATORS[spec]
    else:
        op = matrix_from_json(spec)
    if op.shape != (dim, dim):
        raise ConfigError(f"observable has shape {op.shape}, model dimension is {dim}")
    return op


@dataclass
class RunConfig:
    model: SystemModel
    mode: str
    step: float
    T: float
    n_traj: int
    seed: int | None
    scheme: MeasurementScheme = field(default_factory=MeasurementScheme.sigma_x)
    f: float | None = None
    psi0: np.ndarray | None = None
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    taus: list[float] | None = None
    output_path: str | None = None
    output_format: str = "csv"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ConfigError(f"step must be positive, got {self.step}")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.n_traj < 1:
            raise ConfigError(f"n_traj must be at least 1, got {self.n_traj}")
        if self.mode == "jump_offset" and (self.f is None or self.f <= 0):
            raise ConfigError("jump_offset mode needs a positive f")
        if self.mode != "jump_offset" and self.f is not None:
            raise ConfigError(f"f only applies to jump_offset mode, not {self.mode}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"output format must be one of {OUTPUT_FORMATS}")
        d = self.model.dim
        if self.psi0 is None:
            self.psi0 = np.eye(d, dtype=np.complex128)[0]
        self.psi0 = np.asarray(self.psi0, dtype=np.complex128)
        if self.psi0.shape != (d,):
            raise ConfigError(f"psi0 must have {d} entries")
        if abs(np.linalg.norm(self.psi0) - 1.0) > 1e-10:
            raise ConfigError("psi0 must be normalised")
        if not self.observables and d == 2:
            self.observables = {"sigma_z": SIGMA_Z.copy()}

    @classmethod
    def from_dict(cls, data: dict, base: Path | str = ".") -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        base = Path(base)
        try:
            model = _parse_model(_require(data, "model"), base)
            step = next((data[k] for k in ("step", "tau", "dt") if data.get(k) is not None), None)
            if step is None:
                raise ConfigError("config needs a step size (step, tau or dt)")
            output = data.get("output") or {}
            psi0 = data.get("psi0")
            return cls(
                model=model,
                mode=str(_require(data, "mode")),
                step=float(step),
                T=float(_require(data, "T")),
                n_traj=int(data.get("n_traj", 1)),
                seed=None if data.get("seed") is None else int(data["seed"]),
                scheme=MeasurementScheme.from_dict(data.get("scheme", "sigma_x")),
                f=None if data.get("f") is None else float(data["f"]),
                psi0=None if psi0 is None else _parse_vector(psi0),
                observables={
                    str(k): _parse_operator(v, model.dim) for k, v in (data.get("observables") or {}).items()
                },
                taus=None if data.get("taus") is None else [float(t) for t in data["taus"]],
                output_path=output.get("path"),
                output_format=output.get("format", "csv"),
            )
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ConfigError(f"malformed config: {exc}") from None

    def to_dict(self) -> dict:
        out = {
            "model": self.model.to_dict(),
            "mode": self.mode,
            "step": self.step,
            "T": self.T,
            "n_traj": self.n_traj,
            "seed": self.seed,
            "scheme": self.scheme.to_dict(),
            "f": self.f,
            "psi0": [[float(z.real), float(z.imag)] for z in self.psi0],
            "observables": {k: matrix_to_json(v) for k, v in self.observables.items()},
            "taus": self.taus,
            "output": {"path": self.output_path, "format": self.output_format},
        }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, base: Path | str = ".") -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data, base)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        return cls.from_json(path.read_text(), path.parent)

    def hamiltonian_and_jump(self) -> tuple[np.ndarray, np.ndarray]:
        c = ito_coefficients(self.model)
        return c.H, c.L


def _parse_vector(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError("psi0 must be a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


# ---------------------------------------------------------------- check


def _residual(name: str, value: float, tol: float) -> dict:
    return {"name": name, "value": float(value), "tolerance": tol, "pass": bool(value <= tol)}


def _diff(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def check_residuals(cfg: RunConfig) -> list[dict]:
    """Exact identities for the configured model, each with its tolerance."""
    m = cfg.model
    c = ito_coefficients(m)
    d = m.dim
    scale = max(1.0, max(float(np.linalg.norm(m.block(a, b), 2)) for a in (0, 1) for b in (0, 1)))
    out = [
        _residual("unitarity_residual", unitarity_residual(c), EXACT_TOL * scale**2),
        _residual("unitarity_defect", unitarity_defect(c).norm(), EXACT_TOL * scale**2),
        _residual("closed_form_vs_series", _coefficient_gap(c, ito_coefficients_series(m)), SERIES_TOL * scale),
    ]
    eye = np.eye(d)
    Q = output_differential(quadrature_process(d), c)
    q_gap = max(
        _diff(Q[(1, 0)], dag(c.W)), _diff(Q[(0, 1)], c.W), _diff(Q[(0, 0)], c.L + dag(c.L)), _diff(Q[(1, 1)], 0)
    )
    out.append(_residual("output_Q", q_gap, SPECIALIZATION_TOL * scale**2))
    G = output_differential(gauge_process(d), c)
    g_gap = max(
        _diff(G[(1, 1)], eye),
        _diff(G[(1, 0)], dag(c.W) @ c.L),
        _diff(G[(0, 1)], dag(c.L) @ c.W),
        _diff(G[(0, 0)], dag(c.L) @ c.L),
    )
    out.append(_residual("output_Lambda", g_gap, SPECIALIZATION_TOL * scale**2))
    if cfg.f is not None:
        F = output_differential(displaced_gauge_process(d, cfg.f), c)
        shifted = c.L + cfg.f * eye
        out.append(
            _residual("output_Lambda_f", _diff(F[(0, 0)], dag(shifted) @ shifted), SPECIALIZATION_TOL * scale**2)
        )
    if cfg.mode == "discrete":
        maps = conditional_maps(floquet_unitary(m, cfg.step), cfg.scheme)
        out.append(_residual("completeness", completeness_residual(maps), EXACT_TOL))
    for n in (4, 6):
        res = collective_commutator_check(n, 1.0 / n, 1.0, 0.5)
        out.append(_residual(f"collective_n{n}", max(res.values()), SPECIALIZATION_TOL))
    return out


def _coefficient_gap(a: ItoCoefficients, b: ItoCoefficients) -> float:
    return max(_diff(a.block(i, j), b.block(i, j)) for i in (0, 1) for j in (0, 1))


def cmd_check(cfg: RunConfig, as_json: bool, out=None) -> int:
    out = out or sys.stdout
    report = require_valid(cfg.model)
    rows = check_residuals(cfg)
    ok = all(r["pass"] for r in rows)
    if as_json:
        print(json.dumps({"pass": ok, "flags": report.flags, "residuals": rows}, indent=2), file=out)
    else:
        for flag in report.flags:
            print(f"note: {flag}", file=out)
        print(f"{'residual':<24}{'value':>14}{'tolerance':>14}  status", file=out)
        for r in rows:
            status = "PASS" if r["pass"] else "FAIL"
            print(f"{r['name']:<24}{r['value']:>14.3e}{r['tolerance']:>14.1e}  {status}", file=out)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- ito


def cmd_ito(cfg: RunConfig, as_json: bool, out=None) -> int:
    out = out or sys.stdout
    report = require_valid(cfg.model)
    c = ito_coefficients(cfg.model)
    gap = _coefficient_gap(c, ito_coefficients_series(cfg.model))
    ok = gap <= SERIES_TOL * max(1.0, float(np.linalg.norm(cfg.model.H11, 2)))
    mats = {
        "L00": c.L00,
        "L01": c.L01,
        "L10": c.L10,
        "L11": c.L11,
        "W": c.W,
        "H": c.H,
        "L": c.L,
    }
    if as_json:
        payload = {
            "coefficients": {k: matrix_to_json(v) for k, v in mats.items()},
            "series_residual": gap,
            "pass": ok,
            "flags": report.flags,
        }
        print(json.dumps(payload, indent=2), file=out)
    else:
        for flag in report.flags:
            print(f"note: {flag}", file=out)
        with np.printoptions(precision=10, suppress=True):
            for k, v in mats.items():
                print(f"{k} =", file=out)
                print(v, file=out)
        print(f"series_residual = {gap:.3e}", file=out)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- simulate


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _run_one(cfg: RunConfig, seed: int, index: int):
    if cfg.mode == "discrete":
        return run_discrete_trajectory(cfg.model, cfg.scheme, cfg.step, cfg.T, cfg.psi0, seed, index)
    H, L = cfg.hamiltonian_and_jump()
    if cfg.mode == "diffusive":
        return integrate_diffusive(H, L, cfg.psi0, cfg.T, cfg.step, seed, index)
    if cfg.mode == "jump":
        return integrate_jump(H, L, cfg.psi0, cfg.T, cfg.step, seed, index)
    return integrate_jump_offset(H, L, cfg.f, cfg.psi0, cfg.T, cfg.step, seed, index)


def cmd_simulate(cfg: RunConfig, seed: int, out_dir: Path, as_json: bool, out=None) -> int:
    out = out or sys.stdout
    require_valid(cfg.model)
    trajs = [_run_one(cfg, seed, k) for k in range(cfg.n_traj)]
    # everything is computed before the first byte is written
    out_dir.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(cfg.n_traj - 1)))
    files = {}
    for k, traj in enumerate(trajs):
        path = out_dir / f"traj_{k:0{width}d}.csv"
        traj.to_csv(path)
        files[path.name] = _sha256(path)
    manifest = {"config": cfg.to_dict(), "seed": seed, "version": __version__, "files": files}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if as_json:
        print(json.dumps({"out": str(out_dir), "files": files}, indent=2), file=out)
    else:
        print(f"wrote {len(files)} trajectories and manifest.json to {out_dir}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------- converge


def cmd_converge(cfg: RunConfig, seed: int, out_dir: Path | None, as_json: bool, out=None) -> int:
    out = out or sys.stdout
    require_valid(cfg.model)
    if cfg.n_traj < MIN_SAMPLES:
        raise ConfigError(f"converge needs n_traj >= {MIN_SAMPLES}, got {cfg.n_traj}")
    if not cfg.observables:
        raise ConfigError("converge needs at least one observable")
    steps = cfg.taus or [100 * cfg.step, 10 * cfg.step, cfg.step]
    tables = {}
    for name, X in cfg.observables.items():
        if cfg.mode == "discrete":
            tables[name] = weak_convergence_sweep(
                cfg.model, cfg.scheme, steps, X, cfg.T, cfg.n_traj, cfg.psi0, seed
            )
        else:
            H, L = cfg.hamiltonian_and_jump()
            tables[name] = sse_convergence_sweep(
                cfg.mode, H, L, steps, X, cfg.T, cfg.n_traj, cfg.psi0, seed, f=cfg.f
            )
    ok = all(t.passed for t in tables.values())
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, table in tables.items():
            (out_dir / f"converge_{name}.csv").write_text(table.to_csv())
    if as_json:
        print(json.dumps({"pass": ok, "tables": {k: t.to_dict() for k, t in tables.items()}}, indent=2), file=out)
    else:
        for name, table in tables.items():
            status = "PASS" if table.passed else "FAIL"
            print(f"# {name}: {status} (monotone={table.monotone}, final_within={table.final_within})", file=out)
            print(table.to_csv(), end="", file=out)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtraj", description="Quantum trajectory toolkit.")
    parser.add_argument("command", choices=("check", "ito", "simulate", "converge"))
    parser.add_argument("--config", required=True, help="path to a JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    try:
        if args.command == "check":
            return cmd_check(cfg, args.json)
        if args.command == "ito":
            return cmd_ito(cfg, args.json)
        if cfg.seed is None:
            raise ConfigError(f"{args.command} needs a seed (config field or --seed)")
        out_dir = args.out or cfg.output_path
        if args.command == "simulate":
            if out_dir is None:
                raise ConfigError("simulate needs an output directory (--out or output.path)")
            return cmd_simulate(cfg, cfg.seed, Path(out_dir), args.json)
        return cmd_converge(cfg, cfg.seed, None if out_dir is None else Path(out_dir), args.json)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
