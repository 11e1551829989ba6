"""Command-line front end.

    vanishpot <command> [--config run.json] [--output-dir DIR] [--a.b=value ...]

Commands: algebra, reduce, levelset, potential, jacobian, recover, verify.
Any config leaf can be overridden by its dotted path, e.g. ``--grid.h=0.02``
or ``--lambda=[-1]``; values are parsed as JSON when possible.

Exit codes: 0 success, 1 usage/config error, 2 precondition failure
(irregular, empty, unstable), 3 internal numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import Deformation, SingularityGerm, fermat_exponent, versal_deformation
from .distinguish import (
    default_moment_order,
    default_y_samples,
    injectivity_certificate,
    moment_jacobian,
    morse_moment_model,
    recover_parameters,
    separation_experiment,
)
from .errors import (
    EmptyDomainError,
    IrregularLevelSetError,
    NumericalFailure,
    PreconditionError,
    VanishpotError,
)
from .forms import (
    VolumeFormGerm,
    box_monomials,
    multiply_by_deformation_power,
    reduce_to_basis,
    reduction_chain_length,
    surjectivity_certificate,
)
from .geometry import GridSpec, check_regularity, prepare_mesh, to_obj
from .polynomial import Polynomial, format_polynomial, parse_polynomial
from .potential import Density, moments, sphere_points, surface_charge_potential, volume_potential_samples
from .presets import PRESET_RADIUS, fermat_regular_lambda
from .serialize import sha256_file, write_csv, write_json

log = logging.getLogger("vanishpot")

COMMANDS = ("algebra", "reduce", "levelset", "potential", "jacobian", "recover", "verify")

DEFAULT_CONFIG = {
    "n": 3,
    "germ": "morse",
    "lambda": None,
    "psi": "1",
    "grid": {"radius": None, "h": None},
    "eval": {"sphere_radius": None, "num_points": 32, "seed": 0},
    "moment_order": None,
    "thresholds": {"regularity": 1e-3, "rank": 1e-6},
    "reduce": {"form": "1", "k": 0, "maxdeg": None},
    "separation": {"radius": 0.02, "num_pairs": 10, "factor": 10.0},
    "recover": {"perturbation": 0.01, "model": "quadrature"},
    "output_dir": "out",
}


class ConfigError(Exception):
    pass


# ------------------------------------------------------------------ config


def _merge(base: dict, upd: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in upd.items():
        if k not in out:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path + k!r} must be an object")
            out[k] = _merge(out[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"unknown config path {dotted!r}")
        node = node[k]
    if keys[-1] not in node or isinstance(node[keys[-1]], dict):
        raise ConfigError(f"unknown config leaf {dotted!r}")
    node[keys[-1]] = value


class RunContext:
    """Validated configuration plus the derived mathematical objects."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        n = cfg["n"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ConfigError("n must be a positive integer")
        self.n = n
        self.germ_text = cfg["germ"]
        if not isinstance(self.germ_text, str):
            raise ConfigError("germ must be a string")
        self._deformation = None
        self.output_dir = Path(cfg["output_dir"])

    # derived objects are built lazily so each command validates only what it uses
    @property
    def deformation(self) -> Deformation:
        if self._deformation is None:
            self._deformation = build_deformation(self.germ_text, self.n)
        return self._deformation

    @property
    def fermat_N(self) -> int:
        if self.germ_text.startswith("fermat:"):
            return _preset_N(self.germ_text)
        try:
            N = fermat_exponent(parse_polynomial(self.germ_text, self.n))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if N is None:
            raise ConfigError("this command needs a Fermat germ (preset 'fermat:N')")
        return N

    @property
    def lam(self) -> np.ndarray:
        F = self.deformation
        lam = self.cfg["lambda"]
        if lam is None or lam == "auto":
            lam = default_lambda(self.germ_text, F)
        if not isinstance(lam, list) or not all(_is_number(v) for v in lam):
            raise ConfigError("lambda must be a list of numbers")
        if len(lam) != F.mu:
            raise ConfigError(f"lambda has length {len(lam)} but mu = {F.mu}")
        return np.array(lam, dtype=float)

    @property
    def grid(self) -> GridSpec:
        g = self.cfg["grid"]
        R = g["radius"]
        if R is None:
            R = PRESET_RADIUS.get(self.germ_text)
            if R is None:
                raise ConfigError("grid.radius must be given for this germ")
        if not _is_number(R) or R <= 0:
            raise ConfigError("grid.radius must be positive")
        h = g["h"] if g["h"] is not None else R / 64
        if not _is_number(h) or not 0 < h < R:
            raise ConfigError("grid.h must satisfy 0 < h < radius")
        if self.n not in (2, 3):
            raise ConfigError("meshing and quadrature need n = 2 or 3")
        return GridSpec(self.n, float(R), float(h))

    @property
    def psi(self) -> Density:
        text = self.cfg["psi"]
        if _is_number(text):
            text = str(text)
        try:
            return Density(parse_polynomial(str(text), self.n))
        except ValueError as exc:
            raise ConfigError(f"psi: {exc}") from exc

    @property
    def y_samples(self) -> np.ndarray:
        e = self.cfg["eval"]
        grid = self.grid
        count = e["num_points"]
        if not isinstance(count, int) or count < 1:
            raise ConfigError("eval.num_points must be a positive integer")
        Ry = e["sphere_radius"] if e["sphere_radius"] is not None else 4 * grid.radius
        if not _is_number(Ry) or Ry <= grid.radius:
            raise ConfigError("eval.sphere_radius must exceed grid.radius")
        return sphere_points(count, float(Ry), self.n)

    @property
    def seed(self) -> int:
        s = self.cfg["eval"]["seed"]
        if not isinstance(s, int):
            raise ConfigError("eval.seed must be an integer")
        return s

    @property
    def moment_order(self) -> int:
        L = self.cfg["moment_order"]
        if L is None:
            return default_moment_order(self.deformation.mu, self.n)
        if not isinstance(L, int) or L < 0:
            raise ConfigError("moment_order must be a non-negative integer")
        return L

    @property
    def regularity_tol(self) -> float:
        return float(self.cfg["thresholds"]["regularity"])

    @property
    def rank_threshold(self) -> float:
        return float(self.cfg["thresholds"]["rank"])


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _preset_N(text: str) -> int:
    try:
        N = int(text.split(":", 1)[1])
    except ValueError as exc:
        raise ConfigError(f"bad preset {text!r}") from exc
    if N < 2:
        raise ConfigError("fermat:N needs N >= 2")
    return N


def build_deformation(germ: str, n: int) -> Deformation:
    """Presets 'fermat:N', 'morse', 'shell', or a polynomial germ string."""
    if germ == "shell":
        # (r^2 - 1)(r^2 - 4) with a free constant term: nested spheres of radii 1 and 2
        r2 = sum((Polynomial.variable(n, i) ** 2 for i in range(1, n + 1)), Polynomial.constant(n, 0))
        base = (r2 - 1) * (r2 - 4)
        return Deformation(base=base, basis=((0,) * n,))
    if germ == "morse":
        poly = sum((Polynomial.variable(n, i) ** 2 for i in range(1, n + 1)), Polynomial.constant(n, 0))
    elif germ.startswith("fermat:"):
        poly = Polynomial.fermat(n, _preset_N(germ))
    else:
        try:
            poly = parse_polynomial(germ, n)
        except ValueError as exc:
            raise ConfigError(f"germ: {exc}") from exc
    try:
        return versal_deformation(SingularityGerm(poly))
    except ValueError as exc:
        if isinstance(exc, VanishpotError):
            raise
        raise ConfigError(f"germ: {exc}") from exc


def default_lambda(germ: str, F: Deformation) -> list:
    if germ == "morse":
        return [-1.0]
    if germ == "shell":
        return [0.0]
    if germ == "fermat:3" and F.n == 3:
        return [float(v) for v in fermat_regular_lambda()]
    raise ConfigError("lambda must be given for this germ")


# ------------------------------------------------------------- artifacts


class Emitter:
    def __init__(self, ctx: RunContext):
        self.ctx = ctx
        self.dir = ctx.output_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def json(self, name: str, obj) -> Path:
        p = write_json(self.dir / name, obj)
        self.files.append(p)
        return p

    def csv(self, name: str, header, rows) -> Path:
        p = write_csv(self.dir / name, header, rows)
        self.files.append(p)
        return p

    def text(self, name: str, text: str) -> Path:
        p = self.dir / name
        p.write_text(text, encoding="utf-8")
        self.files.append(p)
        return p

    def manifest(self, command: str, status: str, exit_code: int) -> Path:
        entries = [{"file": p.name, "sha256": sha256_file(p)} for p in self.files]
        doc = {
            "tool": "vanishpot",
            "version": __version__,
            "command": command,
            "created": _timestamp(),
            "status": status,
            "exit_code": exit_code,
            "config": self.ctx.cfg,
            "files": entries,
        }
        return write_json(self.dir / "manifest.json", doc)


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        t = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        t = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return t.isoformat()


# --------------------------------------------------------------- commands


def cmd_algebra(ctx: RunContext, out: Emitter) -> int:
    F = ctx.deformation
    doc = {
        "germ": format_polynomial(F.base),
        "n": ctx.n,
        "mu": F.mu,
        "basis": [format_polynomial(Polynomial.monomial(m)) for m in F.basis],
        "deformation": F.render(),
    }
    alg = getattr(F, "algebra", None)
    if alg is not None:
        doc["degree_bound"] = alg.degree_bound
    out.json("basis.json", doc)
    return 0


def cmd_reduce(ctx: RunContext, out: Emitter) -> int:
    N = ctx.fermat_N
    n = ctx.n
    rc = ctx.cfg["reduce"]
    k = rc["k"]
    if not isinstance(k, int) or k < 0:
        raise ConfigError("reduce.k must be a non-negative integer")
    try:
        form = parse_polynomial(str(rc["form"]), n)
    except ValueError as exc:
        raise ConfigError(f"reduce.form: {exc}") from exc
    F = ctx.deformation
    lam = ctx.cfg["lambda"]
    if lam is None:
        lam = [0] * (F.mu - 1) + [-1]
    if len(lam) != F.mu:
        raise ConfigError(f"lambda has length {len(lam)} but mu = {F.mu}")
    lam = [Fraction(str(v)) for v in lam]
    if lam[-1] == 0:
        raise PreconditionError("lambda_mu must be nonzero")
    g = VolumeFormGerm(N, form)
    if k:
        g = multiply_by_deformation_power(g, F, lam, k)
    maxdeg = rc["maxdeg"]
    nf = reduce_to_basis(g, maxdeg, lam[-1])
    certs = [surjectivity_certificate(e, N, n, maxdeg, lam[-1]).to_json() for e in box_monomials(N, n)]
    out.json(
        "reduction.json",
        {
            "N": N,
            "n": n,
            "form": format_polynomial(form),
            "k": k,
            "lambda_mu": str(lam[-1]),
            "expanded": format_polynomial(g.poly),
            "normal_form": nf.to_json(),
            "chain_length": reduction_chain_length(g, maxdeg, lam[-1]),
            "certificates": certs,
        },
    )
    return 0


def _regular_mesh(ctx: RunContext, out: Emitter | None = None):
    F, lam, grid = ctx.deformation, ctx.lam, ctx.grid
    mesh = prepare_mesh(F, lam, grid)
    rep = check_regularity(mesh, ctx.regularity_tol)
    if out is not None:
        out.text("mesh.obj", to_obj(mesh))
    return mesh, rep


def _regularity_doc(mesh, rep) -> dict:
    return {
        "components": len(mesh.components),
        "depths": mesh.depths,
        "signs": mesh.signs,
        "min_grad": rep.min_grad,
        "clipped": rep.clipped,
        "verdict": rep.verdict,
        "reason": rep.reason,
    }


def _fail_if_irregular(mesh, rep):
    if rep.regular:
        return
    if mesh.empty:
        raise EmptyDomainError("empty domain")
    raise IrregularLevelSetError(f"irregular level set: {rep.reason}")


def cmd_levelset(ctx: RunContext, out: Emitter) -> int:
    mesh, rep = _regular_mesh(ctx, out)
    out.json("levelset.json", _regularity_doc(mesh, rep))
    _fail_if_irregular(mesh, rep)
    return 0


def cmd_potential(ctx: RunContext, out: Emitter) -> int:
    if ctx.n != 3:
        raise ConfigError("potentials need n = 3")
    F, lam, grid, psi, ys = ctx.deformation, ctx.lam, ctx.grid, ctx.psi, ctx.y_samples
    vol = volume_potential_samples(F, lam, psi, ys, grid)
    header = [f"y{i}" for i in range(1, ctx.n + 1)] + ["I"]
    out.csv("potential.csv", header, [list(y) + [v] for y, v in zip(ys, vol.values)])
    mesh, rep = _regular_mesh(ctx, out)
    if mesh.components:
        surf = surface_charge_potential(mesh, psi, ys)
        out.csv("surface_potential.csv", header, [list(y) + [v] for y, v in zip(ys, np.atleast_1d(surf))])
    out.json("moments.json", moments(F, lam, psi, ctx.moment_order, grid).to_json())
    if vol.empty:
        raise EmptyDomainError("empty domain")
    return 0


def _certificate(ctx: RunContext, out: Emitter, mesh):
    F, lam = ctx.deformation, ctx.lam
    J = moment_jacobian(F, lam, ctx.moment_order, mesh=mesh, psi=ctx.psi, regularity_tol=ctx.regularity_tol)
    cert = injectivity_certificate(J, ctx.rank_threshold)
    doc = {"lambda": lam.tolist(), "mu": F.mu, "L": ctx.moment_order}
    doc.update(cert.to_json())
    return J, cert, doc


def cmd_jacobian(ctx: RunContext, out: Emitter) -> int:
    mesh, rep = _regular_mesh(ctx, out)
    _fail_if_irregular(mesh, rep)
    J, cert, doc = _certificate(ctx, out, mesh)
    out.json("jacobian.json", J.to_json())
    out.json("certificate.json", doc)
    return 0 if cert.verdict else 2


def cmd_recover(ctx: RunContext, out: Emitter) -> int:
    F, lam, grid = ctx.deformation, ctx.lam, ctx.grid
    rc = ctx.cfg["recover"]
    L = ctx.moment_order
    rng = np.random.default_rng(ctx.seed)
    d = rng.normal(size=F.mu)
    start = lam + float(rc["perturbation"]) * d / np.linalg.norm(d)
    if rc["model"] == "exact":
        if ctx.germ_text != "morse":
            raise ConfigError("recover.model='exact' is available for the morse preset only")
        model, jac = morse_moment_model(ctx.n, L)
        res = recover_parameters(None, model(lam), start, model=model, jacobian=jac)
    elif rc["model"] == "quadrature":
        target = moments(F, lam, ctx.psi, L, grid)
        res = recover_parameters(F, target, start, grid=grid, psi=ctx.psi, regularity_tol=ctx.regularity_tol)
    else:
        raise ConfigError("recover.model must be 'quadrature' or 'exact'")
    doc = {"lambda_true": lam.tolist(), "lambda0": start.tolist(), "L": L}
    doc.update(res.to_json())
    doc["error"] = float(np.linalg.norm(res.lambda_hat - lam))
    out.json("recovery.json", doc)
    return 0 if res.converged else 3


def cmd_verify(ctx: RunContext, out: Emitter) -> int:
    F, lam, grid = ctx.deformation, ctx.lam, ctx.grid
    mesh, rep = _regular_mesh(ctx, None)
    if not rep.regular:
        reason = "empty domain" if mesh.empty else rep.reason
        out.json("certificate.json", {"lambda": lam.tolist(), "mu": F.mu, "verdict": False, "reason": reason})
        _fail_if_irregular(mesh, rep)
    _, cert, doc = _certificate(ctx, out, mesh)
    out.json("certificate.json", doc)
    sc = ctx.cfg["separation"]
    report = separation_experiment(
        F,
        lam,
        float(sc["radius"]),
        int(sc["num_pairs"]),
        ctx.y_samples,
        grid,
        psi=ctx.psi,
        seed=ctx.seed,
        factor=float(sc["factor"]),
        moment_order=ctx.moment_order,
        threshold=ctx.rank_threshold,
        regularity_tol=ctx.regularity_tol,
    )
    out.json("separation.json", report)
    return 0 if cert.verdict and report["all_positive"] else 2


HANDLERS = {
    "algebra": cmd_algebra,
    "reduce": cmd_reduce,
    "levelset": cmd_levelset,
    "potential": cmd_potential,
    "jacobian": cmd_jacobian,
    "recover": cmd_recover,
    "verify": cmd_verify,
}


# ------------------------------------------------------------------ main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vanishpot", description="Vanishing-cycle domains and their Newton potentials.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--output-dir", help="directory for emitted files")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(path, overrides) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        cfg = _merge(cfg, user)
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"unrecognized argument {item!r}; overrides look like --grid.h=0.02")
        key, value = item[2:].split("=", 1)
        apply_override(cfg, key, _parse_value(value))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, rest)
        if args.output_dir:
            cfg["output_dir"] = args.output_dir
        ctx = RunContext(cfg)
        out = Emitter(ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    code, status = 0, "ok"
    try:
        code = HANDLERS[args.command](ctx, out)
        status = "ok" if code == 0 else "verdict false"
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code, status = 1, f"config error: {exc}"
    except PreconditionError as exc:
        print(f"precondition failure: {exc}", file=sys.stderr)
        code, status = 2, f"precondition failure: {exc}"
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code, status = 3, f"numerical failure: {exc}"
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code, status = 1, f"error: {exc}"
    out.manifest(args.command, status, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
