"""Command-line front end: ``spectralsys {analyze,spectrum,verify,example-k3}``."""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import asymptotics, dirac, flow, frames, spectrum, symbols
from .errors import SchemaError, SpectralSysError, UnsupportedFamily
from .specio import OperatorInput, load_spec, parse_spec, preset_spec, write_csv, write_json
from .trigpoly import TrigPolyField, random_trig_poly

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _stats(values):
    values = np.real(np.asarray(values))
    return {"min": float(values.min()), "max": float(values.max()), "mean": float(values.mean())}


# ------------------------------------------------------------------ analyze
def run_analyze(inp: OperatorInput, out: Path, n_grid=8, workers=1):
    op = dirac.to_half_density(inp.operator)
    bundle = inp.bundle
    pts, a_q, b_q, cell = asymptotics.density_table(op, n_grid, inp.quadrature, "quadrature", workers)
    b_c = asymptotics.b_density_closed(bundle, op.zero_order, pts)
    tele = frames.teleparallel_tensors(bundle)
    sub = op.subprincipal(pts)
    half_tr = 0.5 * np.trace(sub, axis1=-2, axis2=-1)
    off = np.linalg.norm(sub - half_tr[..., None, None] * np.eye(2), ord=2, axis=(-2, -1))
    decision = dirac.is_massless_dirac(op)
    origin = np.zeros(3)
    geometry = {
        "c": bundle.c,
        "trace_starT": _stats(tele.trace_starT(pts)),
        "A_sub": {"trace": _stats(2 * half_tr), "max_offidentity": float(off.max())},
        "metric": {"g_up_at_origin": bundle.g_up(origin), "sqrt_det_g": _stats(bundle.sqrt_det_g(pts))},
        "massless_dirac": {"decision": decision.is_dirac, "failed_condition": decision.failed_condition},
        "grid": [int(s) for s in asymptotics.density_grid(op, n_grid)[2]],
    }
    write_json(out / "geometry.json", geometry)
    write_csv(out / "densities.csv", ["x1", "x2", "x3", "a", "b", "b_closed"],
              np.column_stack([pts, a_q, b_q, b_c]))
    a, b, b_closed = float(np.sum(a_q) * cell), float(np.sum(b_q) * cell), float(np.sum(b_c) * cell)
    gap = float(np.abs(b_q - b_c).max())
    tol = inp.tolerances["identity"]
    coefficients = {
        "a": a, "b": b, "b_closed": b_closed,
        "a_closed": float(np.sum(asymptotics.a_density_closed(bundle, pts)) * cell),
        "quadrature": list(inp.quadrature),
        "density_gap": {"value": gap, "tolerance": tol, "passed": gap <= tol},
    }
    write_json(out / "coefficients.json", coefficients)
    return EXIT_OK if gap <= tol else EXIT_FAIL, coefficients


# ------------------------------------------------------------------ spectrum
def _spectral_data(op, mode, lam_top, K):
    if mode in ("auto", "oracle"):
        try:
            return spectrum.lattice_oracle(op, lam_top), "oracle"
        except UnsupportedFamily:
            if mode == "oracle":
                raise
    return spectrum.hermitian_eigensolve(spectrum.assemble_galerkin(op, K), keep_vectors=False), "galerkin"


def run_spectrum(inp: OperatorInput, out: Path, K=None, lambda_max=None, mollifier_T=None,
                 mode="auto", asymmetry=False, n_points=200):
    op = inp.operator
    K = inp.K if K is None else K
    moll = spectrum.make_mollifier(inp.mollifier_T if mollifier_T is None else mollifier_T)
    caught = []
    with warnings.catch_warnings(record=True) as record:
        warnings.simplefilter("always")
        lam_max = lambda_max
        if lam_max is None:
            lam_max = 35.0 if mode != "galerkin" else 0.5 * K
        data, used = _spectral_data(op, mode, lam_max + moll.tail + 1.0, K)
        lam = np.linspace(lam_max / n_points, lam_max, n_points)
        N = spectrum.counting_function(data, lam)
        mollified = spectrum.mollified_counting(data, moll, lam)
        fit_range = (0.5 * lam_max, 0.9 * lam_max)
        fit = spectrum.fit_two_term(data, moll, *fit_range)
        minus = None
        if asymmetry:
            minus, _ = _spectral_data(-op, used, lam_max + moll.tail + 1.0, K)
            fit_minus = spectrum.fit_two_term(minus, moll, *fit_range)
        caught = sorted({str(w.message) for w in record})

    lam_all = data.eigenvalues
    keep = np.abs(lam_all) <= lam_max
    write_csv(out / "eigenvalues.csv", ["k", "lambda"],
              zip(data.signed_indices[keep], lam_all[keep]))
    model = fit.a * lam**3 + fit.b * lam**2
    write_csv(out / "counting.csv", ["lambda", "N", "mollified_N", "model", "residual"],
              np.column_stack([lam, N, mollified, model, mollified - model]))

    weyl = asymptotics.global_coefficients(op, 8, inp.quadrature)
    trusted = fit_range[1] + moll.tail <= data.trust_window
    a_ok = abs(fit.a - weyl.a) <= inp.tolerances["a_fit_rel"] * abs(weyl.a)
    if abs(weyl.b) > 1e-8:
        b_tol = inp.tolerances["b_fit_rel"] * abs(weyl.b)
    else:
        b_tol = 0.05 * abs(fit.a)
    b_ok = abs(fit.b - weyl.b) <= b_tol
    positive = data.positive()
    report = {
        "mode": used,
        "a_fit": fit.a, "b_fit": fit.b, "c_fit": fit.c,
        "covariance": fit.covariance,
        "residual_rms": fit.residual_rms,
        "fit_range": list(fit_range),
        "mollifier": {"T": moll.T, "tail": moll.tail},
        "trust_window": data.trust_window,
        "lambda_max": lam_max,
        "weyl_quadrature": {"a": weyl.a, "b": weyl.b},
        "checks": {
            "trusted": bool(trusted),
            "a_fit": {"tolerance_rel": inp.tolerances["a_fit_rel"], "passed": bool(a_ok)},
            "b_fit": {"tolerance_abs": b_tol, "passed": bool(b_ok)},
        },
        "smallest_positive_eigenvalue": float(positive.min()) if len(positive) else None,
        "distance_to_one_half": float(np.min(np.abs(lam_all - 0.5))) if len(lam_all) else None,
        "warnings": caught,
    }
    if K is not None and used == "galerkin":
        report["K"] = K
    if minus is not None:
        Nm = spectrum.counting_function(minus, lam)
        mm = spectrum.mollified_counting(minus, moll, lam)
        write_csv(out / "asymmetry.csv",
                  ["lambda", "N_plus", "N_minus", "difference", "mollified_plus", "mollified_minus"],
                  np.column_stack([lam, N, Nm, N - Nm, mollified, mm]))
        report["asymmetry"] = {
            "a_minus": fit_minus.a, "b_minus": fit_minus.b,
            "a_relative_gap": abs(fit.a - fit_minus.a) / abs(fit.a),
            "b_sum_relative": abs(fit.b + fit_minus.b) / max(abs(fit.b), abs(fit_minus.b), 1e-300),
            "counting_symmetric": bool(np.all(N == Nm)),
        }
    write_json(out / "fit.json", report)
    failed = trusted and not (a_ok and b_ok)
    return (EXIT_FAIL if failed else EXIT_OK), report


# ------------------------------------------------------------------ verify
def _entry(name, value, tolerance, passed=None, **extra):
    ok = bool(value <= tolerance) if passed is None else bool(passed)
    return {"name": name, "max_residual": float(value), "tolerance": float(tolerance), "passed": ok, **extra}


def _su2_field(periods):
    """A simple non-constant SU(2)-valued trig poly: exp(i x1 sigma3) exp(i x2 sigma1)."""
    waves = np.array([[1, 0, 0], [-1, 0, 0]])
    a = TrigPolyField(waves, np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]), periods, (2, 2))
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    waves2 = np.array([[0, 1, 0], [0, -1, 0]])
    b = TrigPolyField(waves2, np.stack([0.5 * (np.eye(2) + sx), 0.5 * (np.eye(2) - sx)]), periods, (2, 2))
    return a @ b


def run_verify(inp: OperatorInput, out: Path, workers=1, n_points=20, seed=0):
    tol = inp.tolerances
    op = dirac.to_half_density(inp.operator)
    bundle = inp.bundle
    rng = np.random.default_rng(seed)
    entries = []

    xs = rng.uniform(0, 2 * np.pi, (n_points, 3)) * bundle.periods / (2 * np.pi)
    xis = rng.normal(size=(n_points, 3))
    ct = max(frames.curvature_torsion_residual(bundle, x, k)[0] for x, k in zip(xs, xis))
    entries.append(_entry("curvature_torsion", ct, tol["curvature_torsion"]))

    sym = op.symbol()
    trace_res, sum_res = 0.0, 0.0
    try:
        for x, k in zip(xs[:5], xis[:5]):
            chk = symbols.trace_identity_check(sym, symbols.CotangentPoint(x, k))
            trace_res = max(trace_res, chk.residual)
            sum_res = max(sum_res, chk.sum_rule)
        entries.append(_entry("trace_identity", trace_res, tol["identity"]))
        entries.append(_entry("sum_rule", sum_res, tol["identity"]))
    except SpectralSysError as exc:
        entries.append(_entry("trace_identity", np.inf, tol["identity"], False, error=str(exc)))

    R = _su2_field(bundle.periods)

    def R_values(x):
        return R(np.asarray(x, dtype=float))

    def R_grad(x):
        return R.grad(np.asarray(x, dtype=float))

    try:
        moved = symbols.transform_operator_unitary(sym, R_values, R_grad)
        order = (16, 32)
        gap = max(abs(asymptotics.densities(sym, x, order).b_x - asymptotics.densities(moved, x, order).b_x)
                  for x in xs[:3])
        asym = max(abs(asymptotics.densities(sym, x, order).b_x + asymptotics.densities(sym.scaled(-1), x, order).b_x)
                   for x in xs[:3])
        entries.append(_entry("unitary_invariance_b", gap, tol["unitary_invariance"]))
        entries.append(_entry("b_sign_flip", asym, tol["identity"]))
    except SpectralSysError as exc:
        entries.append(_entry("unitary_invariance_b", np.inf, tol["unitary_invariance"], False, error=str(exc)))

    trials = [random_trig_poly(rng, (2,), 1, periods=bundle.periods) for _ in range(4)]
    sa = dirac.selfadjointness_residual(op, trials)
    entries.append(_entry("selfadjointness", sa, tol["selfadjointness"]))

    pure = dirac.build_dirac(bundle)
    cc = dirac.charge_conjugation_residual(pure, trials)
    entries.append(_entry("charge_conjugation", cc, tol["charge_conjugation"]))

    decisions = []
    for label, extra, expected in (
        ("dirac", None, None),
        ("dirac+diag", np.diag([0.1, 0.0]), "a"),
        ("dirac+scalar", 0.1 * np.eye(2), "b"),
    ):
        candidate = pure if extra is None else pure.plus_potential(extra)
        d = dirac.is_massless_dirac(candidate)
        ok = (d.is_dirac and expected is None) or (d.failed_condition == expected)
        if expected == "b":
            pts = dirac.grid_points(candidate, d.grid)
            ref = -0.1 * bundle.sqrt_det_g(pts) / (2 * np.pi**2)
            ok = ok and np.allclose(d.b_values, ref, atol=tol["identity"], rtol=0)
        decisions.append({"case": label, "is_dirac": d.is_dirac, "failed_condition": d.failed_condition,
                          "expected": expected, "passed": bool(ok)})
    entries.append({"name": "massless_dirac_decisions", "cases": decisions,
                    "passed": all(c["passed"] for c in decisions)})
    try:
        own = dirac.is_massless_dirac(op)
        verdict = {"is_dirac": own.is_dirac, "failed_condition": own.failed_condition}
    except SpectralSysError as exc:
        verdict = {"is_dirac": False, "failed_condition": None, "error": str(exc)}
    entries.append({"name": "input_is_massless_dirac", "informational": True, "passed": True, **verdict})

    y = xs[0]
    eta = xis[0] / np.linalg.norm(xis[0])
    try:
        tr = flow.integrate_trajectory(sym, 1, y, eta, 2.0, 200)
        sv = np.linalg.svd(tr.propagator(), compute_uv=False)
        entries.append(_entry("flow_energy", tr.energy_drift(), tol["identity"]))
        entries.append(_entry("propagator_rank_one", max(abs(sv[0] - 1.0), float(np.max(sv[1:]))), 1e-10))
    except SpectralSysError as exc:
        entries.append(_entry("flow_energy", np.inf, tol["identity"], False, error=str(exc)))

    report = {"passed": all(e["passed"] for e in entries), "entries": entries,
              "tolerances": tol, "seed": seed}
    write_json(out / "report.json", report)
    return (EXIT_OK if report["passed"] else EXIT_FAIL), report


# ------------------------------------------------------------------ plumbing
def _parse_preset(text):
    key, _, value = text.partition("=")
    if key != "k3" or not value.lstrip("-").isdigit():
        raise SchemaError("preset must look like k3=<int>", "/frame")
    return int(value)


def _load(args):
    if args.input and args.preset:
        raise SchemaError("use either --input or --preset, not both")
    if args.input:
        return load_spec(args.input)
    if args.preset:
        return parse_spec(preset_spec(_parse_preset(args.preset)))
    if args.command == "example-k3":
        return parse_spec(preset_spec(1))
    raise SchemaError("an operator is required: --input FILE or --preset k3=N")


def build_parser():
    parser = argparse.ArgumentParser(prog="spectralsys", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("analyze", "spectrum", "verify", "example-k3"):
        p = sub.add_parser(name)
        p.add_argument("--input", help="operator specification (JSON)")
        p.add_argument("--preset", help="built-in operator, e.g. k3=1")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--grid", type=int, default=8, help="density grid per dependent axis")
        p.add_argument("-K", type=int, default=None, help="Galerkin truncation")
        p.add_argument("--lambda-max", type=float, default=None)
        p.add_argument("--mollifier-T", type=float, default=None)
        group = p.add_mutually_exclusive_group()
        group.add_argument("--oracle", dest="mode", action="store_const", const="oracle")
        group.add_argument("--galerkin", dest="mode", action="store_const", const="galerkin")
        p.add_argument("--asymmetry", action="store_true", help="also compute the spectrum of -A")
        p.set_defaults(mode="auto")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.K is not None and args.K < 1:
            raise SchemaError("K must be at least 1", "/truncation/K")
        if args.mollifier_T is not None and args.mollifier_T <= 0:
            raise SchemaError("T must be positive", "/mollifier/T")
        if args.workers < 1:
            raise SchemaError("workers must be at least 1")
        inp = _load(args)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "analyze":
            code, result = run_analyze(inp, out, args.grid, args.workers)
            print(f"a = {result['a']:.12g}  b = {result['b']:.12g}  (closed b = {result['b_closed']:.12g})")
        elif args.command == "spectrum":
            code, result = run_spectrum(inp, out, args.K, args.lambda_max, args.mollifier_T,
                                        args.mode, args.asymmetry)
            print(f"[{result['mode']}] a_fit = {result['a_fit']:.8g}  b_fit = {result['b_fit']:.8g}")
        elif args.command == "verify":
            code, result = run_verify(inp, out, args.workers)
            for e in result["entries"]:
                print(f"{'PASS' if e['passed'] else 'FAIL'}  {e['name']}")
        else:
            codes = [run_analyze(inp, out, args.grid, args.workers)[0],
                     run_spectrum(inp, out, args.K, args.lambda_max, args.mollifier_T, args.mode,
                                  args.asymmetry)[0],
                     run_verify(inp, out, args.workers)[0]]
            code = max(codes)
            print(f"example-k3 written to {out} (exit {code})")
        return code
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SpectralSysError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
