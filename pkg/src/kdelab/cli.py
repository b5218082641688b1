"""Command-line front end.

The CLI is a thin client of the HTTP service: it assembles a request from
config file plus flags (flags win), sends it through the FastAPI app (in
process by default, or to ``--server URL``), then writes the returned
report to disk atomically and prints one summary line per grid cell.

Exit codes: 0 success, 2 invalid input (bad flags, missing files, malformed
specs), 3 numerical failure (diverged moments, quadrature that cannot reach
its tolerance).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import InputError, KdelabError, NumericalError
from .reporting import atomic_write_text, canonical_json, csv_text, format_float

DEFAULT_THREADS = os.cpu_count() or 1


def _json_or_path(value: str):
    """Parse a flag value as a JSON literal, or as a path to a JSON file."""
    if os.path.exists(value):
        with open(value, "r", encoding="utf-8") as handle:
            return json.load(handle)
    try:
        return json.loads(value)
    except json.JSONDecodeError as exc:
        raise InputError(
            f"{value!r} is neither an existing file nor valid JSON: {exc}"
        ) from exc


def _load_queries(value: str):
    """Queries from a CSV file (header x1..xd) or a JSON list."""
    if os.path.exists(value) and value.endswith(".csv"):
        from .estimator import SampleSet

        with open(value, "r", encoding="utf-8") as handle:
            return [list(row) for row in SampleSet.from_csv_text(handle.read()).points]
    data = _json_or_path(value)
    if not isinstance(data, list):
        raise InputError("queries must be a JSON list or a CSV file")
    out = []
    for item in data:
        if isinstance(item, (int, float)):
            out.append([float(item)])
        else:
            out.append([float(v) for v in item])
    return out


def _normalize_bandwidths(raw, dim: int):
    """Accept scalars (h * identity), a single matrix, or a list of either."""
    if isinstance(raw, (int, float)):
        raw = [raw]
    if isinstance(raw, list) and raw and isinstance(raw[0], list) and raw[0] and isinstance(raw[0][0], (int, float)) and not isinstance(raw[0][0], bool):
        # could be a single matrix: list of rows of numbers with matching size
        if len(raw) == dim and all(len(r) == dim for r in raw):
            raw = [raw]
    out = []
    for item in raw:
        if isinstance(item, (int, float)):
            out.append(
                [[float(item) if i == j else 0.0 for j in range(dim)] for i in range(dim)]
            )
        else:
            out.append([[float(v) for v in row] for row in item])
    return out


class _Client:
    """Sends requests through the in-process app or to a remote server."""

    def __init__(self, server: str | None):
        self.server = server
        if server is None:
            import warnings

            with warnings.catch_warnings():
                # starlette warns about its httpx shim at import time
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service.app import app

            self._client = TestClient(app, raise_server_exceptions=False)
        else:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)

    def post(self, command: str, payload: dict) -> dict:
        resp = self._client.post(f"/v1/{command}", json=payload)
        if resp.status_code == 200:
            return resp.json()
        try:
            body = resp.json()
        except ValueError:
            body = {"detail": resp.text}
        detail = body.get("detail", "")
        if resp.status_code in (400, 422):
            raise InputError(f"request rejected: {detail}")
        if body.get("error_kind") == "numerical":
            raise NumericalError(str(detail))
        raise NumericalError(f"server error {resp.status_code}: {detail}")


def _validate_out_paths(*paths):
    for path in paths:
        if path is None:
            continue
        directory = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(directory):
            raise InputError(f"output directory does not exist: {directory}")


def _require_file(path, what: str):
    if path is None:
        raise InputError(f"missing required {what}")
    if not os.path.exists(path):
        raise InputError(f"{what} not found: {path}")
    return path


def _merged(args, config_keys: dict):
    """Start from --config file contents, then let set flags override."""
    cfg = {}
    if getattr(args, "config", None):
        cfg = _json_or_path(_require_file(args.config, "config file"))
        if not isinstance(cfg, dict):
            raise InputError("config file must hold a JSON object")
    out = dict(cfg)
    common = _collect_common(args)
    quad = dict(out.get("quad", {}))
    quad.update(common.pop("quad", {}))
    if quad:
        out["quad"] = quad
    out.update(common)
    for key, value in config_keys.items():
        if value is not None:
            out[key] = value
    return out


def _common_payload(args, cfg: dict) -> dict:
    payload = {}
    payload["seed"] = int(cfg.get("seed", 0))
    payload["threads"] = int(cfg.get("threads", DEFAULT_THREADS))
    quad = cfg.get("quad", {})
    if not isinstance(quad, dict):
        raise InputError("config key 'quad' must be an object")
    payload["quad"] = {
        "rel_tol": quad.get("rel_tol"),
        "abs_tol": quad.get("abs_tol"),
        "max_depth": quad.get("max_depth", 40),
    }
    return payload


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--quad-rel-tol", type=float, default=None, dest="quad_rel_tol")
    parser.add_argument("--quad-abs-tol", type=float, default=None, dest="quad_abs_tol")
    parser.add_argument("--quad-max-depth", type=int, default=None, dest="quad_max_depth")
    parser.add_argument("--server", default=None, help="remote service URL (default: in-process)")


def _collect_common(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.threads is not None:
        out["threads"] = args.threads
    quad = {}
    if args.quad_rel_tol is not None:
        quad["rel_tol"] = args.quad_rel_tol
    if args.quad_abs_tol is not None:
        quad["abs_tol"] = args.quad_abs_tol
    if args.quad_max_depth is not None:
        quad["max_depth"] = args.quad_max_depth
    if quad:
        out["quad"] = quad
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdelab",
        description="Kernel density estimation bias laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel-info", help="moment table and decay envelope as CSV")
    _add_common(p)
    p.add_argument("--kernel", help="kernel spec JSON (inline or path)")
    p.add_argument("--j-max", type=int, default=None)
    p.add_argument("--verify-order", type=int, default=None)
    p.add_argument("--envelope-radii", default=None, help="JSON list of radii")
    p.add_argument("--out", default=None, help="also write the CSV here")
    p.add_argument("--out-json", default=None)

    p = sub.add_parser("estimate", help="evaluate the estimator at query points")
    _add_common(p)
    p.add_argument("--samples", help="CSV of samples (header x1..xd)")
    p.add_argument("--kernel", help="kernel spec JSON (inline or path)")
    p.add_argument("--bandwidth", help="row-major matrix JSON or scalar")
    p.add_argument("--queries", help="CSV path or JSON list")
    p.add_argument("--out", help="output CSV (x1..xd,density)")

    p = sub.add_parser("bias-report", help="exact bias, series terms, remainder bound")
    _add_common(p)
    p.add_argument("--kernel")
    p.add_argument("--density")
    p.add_argument("--bandwidths", help="JSON: scalar(s) or matrix/matrices")
    p.add_argument("--queries")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out-json")
    p.add_argument("--out-csv")

    p = sub.add_parser("bias-scaling", help="log-log bias slope over bandwidths")
    _add_common(p)
    p.add_argument("--kernel")
    p.add_argument("--density")
    p.add_argument("--h-values", help="JSON list of scalar bandwidths")
    p.add_argument("--queries")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")

    p = sub.add_parser("mse-scaling", help="empirical MSE rate across sample sizes")
    _add_common(p)
    p.add_argument("--kernel")
    p.add_argument("--density")
    p.add_argument("--query")
    p.add_argument("--n-values", help="JSON list of sample sizes")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--bandwidth-constant", type=float, default=None)
    p.add_argument("--out-json")
    p.add_argument("--out-csv")

    p = sub.add_parser("blowup-demo", help="bandwidth-shrink blow-up sweep")
    _add_common(p)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--ell", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--schedule", choices=["balanced", "unbalanced"], default=None)
    p.add_argument("--eps-start", type=float, default=None)
    p.add_argument("--eps-steps", type=int, default=None)
    p.add_argument("--eps-ratio", type=float, default=None)
    p.add_argument("--far-radius", type=float, default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--out", help="output JSON")
    p.add_argument("--out-csv", help="CSV (eps,value,predicted) for plotting")

    p = sub.add_parser("moments", help="spike-train moment finiteness table")
    _add_common(p)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--ell", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--j-max", type=int, default=None)
    p.add_argument("--out-json")
    p.add_argument("--out-csv")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)

    return parser


# ---------------------------------------------------------------------------
# command handlers


def _cmd_kernel_info(args) -> int:
    cfg = _merged(
        args,
        {
            "kernel": _json_or_path(args.kernel) if args.kernel else None,
            "j_max": args.j_max,
            "verify_order_v": args.verify_order,
            "envelope_radii": _json_or_path(args.envelope_radii)
            if args.envelope_radii
            else None,
            "out": args.out,
            "out_json": args.out_json,
        },
    )
    if "kernel" not in cfg:
        raise InputError("kernel-info needs --kernel or a config entry")
    _validate_out_paths(cfg.get("out"), cfg.get("out_json"))
    payload = _common_payload(args, cfg)
    payload["kernel"] = cfg["kernel"]
    payload["j_max"] = int(cfg.get("j_max", 8))
    payload["envelope_radii"] = cfg.get("envelope_radii")
    payload["verify_order_v"] = cfg.get("verify_order_v")
    resp = _Client(args.server).post("kernel-info", payload)

    rows = [["moment", m["j"], m["value"], m["converged"]] for m in resp["moments"]]
    rows += [["envelope", e["r"], e["psi"], ""] for e in resp["envelope"]]
    text = csv_text(["record", "index", "value", "extra"], rows)
    sys.stdout.write(text)
    if cfg.get("out"):
        atomic_write_text(cfg["out"], text)
    if cfg.get("out_json"):
        atomic_write_text(cfg["out_json"], canonical_json(resp))
    return 0


def _cmd_estimate(args) -> int:
    cfg = _merged(
        args,
        {
            "samples": args.samples,
            "kernel": _json_or_path(args.kernel) if args.kernel else None,
            "bandwidth": _json_or_path(args.bandwidth) if args.bandwidth else None,
            "queries": args.queries,
            "out": args.out,
        },
    )
    for key in ("samples", "kernel", "bandwidth", "queries", "out"):
        if cfg.get(key) is None:
            raise InputError(f"estimate needs --{key.replace('_', '-')}")
    samples_path = _require_file(cfg["samples"], "samples file")
    _validate_out_paths(cfg["out"])
    kernel = cfg["kernel"]
    dim = int(kernel["dim"])
    queries = _load_queries(cfg["queries"]) if isinstance(cfg["queries"], str) else cfg["queries"]

    from .estimator import SampleSet

    with open(samples_path, "r", encoding="utf-8") as handle:
        samples = SampleSet.from_csv_text(handle.read())

    payload = _common_payload(args, cfg)
    payload["kernel"] = kernel
    payload["bandwidth"] = _normalize_bandwidths(cfg["bandwidth"], dim)[0]
    payload["samples"] = [list(map(float, row)) for row in samples.points]
    payload["queries"] = queries
    resp = _Client(args.server).post("estimate", payload)

    header = [f"x{i + 1}" for i in range(dim)] + ["density"]
    rows = [list(q) + [v] for q, v in zip(queries, resp["values"])]
    atomic_write_text(cfg["out"], csv_text(header, rows))
    for q, v in zip(queries, resp["values"]):
        print(f"estimate x={q} density={format_float(v)}")
    return 0


def _cmd_bias_report(args) -> int:
    cfg = _merged(
        args,
        {
            "kernel": _json_or_path(args.kernel) if args.kernel else None,
            "density": _json_or_path(args.density) if args.density else None,
            "bandwidths": _json_or_path(args.bandwidths) if args.bandwidths else None,
            "queries": args.queries,
            "k": args.k,
            "delta": args.delta,
            "out_json": args.out_json,
            "out_csv": args.out_csv,
        },
    )
    for key in ("kernel", "density", "bandwidths", "queries"):
        if cfg.get(key) is None:
            raise InputError(f"bias-report needs --{key}")
    _validate_out_paths(cfg.get("out_json"), cfg.get("out_csv"))
    kernel = cfg["kernel"]
    dim = int(kernel["dim"])
    queries = _load_queries(cfg["queries"]) if isinstance(cfg["queries"], str) else cfg["queries"]

    payload = _common_payload(args, cfg)
    payload["kernel"] = kernel
    payload["density"] = cfg["density"]
    payload["bandwidths"] = _normalize_bandwidths(cfg["bandwidths"], dim)
    payload["queries"] = queries
    payload["k"] = int(cfg.get("k", 2))
    payload["delta"] = cfg.get("delta")
    resp = _Client(args.server).post("bias-report", payload)

    k = payload["k"]
    header = (
        ["h_norm", "h_det"]
        + [f"x{i + 1}" for i in range(dim)]
        + ["k", "exact_bias"]
        + [f"mu_{j}" for j in range(k + 1)]
        + [
            "empirical_remainder",
            "delta_used",
            "tail_term",
            "taylor_term",
            "bound_total",
            "bound_times_hk",
            "margin_ratio",
            "bound_satisfied",
        ]
    )
    rows = []
    for rep in resp["reports"]:
        rows.append(
            [rep["h_norm"], rep["h_det"]]
            + list(rep["x_query"])
            + [rep["k"], rep["exact_bias"]]
            + list(rep["moment_terms"])
            + [
                rep["empirical_remainder"],
                rep["delta_used"],
                rep["tail_term"],
                rep["taylor_term"],
                rep["bound_total"],
                rep["bound_times_hk"],
                rep["margin_ratio"],
                rep["bound_satisfied"],
            ]
        )
        print(
            f"cell h_norm={format_float(rep['h_norm'])} x={rep['x_query']} "
            f"bias={format_float(rep['exact_bias'])} "
            f"remainder={format_float(rep['empirical_remainder'])} "
            f"bound*h^k={format_float(rep['bound_times_hk'])} "
            f"ok={rep['bound_satisfied']}"
        )
    if cfg.get("out_json"):
        atomic_write_text(cfg["out_json"], canonical_json(resp))
    if cfg.get("out_csv"):
        atomic_write_text(cfg["out_csv"], csv_text(header, rows))
    return 0


def _cmd_bias_scaling(args) -> int:
    cfg = _merged(
        args,
        {
            "kernel": _json_or_path(args.kernel) if args.kernel else None,
            "density": _json_or_path(args.density) if args.density else None,
            "h_values": _json_or_path(args.h_values) if args.h_values else None,
            "queries": args.queries,
            "out_json": args.out_json,
            "out_csv": args.out_csv,
        },
    )
    for key in ("kernel", "density", "h_values", "queries"):
        if cfg.get(key) is None:
            raise InputError(f"bias-scaling needs --{key.replace('_', '-')}")
    _validate_out_paths(cfg.get("out_json"), cfg.get("out_csv"))
    queries = _load_queries(cfg["queries"]) if isinstance(cfg["queries"], str) else cfg["queries"]

    payload = _common_payload(args, cfg)
    payload["kernel"] = cfg["kernel"]
    payload["density"] = cfg["density"]
    payload["queries"] = queries
    payload["h_values"] = [float(v) for v in cfg["h_values"]]
    resp = _Client(args.server).post("bias-scaling", payload)

    rows = []
    for qi, entry in enumerate(resp["per_query"]):
        print(
            f"query x={entry['x_query']} slope={format_float(entry['slope'])}"
        )
        for pt in entry["points"]:
            rows.append(
                [qi, pt["h_value"], pt["bias"], pt["included"]]
            )
    if cfg.get("out_json"):
        atomic_write_text(cfg["out_json"], canonical_json(resp))
    if cfg.get("out_csv"):
        atomic_write_text(
            cfg["out_csv"],
            csv_text(["query_index", "h_value", "bias", "included"], rows),
        )
    return 0


def _cmd_mse_scaling(args) -> int:
    cfg = _merged(
        args,
        {
            "kernel": _json_or_path(args.kernel) if args.kernel else None,
            "density": _json_or_path(args.density) if args.density else None,
            "query": _json_or_path(args.query) if args.query else None,
            "n_values": _json_or_path(args.n_values) if args.n_values else None,
            "replicates": args.replicates,
            "bandwidth_constant": args.bandwidth_constant,
            "out_json": args.out_json,
            "out_csv": args.out_csv,
        },
    )
    for key in ("kernel", "density", "query", "n_values"):
        if cfg.get(key) is None:
            raise InputError(f"mse-scaling needs --{key.replace('_', '-')}")
    _validate_out_paths(cfg.get("out_json"), cfg.get("out_csv"))
    query = cfg["query"]
    if isinstance(query, (int, float)):
        query = [float(query)]

    payload = _common_payload(args, cfg)
    payload["kernel"] = cfg["kernel"]
    payload["density"] = cfg["density"]
    payload["query"] = [float(v) for v in query]
    payload["n_values"] = [int(n) for n in cfg["n_values"]]
    payload["replicates"] = int(cfg.get("replicates", 200))
    payload["bandwidth_constant"] = float(cfg.get("bandwidth_constant", 1.06))
    resp = _Client(args.server).post("mse-scaling", payload)

    rows = [[pt["n"], pt["mse"], pt["mean_h"]] for pt in resp["points"]]
    for pt in resp["points"]:
        print(f"n={pt['n']} mse={format_float(pt['mse'])} mean_h={format_float(pt['mean_h'])}")
    print(f"mse-scaling slope={format_float(resp['slope'])}")
    if cfg.get("out_json"):
        atomic_write_text(cfg["out_json"], canonical_json(resp))
    if cfg.get("out_csv"):
        atomic_write_text(cfg["out_csv"], csv_text(["n", "mse", "mean_h"], rows))
    return 0


def _cmd_blowup(args) -> int:
    cfg = _merged(
        args,
        {
            "p": args.p,
            "ell": args.ell,
            "dim": args.dim,
            "schedule": args.schedule,
            "eps_start": args.eps_start,
            "eps_steps": args.eps_steps,
            "eps_ratio": args.eps_ratio,
            "far_radius": args.far_radius,
            "n_max": args.n_max,
            "out": args.out,
            "out_csv": args.out_csv,
        },
    )
    if cfg.get("p") is None:
        raise InputError("blowup-demo needs --p")
    _validate_out_paths(cfg.get("out"), cfg.get("out_csv"))

    payload = _common_payload(args, cfg)
    payload.update(
        p=float(cfg["p"]),
        ell=int(cfg.get("ell", 0)),
        dim=int(cfg.get("dim", 1)),
        schedule=cfg.get("schedule", "balanced"),
        eps_start=float(cfg.get("eps_start", 0.5)),
        eps_steps=int(cfg.get("eps_steps", 6)),
        eps_ratio=float(cfg.get("eps_ratio", 0.5)),
        far_radius=float(cfg.get("far_radius", 1.05)),
        n_max=int(cfg.get("n_max", 10_000)),
    )
    resp = _Client(args.server).post("blowup-demo", payload)

    for step in resp["steps"]:
        print(
            f"eps={format_float(step['eps'])} value={format_float(step['value'])} "
            f"predicted={format_float(step['predicted'])} converged={step['converged']}"
        )
    print(
        f"blowup slope={format_float(resp['fitted_slope'])} "
        f"predicted={format_float(resp['predicted_slope'])}"
    )
    if cfg.get("out"):
        atomic_write_text(cfg["out"], canonical_json(resp))
    if cfg.get("out_csv"):
        rows = [[s["eps"], s["value"], s["predicted"]] for s in resp["steps"]]
        atomic_write_text(cfg["out_csv"], csv_text(["eps", "value", "predicted"], rows))
    return 0


def _cmd_moments(args) -> int:
    cfg = _merged(
        args,
        {
            "p": args.p,
            "ell": args.ell,
            "dim": args.dim,
            "n_max": args.n_max,
            "j_max": args.j_max,
            "out_json": args.out_json,
            "out_csv": args.out_csv,
        },
    )
    if cfg.get("p") is None:
        raise InputError("moments needs --p")
    _validate_out_paths(cfg.get("out_json"), cfg.get("out_csv"))

    payload = _common_payload(args, cfg)
    payload.update(
        p=float(cfg["p"]),
        ell=int(cfg.get("ell", 2)),
        dim=int(cfg.get("dim", 1)),
        n_max=int(cfg.get("n_max", 10_000)),
        j_max=cfg.get("j_max"),
    )
    resp = _Client(args.server).post("moments", payload)

    rows = [[m["j"], m["value"], m["converged"]] for m in resp["rows"]]
    for m in resp["rows"]:
        print(f"moment j={m['j']} value={format_float(m['value'])} converged={m['converged']}")
    if cfg.get("out_json"):
        atomic_write_text(cfg["out_json"], canonical_json(resp))
    if cfg.get("out_csv"):
        atomic_write_text(cfg["out_csv"], csv_text(["j", "value", "converged"], rows))
    return 0


_HANDLERS = {
    "kernel-info": _cmd_kernel_info,
    "estimate": _cmd_estimate,
    "bias-report": _cmd_bias_report,
    "bias-scaling": _cmd_bias_scaling,
    "mse-scaling": _cmd_mse_scaling,
    "blowup-demo": _cmd_blowup,
    "moments": _cmd_moments,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    try:
        return _HANDLERS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except KdelabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
