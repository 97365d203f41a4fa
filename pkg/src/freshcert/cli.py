"""Command-line orchestration: tasks, kernels, certificates, experiments.

Every command funnels randomness through one seeded generator, writes
outputs atomically, and drops a manifest (input digests, seed, version,
wall clock) next to the primary output so identical manifests imply
bit-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, cases, klbounds
from . import prompting as prompt_mod, transformer as tk
from .graph import build_graph
from .kernels import (EqualityPatternKernel, TableKernel, CachedPatternKernel,
                      check_token_symmetry, gram_bundle, template_matrix)
from .klr import SolverConfig, primal_score, solve_dual, solve_ideal
from .pipeline import TaskPipeline
from .tasks import (Dataset, Sample, SubstitutionScheme, Template, TemplateFamily,
                    classify_string, collision_primitives, lit, sample_dataset, wc)

# ---------------------------------------------------------------------------
# serialization helpers


class GlyphTable:
    """Bidirectional glyph <-> dense token-id map used only at this boundary."""

    def __init__(self):
        self.to_id: dict[str, int] = {}
        self.to_glyph: dict[int, str] = {}

    def intern(self, token) -> int:
        if isinstance(token, int):
            return token
        if token not in self.to_id:
            idx = len(self.to_id)
            while idx in self.to_glyph:
                idx += 1
            self.to_id[token] = idx
            self.to_glyph[idx] = token
        return self.to_id[token]


def load_family(path: str) -> tuple[TemplateFamily, SubstitutionScheme, GlyphTable]:
    with open(path) as fh:
        spec = json.load(fh)
    glyphs = GlyphTable()
    templates = []
    for tdef in spec["templates"]:
        slots = []
        for s in tdef["slots"]:
            if "lit" in s:
                slots.append(lit(glyphs.intern(s["lit"])))
            else:
                slots.append(wc(int(s["wc"])))
        templates.append(Template(tuple(slots)))
    family = TemplateFamily(tuple(templates), tuple(spec["labels"]),
                            tuple(spec["masses"]))
    alpha = spec.get("alphabet", {})

    def ids(key):
        return tuple(glyphs.intern(t) for t in alpha.get(key, ()))

    scheme = SubstitutionScheme(ids("train"), ids("val"), ids("test"))
    return family, scheme, glyphs


def load_kernel(path: str | None):
    if path is None:
        return EqualityPatternKernel()
    with open(path) as fh:
        spec = json.load(fh)
    kind = spec.get("kind", "equality-pattern")
    if kind in ("equality-pattern", "equality"):
        return EqualityPatternKernel(scale=spec.get("scale", 1.0))
    if kind == "equality-table":
        table = {tuple(json.loads(k)): v for k, v in spec["table"].items()}
        return TableKernel(table, default=spec.get("default"))
    if kind == "transformer":
        cfgd = spec.get("config", {})
        act = {"identity": tk.identity, "relu": tk.relu}.get(
            cfgd.get("activation", "identity"))
        if act is None:
            act = tk.softplus_sharp(float(cfgd.get("sharpness", 20.0)))
        cfg = tk.AttnConfig(k=int(cfgd["k"]) + 1, beta=cfgd.get("beta", 0.0),
                            gamma=cfgd.get("gamma", 0.0), activation=act)
        mc = int(cfgd.get("mc_samples", 50_000))
        order = int(cfgd.get("quadrature_order", 40))
        seed = int(cfgd.get("seed", 0))

        def evaluator(x, y):
            vocab = max(max(x), max(y)) + 2
            cls = vocab - 1
            xs = tk.one_hot(tuple(x) + (cls,), vocab)
            ys = tk.one_hot(tuple(y) + (cls,), vocab)
            return tk.trans_kernel_limit(xs, ys, cfg, mc, order, seed)

        return CachedPatternKernel(evaluator)
    raise SystemExit(f"unknown kernel kind {kind!r}")


def dataset_to_json(dataset: Dataset) -> dict:
    return {
        "samples": [
            {"template": s.template_index,
             "mapping": {str(k): v for k, v in s.mapping.items()},
             "string": list(s.string), "label": s.label}
            for s in dataset.samples
        ],
    }


def dataset_from_json(payload: dict, family: TemplateFamily) -> Dataset:
    samples = []
    for s in payload["samples"]:
        samples.append(Sample(int(s["template"]),
                              {int(k): int(v) for k, v in s["mapping"].items()},
                              tuple(s["string"]), s["label"]))
    return Dataset(family, tuple(samples))


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()[:16]


def write_output(path: str, payload, manifest: dict | None = None):
    """Atomic write; JSON for dicts/lists, raw text otherwise."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory)
    with os.fdopen(fd, "w") as fh:
        if isinstance(payload, (dict, list)):
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        else:
            fh.write(payload)
    os.replace(tmp, path)
    if manifest is not None:
        with open(path + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def make_manifest(args, inputs: list[str], t0: float, outputs: list[str]) -> dict:
    return {
        "command": " ".join(sys.argv[1:]),
        "inputs": {p: _digest(p) for p in inputs if p and os.path.exists(p)},
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_clock_s": round(time.time() - t0, 3),
        "outputs": outputs,
    }


def emit(args, payload: dict, out_attr: str = "out", inputs: list[str] = (),
         t0: float | None = None):
    out = getattr(args, out_attr, None)
    if out:
        manifest = make_manifest(args, list(inputs), t0 or time.time(), [out])
        write_output(out, payload, manifest)
        print(f"wrote {out}")
    if getattr(args, "json", False) or not out:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True, default=float)
        print()


# ---------------------------------------------------------------------------
# commands


def cmd_task(args):
    t0 = time.time()
    family, scheme, _ = load_family(args.family)
    if args.action == "validate":
        scheme.check_feasible(family)
        family.validate_disjoint(scheme, trials=args.trials, seed=args.seed)
        emit(args, {"ok": True, "r": family.r, "k": family.k,
                    "w_max": family.w_max,
                    "literals": sorted(family.literal_set)},
             inputs=[args.family], t0=t0)
        return
    dataset = sample_dataset(family, scheme, args.n, args.seed)
    payload = dataset_to_json(dataset)
    if len(dataset):
        payload["empirical_masses"] = dataset.empirical_masses().tolist()
    else:
        payload["empirical_masses"] = None  # undefined for an empty dataset
    emit(args, payload, inputs=[args.family], t0=t0)


def cmd_kernel(args):
    t0 = time.time()
    family, scheme, _ = load_family(args.family)
    kernel = load_kernel(args.kernel)
    if args.action == "check":
        rep = check_token_symmetry(kernel, family, trials=args.trials,
                                   seed=args.seed, tol=args.tol)
        emit(args, {"passed": rep.passed, "trials": rep.trials,
                    "max_violation": rep.max_violation,
                    "witness": repr(rep.witness) if rep.witness else None},
             inputs=[args.family, args.kernel or ""], t0=t0)
        return
    tmat = template_matrix(kernel, family)
    payload = {"n": tmat.n.tolist(), "d": tmat.d.tolist(),
               "delta_star": tmat.delta_star, "k_star": tmat.k_star,
               "l_star": tmat.l_star}
    emit(args, payload, inputs=[args.family, args.kernel or ""], t0=t0)


def cmd_tkernel(args):
    t0 = time.time()
    with open(args.config) as fh:
        cfgd = json.load(fh)
    act = {"identity": tk.identity, "relu": tk.relu}.get(
        cfgd.get("activation", "identity"), None)
    if act is None:
        act = tk.softplus_sharp(float(cfgd.get("sharpness", 20.0)))
    cfg = tk.AttnConfig(k=int(cfgd["k"]), beta=cfgd.get("beta", 0.0),
                        gamma=cfgd.get("gamma", 0.0), activation=act)
    if args.action == "limit":
        with open(args.pair) as fh:
            pair = json.load(fh)
        vocab = int(pair["vocab"])
        x = tk.one_hot(tuple(pair["x"]), vocab)
        y = tk.one_hot(tuple(pair["y"]), vocab)
        attn, err = tk.attn_kernel_limit(x, y, cfg, args.mc_samples, args.seed)
        trans = tk.trans_kernel_limit(x, y, cfg, args.mc_samples, args.order,
                                      args.seed)
        emit(args, {"attn": attn, "attn_stderr": err, "trans": trans},
             inputs=[args.config, args.pair], t0=t0)
        return
    widths = [int(w) for w in args.widths.split(",")]
    vocab = int(cfgd.get("vocab", cfg.k + 4))
    rng = np.random.default_rng(args.seed)
    inputs = []
    for _ in range(int(cfgd.get("n_inputs", 4))):
        toks = tuple(int(t) for t in rng.integers(0, vocab - 1, size=cfg.k - 1))
        inputs.append(tk.one_hot(toks + (vocab - 1,), vocab))
    probe = tk.convergence_probe(inputs, cfg, widths, trials=args.trials,
                                 seed=args.seed, mc_samples=args.mc_samples,
                                 quadrature_order=args.order)
    rows = ["width,trial,max_error"]
    for width, errs in probe["errors"].items():
        for t, e in enumerate(errs):
            rows.append(f"{width},{t},{e:.10g}")
    write_output(args.out, "\n".join(rows) + "\n",
                 make_manifest(args, [args.config], t0, [args.out]))
    print(f"wrote {args.out}")


def _load_matrix(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _load_vector(path):
    return np.loadtxt(path, delimiter=",").reshape(-1)


def cmd_klr(args):
    t0 = time.time()
    if args.action == "fit":
        gram = _load_matrix(args.gram)
        labels = _load_vector(args.labels)
        sol = solve_dual(gram, labels, args.lam,
                         SolverConfig(tol=args.tol))
        payload = {"c": sol.c.tolist(), "objective": sol.objective,
                   "grad_norm": sol.grad_norm, "iterations": sol.iterations}
        if args.test_vector:
            k = _load_vector(args.test_vector)
            payload["score"] = primal_score(sol.c, labels, k, args.lam, len(labels))
        emit(args, payload, inputs=[args.gram, args.labels], t0=t0)
        return
    n_mat = _load_matrix(args.nmat)
    q = _load_vector(args.q)
    labels = _load_vector(args.labels)
    ideal = solve_ideal(n_mat, q, args.lam, labels, SolverConfig(tol=args.tol))
    emit(args, {"g": ideal.g.tolist(), "theta": ideal.theta.tolist(),
                "margin": ideal.margin, "grad_norm": ideal.grad_norm},
         inputs=[args.nmat, args.q, args.labels], t0=t0)


def _load_task_config(path: str):
    with open(path) as fh:
        cfg = json.load(fh)
    family, scheme, glyphs = load_family(cfg["family"]) if isinstance(
        cfg["family"], str) else (None, None, None)
    if family is None:
        # inline family definition
        tmp = tempfile.NamedTemporaryFile("w", suffix=".json", delete=False)
        json.dump(cfg["family"], tmp)
        tmp.close()
        family, scheme, glyphs = load_family(tmp.name)
        os.unlink(tmp.name)
    kernel = load_kernel(cfg.get("kernel")) if isinstance(
        cfg.get("kernel"), str) else EqualityPatternKernel()
    test_template = int(cfg.get("test_template", 0))
    w = family.templates[test_template].wildcards
    pool = scheme.admissible(family.templates[test_template], "test")
    if len(pool) < len(w):
        raise SystemExit("test sub-alphabet too small for a fresh test string")
    test_sub = dict(zip(w, pool[:len(w)]))
    return cfg, family, scheme, kernel, test_template, test_sub


def cmd_certify(args):
    t0 = time.time()
    cfg, family, scheme, kernel, test_template, test_sub = _load_task_config(args.config)
    pipe = TaskPipeline(family, scheme, kernel, test_template, test_sub,
                        lam=args.lam or cfg.get("lam", 0.05),
                        delta=args.delta or cfg.get("delta", 0.1),
                        seed=args.seed)
    eta = args.eta if args.eta is not None else cfg.get("eta")
    if args.dataset:
        with open(args.dataset) as fh:
            dataset = dataset_from_json(json.load(fh), family)
        res = pipe.evaluate(dataset, eta=eta)
    else:
        res = pipe.run_trial(args.seed, args.n or cfg.get("n", 96), eta=eta)
    payload = {"report": res.report.as_dict(),
               "realized_error": res.realized_error,
               "ideal_margin": res.ideal_margin,
               "f_hat": res.f_hat, "s_ideal": res.s_ideal,
               "e_rep": res.e_rep}
    if res.wedge_report is not None:
        payload["envelope"] = res.wedge_report.as_dict()
    emit(args, payload, inputs=[args.config, args.dataset or ""], t0=t0)


def cmd_envelope(args):
    if args.eta is None:
        # translate the requested wedge level v into its tail mass eta
        _, family, *_ = _load_task_config(args.config)
        r = family.r
        args.eta = (r * r + r ** 3 + 1) * math.exp(-args.v)
        args.eta = min(max(args.eta, 1e-12), 0.999999)
    cmd_certify(args)


def cmd_graph(args):
    t0 = time.time()
    family, scheme, _ = load_family(args.family)
    with open(args.dataset) as fh:
        dataset = dataset_from_json(json.load(fh), family)
    with open(args.test) as fh:
        tjson = json.load(fh)
    test_template = int(tjson["template"])
    test_sub = {int(k): int(v) for k, v in tjson["mapping"].items()}
    graph = build_graph(dataset, test_template, test_sub)
    kernel = load_kernel(args.kernel)
    tmat = template_matrix(kernel, family)
    bundle = gram_bundle(kernel, dataset,
                         family.templates[test_template].substitute(test_sub), tmat)
    payload = graph_export_payload(graph.support, graph.test_edges,
                                   dataset.colors, bundle.delta, bundle.zeta,
                                   name=os.path.basename(args.dataset))
    emit(args, payload, inputs=[args.family, args.dataset, args.test], t0=t0)


def cmd_gram(args):
    """Serialize a Gram bundle: CSV matrices plus a JSON header."""
    t0 = time.time()
    family, scheme, _ = load_family(args.family)
    with open(args.dataset) as fh:
        dataset = dataset_from_json(json.load(fh), family)
    with open(args.test) as fh:
        tjson = json.load(fh)
    test_template = int(tjson["template"])
    test_sub = {int(k): int(v) for k, v in tjson["mapping"].items()}
    kernel = load_kernel(args.kernel)
    tmat = template_matrix(kernel, family)
    bundle = gram_bundle(kernel, dataset,
                         family.templates[test_template].substitute(test_sub), tmat)
    prefix = args.out
    for name, mat in (("gram", bundle.gram), ("ktest", bundle.k_test),
                      ("delta", bundle.delta), ("zeta", bundle.zeta)):
        np.savetxt(f"{prefix}.{name}.csv", np.atleast_2d(mat), delimiter=",")
    header = {
        "colors": dataset.colors.tolist(),
        "labels": dataset.labels.tolist(),
        "test_template": test_template,
        "n": len(dataset),
        "k_star": tmat.k_star,
        "l_star": tmat.l_star,
        "delta_star": tmat.delta_star,
        "files": {name: f"{prefix}.{name}.csv"
                  for name in ("gram", "ktest", "delta", "zeta")},
    }
    write_output(f"{prefix}.json", header,
                 make_manifest(args, [args.family, args.dataset, args.test], t0,
                               [f"{prefix}.json"]))
    print(f"wrote {prefix}.json")


def graph_export_payload(support, test_edges, colors, delta, zeta, name="graph"):
    """Node/edge list consumed by the plotting package."""
    n = len(colors)
    nodes = [{"id": int(i), "color": int(colors[i]), "kind": "train"}
             for i in range(n)]
    nodes.append({"id": n, "color": -1, "kind": "test"})
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if support[i, j]:
                edges.append({"source": int(i), "target": int(j),
                              "weight": float(delta[i, j])})
    for i in range(n):
        if test_edges[i]:
            edges.append({"source": int(i), "target": n,
                          "weight": float(zeta[i]), "test_edge": True})
    return {"name": name, "nodes": nodes, "edges": edges}


CASE_CSV_COLUMNS = ["case", "regime", "route", "b_sharp", "b_rho", "b_cs",
                    "b_deg", "b_bd", "b_anova", "b_bf", "edges", "test_edges",
                    "flipped", "log10_ratio"]


def cmd_cases(args):
    t0 = time.time()
    config = cases.CaseConfig(grid_lo=args.grid_lo, grid_hi=args.grid_hi,
                              grid_points=args.grid_points)
    table = cases.run_catalogue(config=config)
    wanted = list(table) if args.case == "all" else [args.case]
    rows = [",".join(CASE_CSV_COLUMNS)]
    summary = {}
    for name in wanted:
        row = table[name]
        best = min((r for r in row["reports"] if r.route == row["route"]),
                   key=lambda r: r.b_sharp)
        ratio = math.log10(row["b_rho"] / best.b_sharp) if best.b_sharp > 0 else math.inf
        rows.append(",".join(str(x) for x in [
            name, row["regime"].replace(",", ";"), row["route"],
            f"{best.b_sharp:.6g}", f"{row['b_rho']:.4f}",
            *(f"{best.budgets[r]:.6g}" for r in ("CS", "DEG", "BD", "ANOVA", "BF")),
            row["edges"], row["test_edges"], row["flipped"], f"{ratio:.4f}"]))
        summary[name] = {"route": row["route"], "b_sharp": best.b_sharp,
                         "b_rho": row["b_rho"], "flipped": row["flipped"]}
        if args.graphs_out:
            data = cases.build_case(next(s for s in cases.CASES if s.name == name))
            payload = graph_export_payload(data.support, data.test_edges,
                                           data.colors, data.delta, data.zeta,
                                           name=name)
            write_output(os.path.join(args.graphs_out, f"{name}.json"), payload)
    if args.out:
        write_output(args.out, "\n".join(rows) + "\n",
                     make_manifest(args, [], t0, [args.out]))
        print(f"wrote {args.out}")
    json.dump(summary, sys.stdout, indent=2, sort_keys=True, default=float)
    print()


def cmd_coverage(args):
    t0 = time.time()
    cfg, family, scheme, kernel, test_template, test_sub = _load_task_config(args.config)
    pipe = TaskPipeline(family, scheme, kernel, test_template, test_sub,
                        lam=cfg.get("lam", 0.05), delta=cfg.get("delta", 0.1),
                        seed=args.seed)
    out = pipe.coverage(args.trials, cfg.get("n", 96), eta=cfg.get("eta"),
                        seed0=args.seed, progress=not args.quiet)
    r, n = family.r, cfg.get("n", 96)
    out["coverage_floor"] = 1.0 - r * math.exp(-n * family.p_min / 8.0) \
        - cfg.get("delta", 0.1)
    if cfg.get("eta") is not None:
        out["envelope_floor"] = 1.0 - cfg["eta"]
    emit(args, out, inputs=[args.config], t0=t0)


SWEEP_COLUMNS = ["axis", "value", "lam", "n", "b_sharp", "route", "b_cs", "b_deg",
                 "b_bd", "b_anova", "b_bf", "b_rho", "realized_error",
                 "ideal_margin", "gamma_cspec", "a_delta"]


def cmd_sweep(args):
    t0 = time.time()
    cfg, family, scheme, kernel, test_template, test_sub = _load_task_config(args.config)
    grid = [float(g) for g in args.grid.split(",")] if args.grid else []
    rows = [",".join(SWEEP_COLUMNS)]
    for value in grid:
        lam = cfg.get("lam", 0.05)
        n = int(cfg.get("n", 96))
        if args.axis == "lam":
            lam = value
        elif args.axis == "n":
            n = int(value)
        elif args.axis == "m":
            m = int(value)
            scheme = SubstitutionScheme(tuple(range(m)),
                                        scheme.val, scheme.test)
        else:
            raise SystemExit(f"unsupported axis {args.axis!r}")
        pipe = TaskPipeline(family, scheme, kernel, test_template, test_sub,
                            lam=lam, delta=cfg.get("delta", 0.1), seed=args.seed)
        res = pipe.run_trial(args.seed, n)
        rep = res.report
        rows.append(",".join(str(x) for x in [
            args.axis, value, lam, n, f"{rep.b_sharp:.6g}", rep.route,
            *(f"{rep.budgets[r]:.6g}" for r in ("CS", "DEG", "BD", "ANOVA", "BF")),
            f"{rep.b_rho:.4f}", f"{res.realized_error:.6g}",
            f"{res.ideal_margin:.6g}",
            f"{rep.terms.get('gamma_cspec', math.nan):.6g}",
            f"{rep.terms.get('a_delta', math.nan):.6g}"]))
    write_output(args.out, "\n".join(rows) + "\n",
                 make_manifest(args, [args.config], t0, [args.out]))
    print(f"wrote {args.out}")


def cmd_klbound(args):
    val = klbounds.kl_inverse(args.n_eff, args.q, args.u)
    relax = klbounds.bernstein_relax(args.n_eff, args.q, args.u) \
        if args.n_eff > 0 else 1.0
    emit(args, {"kl_inverse": val, "bernstein": relax,
                "kl_divergence_at_value": klbounds.bernoulli_kl(val, args.q)
                if 0 < args.q < 1 else None})


def cmd_prompting(args):
    t0 = time.time()
    n_mat = _load_matrix(args.nmat)
    h_mat = _load_matrix(args.hmat)
    q = _load_vector(args.q)
    labels = _load_vector(args.labels)
    report = prompt_mod.margin_derivative(n_mat, h_mat, q, args.lam, labels)
    payload = {"g0": report.g0.tolist(),
               "derivative": report.derivative.tolist(),
               "margin_gains": report.margin_gains.tolist()}
    if args.fd_check:
        chk = prompt_mod.fd_check(n_mat, h_mat, q, args.lam, labels)
        payload["fd_errors"] = {f"{k:g}": v for k, v in chk["errors"].items()}
    emit(args, payload, inputs=[args.nmat, args.hmat, args.q, args.labels], t0=t0)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freshcert",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, out=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", action="store_true",
                       help="also print the payload to stdout")
        if out:
            p.add_argument("--out")

    p = sub.add_parser("task", help="validate or sample a template family")
    p.add_argument("action", choices=["validate", "sample"])
    p.add_argument("--family", required=True)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--trials", type=int, default=10_000)
    common(p)
    p.set_defaults(func=cmd_task)

    p = sub.add_parser("kernel", help="token-symmetry check or template matrix")
    p.add_argument("action", choices=["check", "matrix"])
    p.add_argument("--family", required=True)
    p.add_argument("--kernel")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-9)
    common(p)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("tkernel", help="transformer kernel limits and width probes")
    p.add_argument("action", choices=["limit", "probe"])
    p.add_argument("--config", required=True)
    p.add_argument("--pair")
    p.add_argument("--widths", default="64,256,1024")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--mc-samples", type=int, default=200_000)
    p.add_argument("--order", type=int, default=40)
    common(p)
    p.set_defaults(func=cmd_tkernel)

    p = sub.add_parser("klr", help="entropy-dual fit or ideal template problem")
    p.add_argument("action", choices=["fit", "ideal"])
    p.add_argument("--gram")
    p.add_argument("--labels", required=True)
    p.add_argument("--nmat")
    p.add_argument("--q")
    p.add_argument("--test-vector")
    p.add_argument("--lam", "--lambda", dest="lam", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    common(p)
    p.set_defaults(func=cmd_klr)

    p = sub.add_parser("graph", help="export a collision graph as node/edge JSON")
    p.add_argument("action", choices=["export"])
    p.add_argument("--family", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--kernel")
    common(p)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("gram", help="serialize a Gram bundle (CSV + JSON header)")
    p.add_argument("--family", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--kernel")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("certify", help="one-shot certificate report")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset")
    p.add_argument("--n", type=int)
    p.add_argument("--lam", "--lambda", dest="lam", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--eta", type=float)
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("envelope", help="certificate plus edge-wedge envelope")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset")
    p.add_argument("--n", type=int)
    p.add_argument("--lam", "--lambda", dest="lam", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--v", type=float, default=3.0)
    p.add_argument("--eta", type=float)
    common(p)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("coverage", help="empirical validity frequencies")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--quiet", action="store_true")
    common(p)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("cases", help="the eight built-in collision-geometry cases")
    p.add_argument("--case", default="all",
                   choices=["all"] + [s.name for s in cases.CASES])
    p.add_argument("--grid-lo", type=float, default=cases.CaseConfig().grid_lo)
    p.add_argument("--grid-hi", type=float, default=cases.CaseConfig().grid_hi)
    p.add_argument("--grid-points", type=int, default=cases.CaseConfig().grid_points)
    p.add_argument("--graphs-out")
    common(p)
    p.set_defaults(func=cmd_cases)

    p = sub.add_parser("sweep", help="CSV of certificate terms along a grid")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=["n", "lam", "m"])
    p.add_argument("--grid", default="")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("klbound", help="evaluate the KL inverse envelope")
    p.add_argument("--n-eff", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--u", type=float, required=True)
    common(p)
    p.set_defaults(func=cmd_klbound)

    p = sub.add_parser("prompting", help="first-order prompted-margin derivative")
    p.add_argument("action", choices=["derivative"])
    p.add_argument("--nmat", required=True)
    p.add_argument("--hmat", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--lam", "--lambda", dest="lam", type=float, required=True)
    p.add_argument("--fd-check", action="store_true")
    common(p)
    p.set_defaults(func=cmd_prompting)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
