"""Batch command-line front end.

One command per process; every artifact is written atomically
(temp-then-rename) and reruns with an identical configuration are
byte-identical. Exit codes: 0 success, 2 validation error, 3 numeric
failure. Diagnostics go to stderr only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import datagen, dr
from .causal import kpc_skeleton
from .condind import ci_test
from .errors import NumericError, ValidationError
from .higherorder import HigherOrderConfig, higher_order_mmd
from .mmdtest import two_sample_test
from .paths import Ensemble, load_csv_dir, load_jsonl, save_jsonl, time_augment
from .sigkernel import first_order_gram, save_gram_field, GramField

# ---------------------------------------------------------------------------
# Canonical JSON with fixed float formatting (17 significant digits)
# ---------------------------------------------------------------------------


def _json_canonical(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_json_canonical(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(
            json.dumps(str(k)) + ":" + _json_canonical(v) for k, v in obj.items()
        ) + "}"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj) -> None:
    _atomic_write_text(path, _json_canonical(obj) + "\n")


# ---------------------------------------------------------------------------
# Input loading
# ---------------------------------------------------------------------------


def _load_dataset(path: str, augment_scale: float | None) -> Ensemble:
    if not os.path.exists(path):
        raise ValidationError(f"dataset not found: {path}")
    ens = load_csv_dir(path) if os.path.isdir(path) else load_jsonl(path)
    if augment_scale is not None:
        ens = time_augment(ens, augment_scale)
    return ens


def _parse_grid(text: str) -> np.ndarray:
    if text.startswith("linspace:"):
        a, b, num = text[len("linspace:"):].split(",")
        return np.linspace(float(a), float(b), int(num))
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ValidationError(f"bad grid spec {text!r}") from exc


def _parse_adjacency(text: str) -> np.ndarray:
    edges = []
    hi = -1
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            a, b = (int(v) for v in part.split("-"))
        except ValueError as exc:
            raise ValidationError(f"bad adjacency spec {text!r}") from exc
        edges.append((a, b))
        hi = max(hi, a, b)
    if hi < 0:
        raise ValidationError("adjacency spec has no edges")
    A = np.zeros((hi + 1, hi + 1), dtype=np.int64)
    for a, b in edges:
        A[a, b] = A[b, a] = 1
    return A


def _load_bags(path: str, augment_scale: float | None) -> list[dr.Bag]:
    if not os.path.exists(path):
        raise ValidationError(f"bag manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        entries = [(str(e["path"]), float(e["label"])) for e in manifest]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed bag manifest {path}: {exc}") from exc
    bags = []
    for rel, label in entries:
        full = rel if os.path.isabs(rel) else os.path.join(base, rel)
        bags.append(dr.Bag(_load_dataset(full, augment_scale), label))
    return bags


def _merged(args: argparse.Namespace, key: str, default=None):
    """Flag value if given, else config-file value, else default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    cfg = getattr(args, "_config_data", {})
    if key in cfg:
        return cfg[key]
    return default


def _require(args, key):
    val = _merged(args, key)
    if val is None:
        raise ValidationError(f"missing required option --{key}")
    return val


def _ho_config(args) -> HigherOrderConfig:
    return HigherOrderConfig(
        order=int(_merged(args, "order", 1)),
        lam=float(_merged(args, "lam", 1e-3)),
        refinement=int(_merged(args, "refinement", 2)),
        lift_time_scale=float(_merged(args, "lift-time-scale", 0.0)),
    )


def _augment_scale(args) -> float | None:
    v = _merged(args, "time-augment")
    return None if v is None else float(v)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_gen(args) -> None:
    kind = _require(args, "kind")
    m = int(_require(args, "m"))
    seed = int(_merged(args, "seed", 0))
    out = _require(args, "out")
    grid_text = _merged(args, "grid")
    grid = tuple(_parse_grid(grid_text)) if grid_text is not None else None
    params: dict = {}
    for key in ("n", "h", "d", "steps", "stiffness", "force-std", "dt", "init-box"):
        v = _merged(args, key)
        if v is not None:
            params[key.replace("-", "_")] = float(v) if key != "d" and key != "steps" else int(v)
    adjacency_text = _merged(args, "adjacency")
    if adjacency_text is not None:
        params["adjacency"] = _parse_adjacency(str(adjacency_text))
    kind_map = {
        "fig3-left": "fig3_left",
        "fig3-right": "fig3_right",
        "brownian": "brownian",
        "fbm": "fbm",
        "spring": "spring_system",
    }
    if kind not in kind_map:
        raise ValidationError(f"unknown generator kind {kind!r}")
    spec = datagen.GenSpec(kind=kind_map[kind], m=m, seed=seed, grid=grid, params=params)
    result = datagen.generate(spec)
    if isinstance(result, Ensemble):
        tmp_holder = []
        save_jsonl(result, _stage(out, tmp_holder))
        _commit(out, tmp_holder)
    else:
        os.makedirs(out, exist_ok=True)
        for b, ens in enumerate(result):
            target = os.path.join(out, f"body_{b}.jsonl")
            tmp_holder = []
            save_jsonl(ens, _stage(target, tmp_holder))
            _commit(target, tmp_holder)


def _stage(target: str, holder: list) -> str:
    d = os.path.dirname(os.path.abspath(target))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    os.close(fd)
    holder.append(tmp)
    return tmp


def _commit(target: str, holder: list) -> None:
    os.replace(holder[0], target)


def _cmd_gram(args) -> None:
    scale = _augment_scale(args)
    X = _load_dataset(_require(args, "x"), scale)
    y_path = _merged(args, "y")
    Y = _load_dataset(y_path, scale) if y_path is not None else X
    full = bool(_merged(args, "full", False))
    refinement = int(_merged(args, "refinement", 2))
    out = _require(args, "out")
    fmt = str(_merged(args, "format", "bin"))
    if full:
        g = first_order_gram(X, Y, full=True, refinement=refinement)
    else:
        term = first_order_gram(X, Y, full=False, refinement=refinement)
        g = GramField(term[:, :, None, None])
    holder: list = []
    save_gram_field(g, _stage(out, holder), fmt=fmt)
    _commit(out, holder)


def _cmd_mmd(args) -> None:
    scale = _augment_scale(args)
    X = _load_dataset(_require(args, "x"), scale)
    Y = _load_dataset(_require(args, "y"), scale)
    cfg = _ho_config(args)
    variant = str(_merged(args, "variant", "unbiased"))
    est = higher_order_mmd(X, Y, cfg, variant=variant)
    _write_json(
        _require(args, "out"),
        {"order": est.order, "value_squared": est.value_squared, "variant": est.variant},
    )


def _cmd_test2(args) -> None:
    scale = _augment_scale(args)
    X = _load_dataset(_require(args, "x"), scale)
    Y = _load_dataset(_require(args, "y"), scale)
    cfg = _ho_config(args)
    report = two_sample_test(
        X,
        Y,
        cfg,
        level=float(_merged(args, "level", 0.05)),
        permutations=int(_merged(args, "permutations", 199)),
        seed=int(_merged(args, "seed", 0)),
    )
    _write_json(_require(args, "out"), report.to_dict())
    null_csv = _merged(args, "null-csv")
    if null_csv is not None:
        lines = ["null_mmd_squared"] + [format(v, ".17g") for v in report.null_samples]
        _atomic_write_text(null_csv, "\n".join(lines) + "\n")


def _cmd_ci(args) -> None:
    scale = _augment_scale(args)
    X = _load_dataset(_require(args, "x"), scale)
    Y = _load_dataset(_require(args, "y"), scale)
    z_path = _merged(args, "z")
    Z = _load_dataset(z_path, scale) if z_path is not None else None
    mode = str(_merged(args, "mode", "permutation"))
    alpha = _merged(args, "alpha")
    stat = ci_test(
        X,
        Y,
        Z,
        epsilon=float(_merged(args, "epsilon", 1e-3)),
        permutations=int(_merged(args, "permutations", 199)),
        seed=int(_merged(args, "seed", 0)),
        mode=mode,
        alpha=None if alpha is None else float(alpha),
        refinement=int(_merged(args, "refinement", 2)),
    )
    _write_json(_require(args, "out"), stat.to_dict())


def _cmd_kpc(args) -> None:
    scale = _augment_scale(args)
    var_paths = _merged(args, "vars")
    if not var_paths:
        raise ValidationError("kpc requires --vars with at least one dataset")
    ensembles = [_load_dataset(p, scale) for p in var_paths]
    graph = kpc_skeleton(
        ensembles,
        epsilon=float(_merged(args, "epsilon", 1e-3)),
        alpha=float(_require(args, "alpha")),
        max_cond_size=int(_merged(args, "max-cond-size", 1)),
        seed=int(_merged(args, "seed", 0)),
        marginal_level0=not bool(_merged(args, "no-level0", False)),
        refinement=int(_merged(args, "refinement", 2)),
    )
    _write_json(_require(args, "out"), graph.to_dict())
    edges_csv = _merged(args, "edges-csv")
    if edges_csv is not None:
        _atomic_write_text(edges_csv, graph.to_edge_csv())


def _parse_float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v != ""]


def _cmd_dr_fit(args) -> None:
    scale = _augment_scale(args)
    bags = _load_bags(_require(args, "bags"), scale)
    seed = int(_merged(args, "seed", 0))
    lam = float(_merged(args, "lam", 1e-3))
    refinement = int(_merged(args, "refinement", 2))
    lift = float(_merged(args, "lift-time-scale", 0.0))
    cv_orders = _merged(args, "cv-orders")
    if cv_orders is not None:
        result = dr.cv_grid_search(
            bags,
            orders=[int(v) for v in str(cv_orders).split(",")],
            sigmas=_parse_float_list(_require(args, "cv-sigmas")),
            ridges=_parse_float_list(_require(args, "cv-ridges")),
            folds=int(_merged(args, "cv-folds", 5)),
            seed=seed,
            lam=lam,
            refinement=refinement,
            lift_time_scale=lift,
        )
        order, sigma, ridge = result.order, result.sigma, result.ridge
        cv_dict = result.to_dict()
    else:
        order = int(_merged(args, "order", 1))
        sigma = float(_require(args, "sigma"))
        ridge = float(_require(args, "ridge"))
        cv_dict = None
    cfg = HigherOrderConfig(order=order, lam=lam, refinement=refinement, lift_time_scale=lift)
    model = dr.fit_krr(bags, cfg, sigma=sigma, ridge=ridge)
    payload = model.to_dict()
    payload["lam"] = lam
    payload["refinement"] = refinement
    payload["lift_time_scale"] = lift
    if cv_dict is not None:
        payload["cv"] = cv_dict
    _write_json(_require(args, "out"), payload)


def _cmd_dr_predict(args) -> None:
    scale = _augment_scale(args)
    model_path = _require(args, "model")
    if not os.path.exists(model_path):
        raise ValidationError(f"model not found: {model_path}")
    with open(model_path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    model = dr.DrModel.from_dict(payload)
    cfg = HigherOrderConfig(
        order=model.order,
        lam=float(payload.get("lam", 1e-3)),
        refinement=int(payload.get("refinement", 2)),
        lift_time_scale=float(payload.get("lift_time_scale", 0.0)),
    )
    train_bags = _load_bags(_require(args, "train-bags"), scale)
    new_paths = _merged(args, "new")
    if not new_paths:
        raise ValidationError("dr-predict requires --new with at least one dataset")
    rows = ["dataset,prediction"]
    for p in new_paths:
        pred = dr.predict(model, train_bags, _load_dataset(p, scale), cfg)
        rows.append(f"{os.path.basename(p)},{format(pred, '.17g')}")
    _atomic_write_text(_require(args, "out"), "\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file; flags override its keys")
    p.add_argument("--threads", type=int, help="cap worker threads")
    p.add_argument("--time-augment", type=float, dest="time_augment",
                   help="prepend scale*t as a coordinate to every loaded path")
    p.add_argument("--out", help="output artifact path")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sigmmd", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_common(g)
    g.add_argument("--kind", choices=["fig3-left", "fig3-right", "brownian", "fbm", "spring"])
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=float, help="fig3-left branch parameter")
    g.add_argument("--h", type=float, help="fbm Hurst exponent")
    g.add_argument("--d", type=int, help="state dimension")
    g.add_argument("--grid", help="comma-separated times or linspace:a,b,num")
    g.add_argument("--steps", type=int, help="spring integration steps")
    g.add_argument("--adjacency", help="spring edges, e.g. 0-1,1-2")
    g.set_defaults(func=_cmd_gen)

    g = sub.add_parser("gram", help="cache a signature Gram field")
    _add_common(g)
    g.add_argument("--x")
    g.add_argument("--y")
    g.add_argument("--full", action="store_const", const=True, default=None)
    g.add_argument("--refinement", type=int)
    g.add_argument("--format", choices=["bin", "csv"])
    g.set_defaults(func=_cmd_gram)

    g = sub.add_parser("mmd", help="higher-order MMD estimate between two datasets")
    _add_common(g)
    g.add_argument("--x")
    g.add_argument("--y")
    g.add_argument("--order", type=int)
    g.add_argument("--lam", type=float)
    g.add_argument("--refinement", type=int)
    g.add_argument("--lift-time-scale", type=float, dest="lift_time_scale")
    g.add_argument("--variant", choices=["biased", "unbiased"])
    g.set_defaults(func=_cmd_mmd)

    g = sub.add_parser("test2", help="permutation two-sample test")
    _add_common(g)
    g.add_argument("--x")
    g.add_argument("--y")
    g.add_argument("--order", type=int)
    g.add_argument("--lam", type=float)
    g.add_argument("--refinement", type=int)
    g.add_argument("--lift-time-scale", type=float, dest="lift_time_scale")
    g.add_argument("--level", type=float)
    g.add_argument("--permutations", type=int)
    g.add_argument("--null-csv", dest="null_csv", help="dump null samples for plotting")
    g.set_defaults(func=_cmd_test2)

    g = sub.add_parser("ci", help="conditional-independence test")
    _add_common(g)
    g.add_argument("--x")
    g.add_argument("--y")
    g.add_argument("--z")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--permutations", type=int)
    g.add_argument("--mode", choices=["permutation", "threshold"])
    g.add_argument("--alpha", type=float)
    g.add_argument("--refinement", type=int)
    g.set_defaults(func=_cmd_ci)

    g = sub.add_parser("kpc", help="kPC skeleton over several process datasets")
    _add_common(g)
    g.add_argument("--vars", nargs="+", help="one dataset per observed process")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--max-cond-size", type=int, dest="max_cond_size")
    g.add_argument("--no-level0", action="store_const", const=True, default=None,
                   dest="no_level0", help="skip the marginal-independence pass")
    g.add_argument("--refinement", type=int)
    g.add_argument("--edges-csv", dest="edges_csv")
    g.set_defaults(func=_cmd_kpc)

    g = sub.add_parser("dr-fit", help="fit distribution regression over bags")
    _add_common(g)
    g.add_argument("--bags", help='JSON manifest [{"path": ..., "label": ...}, ...]')
    g.add_argument("--order", type=int)
    g.add_argument("--lam", type=float)
    g.add_argument("--refinement", type=int)
    g.add_argument("--lift-time-scale", type=float, dest="lift_time_scale")
    g.add_argument("--sigma", type=float)
    g.add_argument("--ridge", type=float)
    g.add_argument("--cv-orders", dest="cv_orders")
    g.add_argument("--cv-sigmas", dest="cv_sigmas")
    g.add_argument("--cv-ridges", dest="cv_ridges")
    g.add_argument("--cv-folds", type=int, dest="cv_folds")
    g.set_defaults(func=_cmd_dr_fit)

    g = sub.add_parser("dr-predict", help="predict labels for new bags")
    _add_common(g)
    g.add_argument("--model")
    g.add_argument("--train-bags", dest="train_bags")
    g.add_argument("--new", nargs="+", help="datasets to score")
    g.set_defaults(func=_cmd_dr_predict)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        config_path = getattr(args, "config", None)
        if config_path is not None:
            if not os.path.exists(config_path):
                raise ValidationError(f"config file not found: {config_path}")
            with open(config_path, "r", encoding="utf-8") as fh:
                try:
                    data = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"malformed config {config_path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ValidationError("config must be a flat JSON object")
            args._config_data = data
        else:
            args._config_data = {}
        threads = _merged(args, "threads")
        if threads is not None:
            import numba

            numba.set_num_threads(max(1, int(threads)))
        args.func(args)
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
