"""Command-line entry point.

Subcommands: roundtrip, eval-components, train, search, compare, bench.
Every run resolves its configuration from built-in defaults, then an
optional JSON config file (--config), then explicit flags, and echoes the
resolved document to <out>/config.json.  All artifacts except timing.json
and bench.json are bit-reproducible for a fixed config.

Exit codes: 0 success, 1 check failure, 2 usage/config error.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import dct, kernels
from .attention import (
    FrequencyAssignment,
    Gap,
    MultiSpectral,
    attention_backward,
    attention_forward,
    apply_attention,
    init_attention_params,
)
from .harness import (
    Hyper,
    ModelConfig,
    SyntheticSpec,
    compare_learnable,
    evaluate_grid,
    gap_reference_score,
    gen_synthetic,
    pretrain_base,
    sweep_k,
    train,
    write_history_csv,
    write_json,
    write_table_csv,
)
from .selection import (
    FrequencyGrid,
    lf_order,
    load_scores_csv,
    save_scores_csv,
    select_components,
)

OUT_ROOT_ENV = "MSCA_OUT_ROOT"


def _out_dir(resolved, command):
    out = resolved.get("out")
    if out is None:
        root = os.environ.get(OUT_ROOT_ENV, "runs")
        out = os.path.join(root, command)
    os.makedirs(out, exist_ok=True)
    return out


def _resolve(defaults, args, keys):
    resolved = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults) - {"out"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(file_cfg)
    for key in keys:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            resolved[key] = val
    return resolved


def _echo_config(out, resolved):
    write_json(os.path.join(out, "config.json"), resolved)


def _parse_grid(text):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise ValueError(f"grid must look like '4x4', got {text!r}")


def _parse_components(text):
    comps = []
    for pair in text.split(";"):
        u, v = pair.split(",")
        comps.append((int(u), int(v)))
    return tuple(comps)


def _parse_int_list(text):
    return [int(t) for t in str(text).split(",")]


_DATA_KEYS = ("image-size", "classes", "samples-per-class", "noise-sigma", "data-seed")

_DATA_DEFAULTS = {
    "image-size": 16,
    "classes": 4,
    "samples-per-class": 50,
    "noise-sigma": 0.3,
    "data-seed": 7,
}


def _add_data_flags(p):
    p.add_argument("--image-size", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--samples-per-class", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--data-seed", type=int)


def _dataset(resolved):
    spec = SyntheticSpec(
        height=resolved["image-size"],
        width=resolved["image-size"],
        num_classes=resolved["classes"],
        samples_per_class=resolved["samples-per-class"],
        noise_sigma=resolved["noise-sigma"],
        seed=resolved["data-seed"],
    )
    return spec, gen_synthetic(spec)


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)


# ---------------------------------------------------------------------------
# roundtrip


def cmd_roundtrip(args):
    defaults = {"height": 7, "width": 7, "trials": 100, "tolerance": 1e-9, "seed": 0}
    resolved = _resolve(defaults, args, ["height", "width", "trials", "tolerance", "seed"])
    H, W = resolved["height"], resolved["width"]
    trials, tol = resolved["trials"], resolved["tolerance"]
    if H < 1 or W < 1:
        raise ValueError("height and width must be >= 1")
    rng = np.random.default_rng(resolved["seed"])
    checks = []

    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal((H, W))
        back = dct.idct2(dct.dct2(x), dct.Normalization.ORTHONORMAL)
        worst = max(worst, float(np.abs(back - x).max()))
    checks.append(("orthonormal_roundtrip", worst, worst <= tol))

    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal((H, W))
        f00 = dct.dct2(x)[0, 0]
        total = x.sum()
        scaled_mean = x.mean() * H * W
        denom = max(1.0, abs(total))
        worst = max(
            worst,
            abs(f00 - total) / denom,
            abs(f00 - scaled_mean) / denom,
        )
    checks.append(("lowest_component_equals_sum", worst, worst <= tol))

    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal((H, W))
        diff = np.abs(dct.dct2(x) - dct.dct2(x, naive=True)).max()
        worst = max(worst, float(diff))
    checks.append(("separable_matches_naive", worst, worst <= tol))

    ok = True
    for name, worst, passed in checks:
        print(f"{name}: worst={worst:.3e} tol={tol:.1e} {'PASS' if passed else 'FAIL'}")
        ok = ok and passed
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# eval-components


def cmd_eval_components(args):
    defaults = {
        "grid": "4x4",
        "budget": 5,
        "base-epochs": 30,
        "finetune-lr": 0.02,
        "epochs": 30,
        "lr": 0.05,
        "momentum": 0.9,
        "batch": 32,
        "seed": 0,
        "reduction": 4,
        **_DATA_DEFAULTS,
        "out": None,
    }
    keys = [k for k in defaults if k != "out"] + ["out"]
    resolved = _resolve(defaults, args, keys)
    t0 = time.perf_counter()
    gh, gw = _parse_grid(resolved["grid"])
    grid = FrequencyGrid(gh, gw)
    spec, data = _dataset(resolved)
    hyper = Hyper(
        lr=resolved["lr"],
        momentum=resolved["momentum"],
        epochs=resolved["base-epochs"],
        batch=resolved["batch"],
        seed=resolved["seed"],
    )
    cfg = ModelConfig(
        strategy="none",
        num_classes=spec.num_classes,
        reduction=resolved["reduction"],
        base_grid=(gh, gw),
    )
    base = pretrain_base(data, hyper, cfg)
    scores = evaluate_grid(base, grid, data, resolved["budget"], resolved["finetune-lr"])
    gap_score = gap_reference_score(
        base, data, resolved["budget"], resolved["finetune-lr"]
    )

    out = _out_dir(resolved, "eval-components")
    _echo_config(out, resolved)
    save_scores_csv(os.path.join(out, "scores.csv"), scores)
    write_json(
        os.path.join(out, "result.json"),
        {
            "schema_version": 1,
            "grid": [gh, gw],
            "budget": resolved["budget"],
            "base_val_acc": base.record.final_val_acc,
            "gap_finetune_acc": gap_score,
            "scores": {
                f"{s.component[0]},{s.component[1]}": s.score for s in scores
            },
        },
    )
    write_json(os.path.join(out, "timing.json"), {"seconds": time.perf_counter() - t0})
    print(f"wrote {len(scores)} component scores to {out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _train_defaults():
    return {
        "strategy": "ms",
        "criterion": "lf",
        "k": 2,
        "components": None,
        "scores": None,
        "learnable-init": "dct",
        "learnable-trainable": True,
        "epochs": 30,
        "lr": 0.05,
        "momentum": 0.9,
        "batch": 32,
        "seed": 0,
        "reduction": 4,
        "base-grid": "4x4",
        **_DATA_DEFAULTS,
        "out": None,
    }


def _model_config(resolved, spec):
    gh, gw = _parse_grid(resolved["base-grid"])
    grid = FrequencyGrid(gh, gw)
    strategy = resolved["strategy"]
    components = None
    if strategy in ("ms", "learnable"):
        if resolved.get("components"):
            components = (
                _parse_components(resolved["components"])
                if isinstance(resolved["components"], str)
                else tuple(tuple(c) for c in resolved["components"])
            )
        else:
            scores = None
            if resolved["criterion"] == "ts":
                if not resolved.get("scores"):
                    raise ValueError("criterion 'ts' needs --scores CSV")
                scores = load_scores_csv(resolved["scores"])
            components = select_components(
                resolved["criterion"], resolved["k"], grid, scores
            )
    return ModelConfig(
        strategy=strategy,
        components=components,
        num_classes=spec.num_classes,
        reduction=resolved["reduction"],
        base_grid=(gh, gw),
        learnable_init=resolved["learnable-init"],
        learnable_trainable=resolved["learnable-trainable"],
    )


def _write_run(out, resolved, record):
    _echo_config(out, resolved)
    write_history_csv(os.path.join(out, "history.csv"), record)
    write_json(os.path.join(out, "result.json"), record.to_json())
    write_json(os.path.join(out, "timing.json"), {"seconds": record.wall_clock})


def cmd_train(args):
    resolved = _resolve(_train_defaults(), args, list(_train_defaults()))
    spec, data = _dataset(resolved)
    cfg = _model_config(resolved, spec)
    hyper = Hyper(
        lr=resolved["lr"],
        momentum=resolved["momentum"],
        epochs=resolved["epochs"],
        batch=resolved["batch"],
        seed=resolved["seed"],
    )
    record = train(cfg, data, hyper)
    out = _out_dir(resolved, "train")
    _write_run(out, resolved, record)
    print(f"final val acc {record.final_val_acc:.4f} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# search


def cmd_search(args):
    defaults = {
        "parts": 4,
        "temperature": 1.0,
        "alpha-lr-mult": 10.0,
        "epochs": 30,
        "lr": 0.05,
        "momentum": 0.9,
        "batch": 32,
        "seed": 0,
        "reduction": 4,
        "base-grid": "4x4",
        **_DATA_DEFAULTS,
        "out": None,
    }
    resolved = _resolve(defaults, args, list(defaults))
    spec, data = _dataset(resolved)
    gh, gw = _parse_grid(resolved["base-grid"])
    cfg = ModelConfig(
        strategy="nas",
        num_classes=spec.num_classes,
        reduction=resolved["reduction"],
        base_grid=(gh, gw),
        nas_parts=resolved["parts"],
        nas_temperature=resolved["temperature"],
        nas_lr_mult=resolved["alpha-lr-mult"],
    )
    hyper = Hyper(
        lr=resolved["lr"],
        momentum=resolved["momentum"],
        epochs=resolved["epochs"],
        batch=resolved["batch"],
        seed=resolved["seed"],
    )
    record = train(cfg, data, hyper)
    out = _out_dir(resolved, "search")
    _write_run(out, resolved, record)
    write_json(os.path.join(out, "assignment.json"), record.derived_assignment)
    print(f"derived assignment written -> {out}")
    return 0


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args):
    defaults = {
        "mode": "k",
        "criterion": "lf",
        "ks": "1,2,4,8,16,32",
        "seeds": "0,1,2,3,4",
        "scores": None,
        "modes": "FR,LR,LD,FD",
        "n-components": 4,
        "epochs": 30,
        "lr": 0.05,
        "momentum": 0.9,
        "batch": 32,
        "seed": 0,
        "reduction": 4,
        "base-grid": "4x4",
        **_DATA_DEFAULTS,
        "out": None,
    }
    resolved = _resolve(defaults, args, list(defaults))
    spec, data = _dataset(resolved)
    gh, gw = _parse_grid(resolved["base-grid"])
    cfg = ModelConfig(
        strategy="gap",
        num_classes=spec.num_classes,
        reduction=resolved["reduction"],
        base_grid=(gh, gw),
    )
    hyper = Hyper(
        lr=resolved["lr"],
        momentum=resolved["momentum"],
        epochs=resolved["epochs"],
        batch=resolved["batch"],
        seed=resolved["seed"],
    )
    seeds = _parse_int_list(resolved["seeds"])
    t0 = time.perf_counter()
    if resolved["mode"] == "k":
        scores = None
        if resolved["criterion"] == "ts":
            if not resolved.get("scores"):
                raise ValueError("criterion 'ts' needs --scores CSV")
            scores = load_scores_csv(resolved["scores"])
        rows = sweep_k(
            resolved["criterion"],
            _parse_int_list(resolved["ks"]),
            data,
            seeds,
            cfg,
            hyper,
            scores,
        )
    elif resolved["mode"] == "learnable":
        modes = str(resolved["modes"]).split(",")
        rows = compare_learnable(
            modes, data, seeds, cfg, hyper, resolved["n-components"]
        )
    else:
        raise ValueError(f"unknown compare mode {resolved['mode']!r}")
    out = _out_dir(resolved, "compare")
    _echo_config(out, resolved)
    write_table_csv(os.path.join(out, "table.csv"), rows)
    write_json(
        os.path.join(out, "result.json"),
        {"schema_version": 1, "mode": resolved["mode"], "rows": rows},
    )
    write_json(os.path.join(out, "timing.json"), {"seconds": time.perf_counter() - t0})
    for row in rows:
        print(row)
    return 0


# ---------------------------------------------------------------------------
# bench


def _time_call(fn, repeats):
    fn()  # warm-up (jit compilation, caches)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def cmd_bench(args):
    defaults = {"repeats": 20, "seed": 0, "out": None}
    resolved = _resolve(defaults, args, list(defaults))
    rng = np.random.default_rng(resolved["seed"])
    repeats = resolved["repeats"]
    rows = []

    for n in (7, 16):
        x = rng.standard_normal((n, n))
        rows.append(
            {
                "op": f"dct2_{n}x{n}",
                "variant": "separable",
                "usec": 1e6 * _time_call(lambda: dct.dct2(x), repeats),
            }
        )
        rows.append(
            {
                "op": f"dct2_{n}x{n}",
                "variant": "naive",
                "usec": 1e6 * _time_call(lambda: dct.dct2(x, naive=True), repeats),
            }
        )

    C, H, W = 64, 8, 8
    X = rng.standard_normal((C, H, W))
    grad = rng.standard_normal((C, H, W))
    comps = tuple(lf_order(FrequencyGrid(H, W))[:16])
    for name, strategy in (
        ("gap", Gap()),
        ("ms16", MultiSpectral(FrequencyAssignment(C, H, W, comps))),
    ):
        params = init_attention_params(
            C, 16, strategy, np.random.default_rng(0), freq_scale=1.0
        )

        def fwd_bwd():
            att, cache = attention_forward(X, params)
            apply_attention(X, att)
            attention_backward(grad, cache)

        rows.append(
            {
                "op": "attention_fwd_bwd",
                "variant": name,
                "usec": 1e6 * _time_call(fwd_bwd, repeats),
            }
        )

    xb = rng.standard_normal((32, 16, 16, 16))
    wb = rng.standard_normal((32, 16, 3, 3))
    for backend in ("numba", "numpy"):
        try:
            impl = kernels.load_backend(backend)
        except ImportError:
            rows.append({"op": "conv2d_fwd_bwd", "variant": backend, "usec": float("nan")})
            continue

        def conv_fwd_bwd():
            out = impl.conv2d_forward(xb, wb, 2, 1)
            impl.conv2d_backward_x(out, wb, 16, 16, 2, 1)
            impl.conv2d_backward_w(out, xb, 3, 3, 2, 1)

        rows.append(
            {
                "op": "conv2d_fwd_bwd",
                "variant": backend,
                "usec": 1e6 * _time_call(conv_fwd_bwd, repeats),
            }
        )

    out = _out_dir(resolved, "bench")
    _echo_config(out, resolved)
    write_json(
        os.path.join(out, "bench.json"),
        {"active_backend": kernels.active_backend(), "rows": rows},
    )
    write_table_csv(os.path.join(out, "bench.csv"), rows)
    for row in rows:
        print(f"{row['op']:>20s} {row['variant']:>10s} {row['usec']:12.1f} us")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="msca",
        description="multi-spectral channel attention: checks and experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("roundtrip", help="transform self-checks")
    _add_common(p)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--tolerance", type=float)
    p.set_defaults(fn=cmd_roundtrip)

    p = sub.add_parser("eval-components", help="score every frequency individually")
    _add_common(p)
    p.add_argument("--grid")
    p.add_argument("--budget", type=int)
    p.add_argument("--base-epochs", type=int)
    p.add_argument("--finetune-lr", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--reduction", type=int)
    _add_data_flags(p)
    p.set_defaults(fn=cmd_eval_components)

    p = sub.add_parser("train", help="train one model")
    _add_common(p)
    p.add_argument("--strategy", choices=["none", "gap", "ms", "learnable"])
    p.add_argument("--criterion", choices=["lf", "ts"])
    p.add_argument("--k", type=int)
    p.add_argument("--components", help="explicit 'u,v;u,v' list on the base grid")
    p.add_argument("--scores", help="scores CSV for criterion ts")
    p.add_argument("--learnable-init", choices=["random", "dct"])
    p.add_argument(
        "--learnable-trainable", action=argparse.BooleanOptionalAction, default=None
    )
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--reduction", type=int)
    p.add_argument("--base-grid")
    _add_data_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("search", help="search frequency components")
    _add_common(p)
    p.add_argument("--parts", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--alpha-lr-mult", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--reduction", type=int)
    p.add_argument("--base-grid")
    _add_data_flags(p)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("compare", help="component-count sweep or tensor-mode table")
    _add_common(p)
    p.add_argument("--mode", choices=["k", "learnable"])
    p.add_argument("--criterion", choices=["lf", "ts"])
    p.add_argument("--ks")
    p.add_argument("--seeds")
    p.add_argument("--scores")
    p.add_argument("--modes")
    p.add_argument("--n-components", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--reduction", type=int)
    p.add_argument("--base-grid")
    _add_data_flags(p)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("bench", help="time kernels and backends")
    _add_common(p)
    p.add_argument("--repeats", type=int)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
