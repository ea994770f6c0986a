"""Thin command-line client for the caprnn service.

Every subcommand posts to the HTTP API.  With ``--server`` it talks to a
running instance; otherwise it mounts the ASGI app in-process, so the same
request/response contracts apply either way.  Option precedence is
flags > config file > built-in defaults, with the config file holding flat
``key = value`` lines.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx


def read_config(path) -> dict:
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").split("\n"):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SystemExit(f"config line is not 'key = value': {raw!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(text: str, template):
    if isinstance(template, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, list):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if template and isinstance(template[0], int):
            return [int(t) for t in items]
        return items
    return text


def resolve(args, defaults: dict) -> dict:
    """Merge parsed flags over config-file values over defaults."""
    config = read_config(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in config:
            merged[key] = _coerce(config[key], default)
        else:
            merged[key] = default
    return merged


async def _post_in_process(endpoint: str, payload: dict) -> httpx.Response:
    from .service import create_app

    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(transport=transport, base_url="http://caprnn.local",
                                 timeout=None) as client:
        return await client.post(endpoint, json=payload)


def call(args, endpoint: str, payload: dict) -> dict:
    if args.server:
        with httpx.Client(base_url=args.server, timeout=None) as client:
            response = client.post(endpoint, json=payload)
    else:
        response = asyncio.run(_post_in_process(endpoint, payload))
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        print(f"error: {detail}", file=sys.stderr)
        raise SystemExit(1)
    return response.json()


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _strs(text: str) -> list[str]:
    return [t for t in text.split(",") if t.strip()]


def add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--server", help="base URL of a running service; default runs in-process")
    parser.add_argument("--config", help="flat 'key = value' config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caprnn",
                                     description="Inject vs merge caption generators")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = sub.add_parser("synth", help="write a synthetic desk-scale dataset")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int)
    p.add_argument("--vocab-size", type=int, dest="vocab_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--feature-dim", type=int, dest="feature_dim")

    p = sub.add_parser("prep", help="build vocabularies and normalized features")
    add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--thresholds", type=_ints)

    p = sub.add_parser("train", help="train one grid cell (all seeds)")
    add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--arch", choices=["inject", "merge"])
    p.add_argument("--layer", type=int)
    p.add_argument("--min-freq", type=int, dest="min_freq")
    p.add_argument("--seed", type=int, help="single training seed")
    p.add_argument("--seeds", type=_ints, help="comma-separated seeds")
    p.add_argument("--precision", type=int, choices=[32, 64])
    p.add_argument("--epochs", type=int, dest="max_epochs")
    p.add_argument("--batch", type=int, dest="batch_size")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--no-early-stop", dest="early_stopping", action="store_false", default=None)

    p = sub.add_parser("generate", help="beam-decode a split with a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split")
    p.add_argument("--beam", type=int)
    p.add_argument("--max-len", type=int, dest="max_len")

    p = sub.add_parser("evaluate", help="score a hypothesis file")
    add_common(p)
    p.add_argument("--hyp", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split")
    p.add_argument("--min-freq", type=int, dest="min_freq")
    p.add_argument("--out")

    p = sub.add_parser("grid", help="run the full experiment grid")
    add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--archs", type=_strs)
    p.add_argument("--layers", type=_ints)
    p.add_argument("--min-freqs", type=_ints, dest="min_freqs")
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--beam", type=int)
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--precision", type=int, choices=[32, 64])
    p.add_argument("--epochs", type=int, dest="max_epochs")
    p.add_argument("--batch", type=int, dest="batch_size")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--no-early-stop", dest="early_stopping", action="store_false", default=None)

    p = sub.add_parser("report", help="render Table-1-style tables from a grid")
    add_common(p)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("count-params", help="closed-form parameter counts")
    add_common(p)
    p.add_argument("--arch", required=True, choices=["inject", "merge"])
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--vocab", type=int, required=True, dest="vocab_size")
    p.add_argument("--image-dim", type=int, dest="image_dim")

    p = sub.add_parser("caption", help="caption a stored image or raw feature vector")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset")
    p.add_argument("--image-id", dest="image_id")
    p.add_argument("--feature", help="comma-separated feature values")
    p.add_argument("--beam", type=int)
    p.add_argument("--max-len", type=int, dest="max_len")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    if args.command == "synth":
        opts = resolve(args, {"images": 8, "vocab_size": 20, "seed": 0, "feature_dim": 8})
        out = call(args, "/synth", {"out_dir": args.out, **opts})
    elif args.command == "prep":
        opts = resolve(args, {"thresholds": [3, 4, 5]})
        out = call(args, "/prep", {"dataset_dir": args.dataset, "out_dir": args.out, **opts})
    elif args.command == "train":
        opts = resolve(args, {"arch": "merge", "layer": 256, "min_freq": 3,
                              "seeds": [1, 2, 3], "precision": 32, "max_epochs": 100,
                              "batch_size": 50, "learning_rate": 0.001, "early_stopping": True})
        if args.seed is not None:
            opts["seeds"] = [args.seed]
        out = call(args, "/train", {"dataset_dir": args.dataset, "out_dir": args.out, **opts})
    elif args.command == "generate":
        opts = resolve(args, {"split": "test", "beam": 3, "max_len": 20})
        out = call(args, "/generate", {"checkpoint": args.checkpoint,
                                       "dataset_dir": args.dataset,
                                       "out_path": args.out, **opts})
    elif args.command == "evaluate":
        opts = resolve(args, {"split": "test", "min_freq": 3})
        out = call(args, "/evaluate", {"hyp_path": args.hyp, "dataset_dir": args.dataset,
                                       "out_path": args.out, **opts})
    elif args.command == "grid":
        opts = resolve(args, {"archs": ["merge", "inject"], "layers": [128, 256, 512],
                              "min_freqs": [3, 4, 5], "seeds": [1, 2, 3], "beam": 3,
                              "max_len": 20, "precision": 32, "max_epochs": 100,
                              "batch_size": 50, "learning_rate": 0.001, "early_stopping": True})
        out = call(args, "/grid", {"dataset_dir": args.dataset, "out_dir": args.out, **opts})
    elif args.command == "report":
        out = call(args, "/report", {"grid_dir": args.grid, "out_dir": args.out})
        print(out["text"])
        return 0
    elif args.command == "count-params":
        opts = resolve(args, {"image_dim": 4096})
        out = call(args, "/count-params", {"arch": args.arch, "layer": args.layer,
                                           "vocab_size": args.vocab_size, **opts})
    elif args.command == "caption":
        opts = resolve(args, {"beam": 3, "max_len": 20})
        payload = {"checkpoint": args.checkpoint, "dataset_dir": args.dataset,
                   "image_id": args.image_id, **opts}
        if args.feature:
            payload["feature"] = [float(t) for t in args.feature.split(",")]
        out = call(args, "/caption", payload)
        words = out.get("words")
        print(" ".join(words) if words else " ".join(str(t) for t in out["tokens"]))
        return 0
    else:  # pragma: no cover
        raise SystemExit(f"unknown command {args.command}")

    print(json.dumps(out, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
