"""Command line entry points: prepare-base, tune, serve."""

from __future__ import annotations

import argparse
import sys

from .data import DatasetError
from .pretrain import prepare_base
from .training import TuneConfig, tune


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tunebridge")
    sub = parser.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prepare-base", help="pretrain the tiny digit-competent base model")
    prep.add_argument("--out", required=True)
    prep.add_argument("--steps", type=int, default=2000)
    prep.add_argument("--batch", type=int, default=16)
    prep.add_argument("--seed", type=int, default=0)
    prep.add_argument("--embd", type=int, default=96)
    prep.add_argument("--layers", type=int, default=2)
    prep.add_argument("--heads", type=int, default=4)
    prep.add_argument("--positions", type=int, default=256)
    prep.add_argument("--lr", type=float, default=1e-3)

    tune_p = sub.add_parser("tune", help="fine-tune low-rank adapters on a dataset")
    tune_p.add_argument("--base", required=True, help="base checkpoint directory")
    tune_p.add_argument("--dataset", required=True, help="line-json instruction dataset")
    tune_p.add_argument("--out", required=True, help="adapter output directory")
    tune_p.add_argument("--rank", type=int, default=8)
    tune_p.add_argument("--alpha", type=int, default=16)
    tune_p.add_argument("--lr", type=float, default=1e-4)
    tune_p.add_argument("--steps", type=int, default=500)
    tune_p.add_argument("--batch", type=int, default=8)
    tune_p.add_argument("--seed", type=int, default=0)

    serve_p = sub.add_parser("serve", help="serve a tuned adapter over the chat wire contract")
    serve_p.add_argument("--adapter", required=True)
    serve_p.add_argument("--port", type=int, default=8077)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--max-new-tokens", type=int, default=256)

    args = parser.parse_args(argv)

    if args.command == "prepare-base":
        out = prepare_base(
            args.out, steps=args.steps, batch_size=args.batch, seed=args.seed,
            n_embd=args.embd, n_layer=args.layers, n_head=args.heads,
            n_positions=args.positions, lr=args.lr,
        )
        print(f"base checkpoint -> {out}")
        return 0

    if args.command == "tune":
        try:
            config = TuneConfig(
                base_model_id=args.base,
                dataset_path=args.dataset,
                output_dir=args.out,
                lora_rank=args.rank,
                lora_alpha=args.alpha,
                learning_rate=args.lr,
                max_steps=args.steps,
                batch_size=args.batch,
                seed=args.seed,
            )
            out = tune(config)
        except (ValueError, DatasetError, FileNotFoundError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(f"adapter -> {out}")
        return 0

    if args.command == "serve":
        from .server import serve

        try:
            server = serve(
                args.adapter, port=args.port, host=args.host,
                max_new_tokens=args.max_new_tokens,
            )
        except OSError as e:
            print(f"error: cannot bind {args.host}:{args.port} ({e})", file=sys.stderr)
            return 1
        except FileNotFoundError as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(f"serving on http://{args.host}:{server.server_address[1]}")
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
