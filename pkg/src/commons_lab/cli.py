"""Command-line entry point.

Commands run in-process by default. With ``--server URL`` (or the
COMMONS_LAB_SERVER variable) the same requests are posted to a running
service instead. Exit codes: 0 success, 1 configuration or usage error,
2 integrity error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from commons_lab.errors import CommonsLabError, ConfigError, IntegrityError
from commons_lab.harness.config import default_output_root

EXIT_OK, EXIT_CONFIG, EXIT_INTEGRITY = 0, 1, 2
SERVER_VAR = "COMMONS_LAB_SERVER"


class ArgumentError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2, which is reserved for integrity errors
        raise ArgumentError(f"{self.prog}: {message}")


def _env_arg(value: str):
    """A preset name, or a JSON file holding an env mapping."""
    p = Path(value)
    if p.suffix == ".json" or p.exists():
        try:
            data = json.loads(p.read_text())
        except OSError as exc:
            raise ConfigError(f"{value}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{value}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if isinstance(data, dict) and "map_file" in data:
            mp = Path(data.pop("map_file"))
            data["map"] = (mp if mp.is_absolute() else p.parent / mp).read_text()
        return data
    return value


def _out(args, name: str) -> str:
    return str(args.out) if args.out else str(default_output_root() / name)


def build_parser() -> Parser:
    parser = Parser(prog="commons-lab", description="Commons harvest experiments: train, evaluate, analyse.")
    parser.add_argument("--server", default=os.environ.get(SERVER_VAR),
                        help="post requests to this service URL instead of running in-process")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("train", help="train a population over one or more seeds")
    p.add_argument("config", type=Path)
    p.add_argument("--seed", type=int, action="append", help="override the config's seeds (repeatable)")
    p.add_argument("--out", type=Path)
    p.add_argument("--parallel", type=int)

    p = sub.add_parser("eval", help="greedy evaluation of checkpoints or scripted agents")
    p.add_argument("agents", nargs="+", help="checkpoint path or random/greedy/restrained, one per slot")
    p.add_argument("--env", default="default")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("replay", help="re-simulate an episode log and write PPM frames")
    p.add_argument("log", type=Path)
    p.add_argument("--upscale", type=int, default=1)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("dream", help="decode an open-loop imagined rollout")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--delta-t", type=int, default=15)
    p.add_argument("--log", type=Path, help="episode log to take the context from")
    p.add_argument("--env", help="environment for a fresh context when no log is given")
    p.add_argument("--context", type=int, default=5, help="context length in states")
    p.add_argument("--agent", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("project", help="2-D projection of latent states coloured by value")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--env", default="default")
    p.add_argument("--episodes", type=int, default=2)
    p.add_argument("--method", choices=("tsne", "pca"), default="tsne")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--agent", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("baseline", help="random-population efficiency estimate")
    p.add_argument("--env", default="default")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _abs(p) -> str | None:
    return None if p is None else str(Path(p).resolve())


def build_request(args) -> tuple[str, dict]:
    cmd = args.command
    if cmd == "train":
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"{args.config}: {exc.strerror}") from None
        try:
            config = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(config, dict):
            raise ConfigError(f"{args.config}: config root must be a JSON object")
        out = args.out or config.get("output_dir") or default_output_root() / config.get("name", args.config.stem)
        return cmd, {"config": config, "base_dir": _abs(args.config.parent), "seeds": args.seed,
                     "out": _abs(out), "parallel": args.parallel}
    if cmd == "eval":
        agents = [a if a in ("random", "greedy", "restrained") else _abs(a) for a in args.agents]
        return cmd, {"agents": agents, "env": _env_arg(args.env), "episodes": args.episodes, "seed": args.seed,
                     "out": _abs(_out(args, "eval"))}
    if cmd == "replay":
        return cmd, {"log": _abs(args.log), "out": _abs(_out(args, f"replay_{args.log.stem}")),
                     "upscale": args.upscale}
    if cmd == "dream":
        return cmd, {"checkpoint": _abs(args.checkpoint), "delta_t": args.delta_t, "out": _abs(_out(args, "dream")),
                     "log": _abs(args.log), "env": _env_arg(args.env) if args.env else None,
                     "context_length": args.context, "seed": args.seed, "agent_index": args.agent}
    if cmd == "project":
        return cmd, {"checkpoint": _abs(args.checkpoint), "env": _env_arg(args.env), "episodes": args.episodes,
                     "out": _abs(_out(args, "project")), "method": args.method, "seed": args.seed,
                     "perplexity": args.perplexity, "iterations": args.iterations, "agent_index": args.agent}
    if cmd == "baseline":
        return cmd, {"env": _env_arg(args.env), "episodes": args.episodes, "seed": args.seed,
                     "out": _abs(args.out)}
    raise ArgumentError(f"unknown command {cmd!r}")


def run_local(cmd: str, payload: dict) -> dict:
    from pydantic import ValidationError

    from commons_lab.service.app import HANDLERS
    model, handler = HANDLERS[cmd]
    try:
        req = model(**payload)
    except ValidationError as exc:
        raise ConfigError(_validation_message(exc)) from None
    return handler(req).result


def _validation_message(exc) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"])
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


class RemoteError(Exception):
    def __init__(self, kind: str, detail: str):
        super().__init__(detail)
        self.kind = kind


def run_remote(server: str, cmd: str, payload: dict) -> dict:
    import httpx

    resp = httpx.post(f"{server.rstrip('/')}/{cmd}", json=payload, timeout=None)
    if resp.status_code == 200:
        return resp.json()["result"]
    body = resp.json()
    if isinstance(body, dict) and "kind" in body:
        raise RemoteError(body["kind"], body["detail"])
    detail = body.get("detail") if isinstance(body, dict) else body
    if isinstance(detail, list):
        detail = "; ".join(f"{'.'.join(str(x) for x in d.get('loc', []))}: {d.get('msg')}" for d in detail)
    raise RemoteError("config", str(detail))


def _print(result: dict) -> None:
    shown = {k: v for k, v in result.items() if k not in ("efficiencies", "config")}
    print(json.dumps(shown, indent=1, default=str))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "serve":
            import uvicorn
            uvicorn.run("commons_lab.service.app:app", host=args.host, port=args.port)
            return EXIT_OK
        cmd, payload = build_request(args)
        result = run_remote(args.server, cmd, payload) if args.server else run_local(cmd, payload)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except RemoteError as exc:
        print(f"{exc.kind} error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY if exc.kind == "integrity" else EXIT_CONFIG
    except (CommonsLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _print(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
