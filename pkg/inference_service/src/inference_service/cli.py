"""Serve the stub prediction model: `inference-service --port 8080`."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

import uvicorn

from .app import create_app
from .rules import RuleSet, RulesError, load_rules_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inference-service", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--rules", help="optional rules JSON; without it every id gets a hash-derived answer")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ruleset = load_rules_file(args.rules) if args.rules else RuleSet()
    except RulesError as exc:
        print(f"inference-service: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(create_app(ruleset), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
