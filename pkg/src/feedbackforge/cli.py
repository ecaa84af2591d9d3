"""Command line entry points.

feedbackforge serve            run the HTTP service
feedbackforge migrate          apply pending schema migrations
feedbackforge seed-fixtures    load the deterministic demo dataset
feedbackforge integrity-audit  cross-check stores, print a JSON report
feedbackforge lint-templates   check stored prompt templates
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .persistence import DocumentStore, RelationalStore, run_integrity_audit
from .prompts import PromptTemplate, lint_template
from .service.config import load_config
from .service.seed import seed_fixtures


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None,
                        help="path to a JSON config file")


def _stores(args):
    config = load_config(args.config)
    relational = RelationalStore(config.database_path)
    documents = DocumentStore(config.documents_path)
    return config, relational, documents


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="feedbackforge")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP service")
    _add_common(serve)
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)

    for name, help_text in (
            ("migrate", "apply pending schema migrations"),
            ("seed-fixtures", "load the demo dataset"),
            ("integrity-audit", "cross-check relational, document and file stores"),
            ("lint-templates", "check stored prompt templates")):
        _add_common(sub.add_parser(name, help=help_text))

    args = parser.parse_args(argv)
    config = load_config(args.config)
    logging.basicConfig(
        level=getattr(logging, config.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s %(message)s")

    if args.command == "serve":
        import uvicorn

        from .service.app import create_app

        app = create_app(config)
        uvicorn.run(app, host=args.host or config.host,
                    port=args.port or config.port, log_config=None)
        return 0

    if args.command == "migrate":
        relational = RelationalStore(config.database_path, apply_migrations=False)
        applied = relational.migrate()
        print(json.dumps({"applied": applied}))
        return 0

    if args.command == "seed-fixtures":
        relational = RelationalStore(config.database_path)
        report = seed_fixtures(relational)
        print(json.dumps(report, indent=2))
        return 0

    if args.command == "integrity-audit":
        relational = RelationalStore(config.database_path)
        documents = DocumentStore(config.documents_path)
        report = run_integrity_audit(relational, documents,
                                     file_root=config.files_path)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0 if report["ok"] else 1

    if args.command == "lint-templates":
        relational = RelationalStore(config.database_path)
        problems = {}
        for row in relational.all_template_rows():
            template = PromptTemplate.from_dict(json.loads(row["data"]))
            found = lint_template(template)
            if found:
                problems[template.id] = found
        print(json.dumps({"templates_with_problems": problems}, indent=2))
        return 1 if problems else 0

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
