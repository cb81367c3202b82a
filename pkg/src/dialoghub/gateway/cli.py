"""Command line: serve the gateway, register systems against a running
gateway, export the event log, analyze an exported log offline, and
build/score crowdsourcing projects."""

from __future__ import annotations

import json
import sys
from decimal import Decimal
from pathlib import Path

import click
import httpx
import yaml

from .. import analytics
from ..crowd import (
    CrowdProject,
    GoldenItem,
    LabeledExample,
    TaskBundle,
    TaskItem,
    WorkerSubmission,
    build_task,
    project_statistics,
    render_statistics_report,
    suggest_payment,
)
from ..errors import DialogHubError, InvalidConfigError, InvalidProjectError
from ..model import Side
from ..store import DialogStore
from .config import GatewayConfig, load_config


def _fail(message: str, code: int = 1) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main() -> None:
    """Dialog-system orchestration gateway."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
def serve(config_path: str | None) -> None:
    """Run the gateway until interrupted."""
    import uvicorn

    from .app import create_app

    try:
        cfg = load_config(config_path) if config_path else GatewayConfig()
    except InvalidConfigError as exc:
        _fail(exc.message)
        return
    app = create_app(cfg)
    try:
        uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
    except OSError as exc:
        _fail(f"cannot bind {cfg.host}:{cfg.port}: {exc}")


@main.command("register-system")
@click.option("--gateway", required=True, help="Base URL of a running gateway.")
@click.option("--name", required=True)
@click.option("--endpoint", required=True, help="The system's connector base URL.")
@click.option("--domain", "domains", multiple=True, required=True, help="Repeatable.")
@click.option("--system-id", default=None)
@click.option("--bearer-token", default=None, help="Token the gateway sends to this system.")
@click.option("--admin-token", default=None, help="Gateway admin bearer token, if configured.")
def register_system(gateway, name, endpoint, domains, system_id, bearer_token, admin_token) -> None:
    """Register a remote dialog system with a running gateway."""
    headers = {"Authorization": f"Bearer {admin_token}"} if admin_token else {}
    payload = {
        "name": name,
        "endpoint": endpoint,
        "domains": list(domains),
        "system_id": system_id,
        "bearer_token": bearer_token,
    }
    try:
        response = httpx.post(f"{gateway.rstrip('/')}/api/admin/systems", json=payload, headers=headers)
    except httpx.HTTPError as exc:
        _fail(f"cannot reach gateway: {exc}")
        return
    if response.status_code != 200:
        _fail(f"gateway refused registration: {response.status_code} {response.text}")
    click.echo(response.json()["system_id"])


@main.command("export-log")
@click.option("--store", "store_dir", type=click.Path(), default=None, help="Local event-log directory.")
@click.option("--gateway", default=None, help="...or a running gateway's base URL.")
@click.option("--admin-token", default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
def export_log(store_dir, gateway, admin_token, out_path) -> None:
    """Write the event log (wire format) to a file."""
    if (store_dir is None) == (gateway is None):
        _fail("pass exactly one of --store or --gateway")
    if store_dir is not None:
        store = DialogStore(store_dir)
        size = store.export_to(out_path)
    else:
        headers = {"Authorization": f"Bearer {admin_token}"} if admin_token else {}
        response = httpx.get(f"{gateway.rstrip('/')}/api/admin/export", headers=headers)
        if response.status_code != 200:
            _fail(f"export failed: {response.status_code} {response.text}")
        Path(out_path).write_bytes(response.content)
        size = len(response.content)
    click.echo(f"wrote {size} bytes to {out_path}")


@main.command()
@click.argument("logfile", type=click.Path(exists=True))
@click.option("--system", "system_id", default=None, help="Limit the report to one system.")
@click.option("--min-turns", default=4, show_default=True, help="Usable-dialog threshold.")
@click.option("--budget", default=None, help="Collection budget for cost-per-usable-dialog.")
@click.option("--ngram-n", default=1, show_default=True, type=click.IntRange(1, 3))
@click.option("--top", default=10, show_default=True, help="N-grams to show per side.")
@click.option("--as-json", "as_json", is_flag=True, help="Emit the report as JSON.")
def analyze(logfile, system_id, min_turns, budget, ngram_n, top, as_json) -> None:
    """Offline dashboard: analyze an exported event log."""
    store = DialogStore.from_log_file(logfile)
    sessions = store.sessions()
    system_ids = sorted(store.known_system_ids()) if system_id is None else [system_id]

    report: dict = {
        "sessions": len(sessions),
        "usable_dialogs": sum(1 for s in sessions if analytics.is_usable(s, min_turns)),
        "min_turns": min_turns,
        "systems": {},
    }
    if budget is not None:
        report["cost"] = analytics.collection_cost(Decimal(budget), store, min_turns).to_dict()
    for sid in system_ids:
        try:
            summary = analytics.system_summary(sid, store)
        except DialogHubError as exc:
            _fail(exc.message)
            return
        entry = summary.to_dict()
        entry["ngrams"] = {
            side.value.lower(): [
                {"ngram": g, "count": c}
                for g, c in analytics.ngram_frequencies(sid, side, ngram_n, 1, store)[:top]
            ]
            for side in (Side.USER, Side.SYSTEM)
        }
        entry["progress"] = [
            {"bucket_start": start.isoformat(), "new_dialogs": count}
            for start, count in analytics.progress_series(sid, "DAY", store)
        ]
        report["systems"][sid] = entry

    if as_json:
        click.echo(json.dumps(report, indent=2))
        return
    click.echo(f"sessions: {report['sessions']} (usable at >={min_turns} turns: {report['usable_dialogs']})")
    if "cost" in report:
        cost = report["cost"]["cost_per_usable"]
        click.echo(f"cost per usable dialog: {cost if cost is not None else 'n/a'}")
    for sid, entry in report["systems"].items():
        click.echo(f"\nsystem {sid}:")
        click.echo(
            f"  dialogs {entry['dialog_count']}, utterances {entry['utterance_count']}, "
            f"likes {entry['likes']}, dislikes {entry['dislikes']}, "
            f"comments {entry['comments']}, corrections {entry['corrections']}"
        )
        for side in ("user", "system"):
            grams = ", ".join(f"{g['ngram']}({g['count']})" for g in entry["ngrams"][side])
            click.echo(f"  top {side} {ngram_n}-grams: {grams or '-'}")
        buckets = entry["progress"]
        if buckets:
            first, last = buckets[0], buckets[-1]
            click.echo(
                f"  collected over {len(buckets)} day(s): "
                f"{first['bucket_start'][:10]} .. {last['bucket_start'][:10]}"
            )


# --- crowd subcommands -----------------------------------------------------------


def load_project(path: str | Path) -> CrowdProject:
    """Read a CrowdProject from YAML (same config family as the gateway)."""
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InvalidProjectError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidProjectError(f"{path}: top level must be a mapping")
    try:
        project = CrowdProject(
            title=raw["title"],
            instructions=raw.get("instructions", ""),
            label_set=tuple(raw["label_set"]),
            items=tuple(TaskItem(str(i["item_id"]), str(i["content"])) for i in raw["items"]),
            examples=tuple(
                LabeledExample(e["item"], e["label"], e["explanation"]) for e in raw.get("examples", [])
            ),
            counterexamples=tuple(
                LabeledExample(e["item"], e["wrong_label"], e["explanation"])
                for e in raw.get("counterexamples", [])
            ),
            golden=tuple(
                GoldenItem(str(g["item_id"]), str(g["content"]), str(g["expected_label"]))
                for g in raw.get("golden", [])
            ),
            duplicate_rate=float(raw.get("duplicate_rate", 0.0)),
            consent_text=raw.get("consent_text"),
            guidance_links=tuple(raw.get("guidance_links", [])),
            estimated_seconds_per_item=int(raw.get("estimated_seconds_per_item", 30)),
            style=raw.get("style", {}) or {},
        )
    except KeyError as exc:
        raise InvalidProjectError(f"{path}: missing key {exc}") from None
    project.validate()
    return project


def load_submissions(path: str | Path) -> list[WorkerSubmission]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [WorkerSubmission.from_dict(entry) for entry in raw]


@main.group()
def crowd() -> None:
    """Annotation-project tooling."""


@crowd.command("build")
@click.argument("project_file", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", type=click.Path(), default=".", show_default=True)
@click.option("--hourly-wage", default="12.00", show_default=True)
def crowd_build(project_file, seed, out_dir, hourly_wage) -> None:
    """Build a task bundle (JSON + self-contained HTML) from a project."""
    try:
        project = load_project(project_file)
        bundle = build_task(project, seed)
    except DialogHubError as exc:
        _fail(exc.message)
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bundle.json").write_text(bundle.to_json() + "\n", encoding="utf-8")
    (out / "bundle.html").write_text(bundle.to_html() + "\n", encoding="utf-8")
    per_task_seconds = project.estimated_seconds_per_item * len(bundle.sequence)
    payment = suggest_payment(per_task_seconds, Decimal(hourly_wage))
    click.echo(f"bundle: {len(bundle.sequence)} presented items -> {out / 'bundle.json'}")
    click.echo(f"suggested payment at {hourly_wage}/hr for ~{per_task_seconds}s: {payment}")


@crowd.command("stats")
@click.argument("project_file", type=click.Path(exists=True))
@click.option("--bundle", "bundle_file", type=click.Path(exists=True), required=True)
@click.option("--submissions", "submissions_file", type=click.Path(exists=True), required=True)
@click.option("--include-flagged", is_flag=True, help="Keep flagged workers in aggregates.")
@click.option("--as-json", "as_json", is_flag=True)
def crowd_stats(project_file, bundle_file, submissions_file, include_flagged, as_json) -> None:
    """Quality statistics for collected submissions."""
    try:
        load_project(project_file)  # validates the project document
        bundle = TaskBundle.from_dict(json.loads(Path(bundle_file).read_text(encoding="utf-8")))
        submissions = load_submissions(submissions_file)
        stats = project_statistics(submissions, bundle, include_flagged=include_flagged)
    except DialogHubError as exc:
        _fail(exc.message)
        return
    if as_json:
        click.echo(json.dumps(stats.to_dict(), indent=2))
    else:
        click.echo(render_statistics_report(stats))


if __name__ == "__main__":
    main()
