"""Command-line interface.

Every subcommand is a thin client over the HTTP service: by default the
app runs in process (no socket), and ``--server URL`` points the same
commands at a remote instance. File handling stays on the client side;
the service only ever sees JSON.

Exit codes: 0 success, 1 domain error (bad data, bad config, service
400/404), 2 usage error (unknown flags, missing required options).
"""

from __future__ import annotations

import functools
import json
import math
import time
from dataclasses import replace
from pathlib import Path

import click
import httpx

from .config import (
    DEFAULTS,
    RunConfig,
    load_config_file,
    run_config_from_sections,
)
from .errors import WeavecacheError
from .memory import read_frame_lines
from .simulator import (
    CSV_COLUMNS,
    HORIZONS,
    POLICIES,
    StreamConfig,
)

_STREAM_FIELDS = (
    "n_frames",
    "n_events",
    "dim",
    "tokens_per_frame",
    "noise_sigma",
    "n_queries",
    "query_horizon",
    "seed",
)


def _fail_on_domain(fn):
    """Map library errors to exit code 1 with a clean message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except WeavecacheError as e:
            raise click.ClickException(f"{type(e).__name__}: {e}") from e

    return wrapper


def _wire(x: float):
    """JSON-safe form of a float (inf travels as a string)."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


class Client:
    """HTTP client; in-process app unless a server URL is given."""

    def __init__(self, server: str | None):
        if server:
            self._http = httpx.Client(base_url=server.rstrip("/"), timeout=300.0)
        else:
            import warnings

            with warnings.catch_warnings():
                # Some fastapi builds warn on this import (custom warning
                # categories included); none of it is actionable here.
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service.app import create_app

            self._http = TestClient(create_app())

    def _check(self, resp: httpx.Response) -> dict:
        if resp.status_code >= 400:
            try:
                body = resp.json()
                msg = f"{body.get('type', 'error')}: {body.get('error', resp.text)}"
            except Exception:
                msg = f"HTTP {resp.status_code}: {resp.text[:500]}"
            raise click.ClickException(msg)
        return resp.json()

    def get(self, path: str) -> dict:
        return self._check(self._http.get(path))

    def post(self, path: str, payload: dict) -> dict:
        return self._check(self._http.post(path, json=payload))


class Settings:
    """Resolved global flags plus config-file sections."""

    def __init__(self, server: str | None, config: str | None, as_json: bool):
        self.server = server
        self.as_json = as_json
        self.sections: dict[str, dict] = {}
        if config is not None:
            self.sections = load_config_file(config)
        self.run_base: RunConfig = run_config_from_sections(self.sections)

    def client(self) -> Client:
        return Client(self.server)

    def stream_defaults(self) -> dict:
        """[simulator] config keys as generate_stream defaults."""
        raw = self.sections.get("simulator", {})
        unknown = set(raw) - set(_STREAM_FIELDS)
        if unknown:
            raise WeavecacheError(
                f"unknown [simulator] config keys: {sorted(unknown)}"
            )
        merged = {f: getattr(StreamConfig, f) for f in _STREAM_FIELDS}
        merged.update(raw)
        return merged


pass_settings = click.make_pass_decorator(Settings)


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default runs the app in process.")
@click.option("--config", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Config file with [section] key = value lines.")
@click.option("--json", "as_json", is_flag=True, default=False,
              help="Machine-readable JSON output instead of human text.")
@click.version_option(package_name="weavecache")
@click.pass_context
@_fail_on_domain
def cli(ctx: click.Context, server: str | None, config: str | None, as_json: bool):
    """Streaming frame memory with entropy-gated recall."""
    ctx.obj = Settings(server, config, as_json)


def _stream_flags(fn):
    """Shared generation flags; None means fall back to config defaults."""
    opts = [
        click.option("--frames", type=int, default=None, help="Frame count."),
        click.option("--events", type=int, default=None, help="Event count."),
        click.option("--dim", type=int, default=None, help="Embedding dim."),
        click.option("--tokens-per-frame", type=int, default=None,
                     help="Tokens per frame and per query."),
        click.option("--noise-sigma", type=float, default=None,
                     help="Token noise scale."),
        click.option("--queries", type=int, default=None,
                     help="Planted query count."),
        click.option("--horizon", type=click.Choice(HORIZONS), default=None,
                     help="Where planted answers sit relative to the window."),
        click.option("--seed", type=int, default=None, help="Stream seed."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _config_payload(settings: Settings, frames, events, dim, tokens_per_frame,
                    noise_sigma, queries, horizon, seed) -> dict:
    cfg = settings.stream_defaults()
    overrides = {
        "n_frames": frames,
        "n_events": events,
        "dim": dim,
        "tokens_per_frame": tokens_per_frame,
        "noise_sigma": noise_sigma,
        "n_queries": queries,
        "query_horizon": horizon,
        "seed": seed,
    }
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    # Validate client-side so the message carries the violated bound.
    StreamConfig(**cfg)
    return cfg


def _run_flags(fn):
    opts = [
        click.option("--window-c", type=int, default=None,
                     help=f"Local window capacity (default {DEFAULTS.window_c})."),
        click.option("--k", type=int, default=None,
                     help=f"Max recalled frames (default {DEFAULTS.k})."),
        click.option("--m-coarse", type=int, default=None,
                     help=f"Coarse pool size (default {DEFAULTS.m_coarse})."),
        click.option("--delta", type=float, default=None,
                     help=f"Recall threshold in nats; inf never recalls "
                          f"(default {DEFAULTS.delta})."),
        click.option("--tau", type=float, default=None,
                     help=f"Answerer temperature (default {DEFAULTS.tau})."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _run_overrides(settings: Settings, window_c, k, m_coarse, delta, tau) -> dict:
    base = settings.run_base
    updates = {}
    if window_c is not None:
        updates["window_c"] = window_c
    if k is not None:
        updates["k"] = k
    if m_coarse is not None:
        updates["m_coarse"] = m_coarse
    if delta is not None:
        updates["delta"] = delta
    if tau is not None:
        updates["tau"] = tau
    cfg = replace(base, **updates)
    return {
        "window_c": cfg.window_c,
        "k": cfg.k,
        "m_coarse": cfg.m_coarse,
        "delta": _wire(cfg.delta),
        "tau": cfg.tau,
    }


def _sibling_queries_path(stream_path: str) -> Path:
    return Path(stream_path).parent / "queries.jsonl"


def _write_lines(path: str | Path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for line in lines:
            fp.write(line)
            fp.write("\n")


def _source_payload(settings: Settings, stream, queries_file, gen_flags) -> dict:
    """Either uploaded stream files or an in-place generation config."""
    if stream is not None:
        qpath = queries_file or _sibling_queries_path(stream)
        with open(stream, "r", encoding="utf-8") as fp:
            stream_lines = [ln.rstrip("\n") for ln in fp]
        with open(qpath, "r", encoding="utf-8") as fp:
            query_lines = [ln.rstrip("\n") for ln in fp]
        return {"stream_lines": stream_lines, "query_lines": query_lines}
    return {"config": _config_payload(settings, *gen_flags)}


# --- subcommands ------------------------------------------------------------


@cli.command()
@_stream_flags
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Stream JSONL output path.")
@click.option("--out-queries", default=None, type=click.Path(dir_okay=False),
              help="Queries JSONL path (default: queries.jsonl next to --out).")
@pass_settings
@_fail_on_domain
def generate(settings: Settings, frames, events, dim, tokens_per_frame,
             noise_sigma, queries, horizon, seed, out, out_queries):
    """Generate a planted-relevance stream and its query file."""
    cfg = _config_payload(settings, frames, events, dim, tokens_per_frame,
                          noise_sigma, queries, horizon, seed)
    resp = settings.client().post("/simulate/generate", {"config": cfg})
    qpath = out_queries or _sibling_queries_path(out)
    _write_lines(out, resp["stream_lines"])
    _write_lines(qpath, resp["query_lines"])
    if settings.as_json:
        click.echo(json.dumps({
            "stream": str(out),
            "queries": str(qpath),
            "n_frames": resp["n_frames"],
            "n_queries": resp["n_queries"],
        }))
    else:
        click.echo(f"wrote {resp['n_frames']} frames to {out}")
        click.echo(f"wrote {resp['n_queries']} queries to {qpath}")


@cli.command()
@_stream_flags
@click.option("--stream", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Replay this stream file instead of generating one.")
@click.option("--queries-file", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Queries file (default: queries.jsonl next to --stream).")
@click.option("--policy", type=click.Choice(POLICIES), default="gated",
              help="Gate policy for the episode.")
@_run_flags
@click.option("--trace-out", default=None, type=click.Path(dir_okay=False),
              help="Write per-query traces as JSONL.")
@pass_settings
@_fail_on_domain
def simulate(settings: Settings, frames, events, dim, tokens_per_frame,
             noise_sigma, queries, horizon, seed, stream, queries_file,
             policy, window_c, k, m_coarse, delta, tau, trace_out):
    """Run one episode and print its metrics as a CSV row."""
    payload = _source_payload(
        settings, stream, queries_file,
        (frames, events, dim, tokens_per_frame, noise_sigma, queries,
         horizon, seed),
    )
    payload["policy"] = policy
    payload["run"] = _run_overrides(settings, window_c, k, m_coarse, delta, tau)
    payload["include_traces"] = trace_out is not None
    resp = settings.client().post("/simulate/run", payload)
    if trace_out is not None:
        _write_lines(trace_out, [
            json.dumps(t, separators=(",", ":")) for t in resp["traces"]
        ])
    if settings.as_json:
        click.echo(json.dumps(resp["metrics"]))
    else:
        click.echo(resp["csv"], nl=False)


@cli.command()
@_stream_flags
@click.option("--stream", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Replay this stream file instead of generating one.")
@click.option("--queries-file", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Queries file (default: queries.jsonl next to --stream).")
@click.option("--deltas", required=True, metavar="D1,D2,...",
              help="Comma-separated thresholds in nats (inf allowed).")
@_run_flags
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Also write the CSV to this path.")
@pass_settings
@_fail_on_domain
def sweep(settings: Settings, frames, events, dim, tokens_per_frame,
          noise_sigma, queries, horizon, seed, stream, queries_file,
          deltas, window_c, k, m_coarse, delta, tau, out):
    """Sweep the gate threshold over one stream; print the CSV table."""
    parsed: list[float] = []
    for part in deltas.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            parsed.append(float(part))
        except ValueError:
            raise click.UsageError(f"bad delta {part!r} in --deltas")
    if not parsed:
        raise click.UsageError("--deltas needs at least one value")
    deduped: list[float] = []
    for d in parsed:
        if d in deduped:
            click.echo(f"warning: duplicate delta {d} dropped", err=True)
        else:
            deduped.append(d)

    payload = _source_payload(
        settings, stream, queries_file,
        (frames, events, dim, tokens_per_frame, noise_sigma, queries,
         horizon, seed),
    )
    payload["deltas"] = [_wire(d) for d in deduped]
    payload["run"] = _run_overrides(settings, window_c, k, m_coarse, delta, tau)
    resp = settings.client().post("/simulate/sweep", payload)
    if out is not None:
        with open(out, "w", encoding="utf-8") as fp:
            fp.write(resp["csv"])
    if settings.as_json:
        click.echo(json.dumps(resp["rows"]))
    else:
        click.echo(resp["csv"], nl=False)


@cli.command()
@click.option("--in", "in_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Stream JSONL whose frame timestamps to shuffle.")
@click.option("--group", type=int, default=1, show_default=True,
              help="Frames per segment.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Permutation seed; example i uses seed + i.")
@click.option("--count", type=int, default=1, show_default=True,
              help="Examples to emit.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Examples JSONL output path.")
@pass_settings
@_fail_on_domain
def shuffle(settings: Settings, in_path, group, seed, count, out):
    """Build shuffled-segment reconstruction examples from a stream."""
    with open(in_path, "r", encoding="utf-8") as fp:
        timestamps = [t for t, _, _ in read_frame_lines(fp)]
    if not timestamps:
        raise click.ClickException("EmptyInputError: stream file has no frames")
    resp = settings.client().post("/reorder/shuffle", {
        "timestamps": timestamps,
        "seed": seed,
        "group_size": group,
        "count": count,
    })
    _write_lines(out, [
        json.dumps(ex, separators=(",", ":")) for ex in resp["examples"]
    ])
    if settings.as_json:
        click.echo(json.dumps({"out": str(out), "count": len(resp["examples"])}))
    else:
        click.echo(f"wrote {len(resp['examples'])} examples to {out}")


@cli.command(name="eval-reorder")
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Predictions JSONL: one {\"ranges\": [[s, e], ...]} per line.")
@click.option("--truth", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Examples JSONL produced by shuffle.")
@click.option("--bins", type=int, default=10, show_default=True,
              help="Histogram bin count.")
@pass_settings
@_fail_on_domain
def eval_reorder(settings: Settings, pred, truth, bins):
    """Score predicted time ranges against shuffled-example ground truth."""
    from .reorder import read_examples_jsonl, read_predictions_jsonl

    truths = read_examples_jsonl(truth)
    preds = read_predictions_jsonl(pred)
    if len(preds) != len(truths):
        raise click.ClickException(
            f"ShapeError: {len(preds)} prediction lines for {len(truths)} examples"
        )
    pairs = [
        {
            "predicted": [list(r) for r in p],
            "target": [list(r) for r in t["target_ranges"]],
        }
        for p, t in zip(preds, truths)
    ]
    resp = settings.client().post("/reorder/score", {
        "pairs": pairs, "n_bins": bins,
    })
    if settings.as_json:
        click.echo(json.dumps(resp))
        return
    hist = resp["histogram"]
    click.echo("exact-match histogram:")
    for i, count in enumerate(hist["counts"]):
        lo, hi = hist["edges"][i], hist["edges"][i + 1]
        closer = "]" if i == len(hist["counts"]) - 1 else ")"
        click.echo(f"  [{lo:.2f}, {hi:.2f}{closer}  {count}")
    click.echo(f"mean exact match: {resp['mean_exact_match']:.4f}")
    click.echo(f"mean kendall tau: {resp['mean_kendall_tau']:.4f}")


@cli.command()
@click.option("--frames", type=int, default=2000, show_default=True)
@click.option("--events", type=int, default=8, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True)
@click.option("--tokens-per-frame", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--k", type=int, default=DEFAULTS.k, show_default=True)
@click.option("--m-coarse", type=int, default=DEFAULTS.m_coarse, show_default=True)
@click.option("--repeat", type=int, default=3, show_default=True,
              help="Timing repetitions; best run is reported.")
@pass_settings
@_fail_on_domain
def bench(settings: Settings, frames, events, dim, tokens_per_frame, seed,
          k, m_coarse, repeat):
    """Micro-benchmark the retrieval stages on a generated stream.

    Runs in process by design: timings through a transport would
    measure the transport.
    """
    from .memory import MemoryBuffer
    from .retrieval import QueryRecord, c2f_load, coarse_load, fine_oracle
    from .simulator import generate_stream

    cfg = StreamConfig(
        n_frames=frames, n_events=events, dim=dim,
        tokens_per_frame=tokens_per_frame, n_queries=1,
        query_horizon="current", seed=seed,
    )
    data = generate_stream(cfg)
    buf = MemoryBuffer(window_c=DEFAULTS.window_c, dim=dim)
    for f in data.frames:
        buf.append(f.t, f.tokens, f.label)
    snap = buf.snapshot()
    query = QueryRecord.from_tokens(data.queries[0].tokens)

    stages = (
        ("coarse", lambda: coarse_load(snap, query, m_coarse=m_coarse)),
        ("c2f", lambda: c2f_load(snap, query, m_coarse=m_coarse, k=k)),
        ("fine", lambda: fine_oracle(snap, query, k=k)),
    )
    rows = []
    for name, call in stages:
        best_ms = math.inf
        result = None
        for _ in range(max(1, repeat)):
            t0 = time.perf_counter()
            result = call()
            best_ms = min(best_ms, (time.perf_counter() - t0) * 1e3)
        rows.append({
            "stage": name,
            "sim_ops": result.sim_ops,
            "best_ms": best_ms,
            "top_frame": result.entries[0][0] if result.entries else None,
        })
    if settings.as_json:
        click.echo(json.dumps(rows))
    else:
        click.echo(f"{'stage':<8}{'sim_ops':>12}{'best_ms':>12}  top_frame")
        for r in rows:
            click.echo(
                f"{r['stage']:<8}{r['sim_ops']:>12}{r['best_ms']:>12.3f}  "
                f"{r['top_frame']}"
            )


def main() -> None:
    cli(prog_name="weavecache")


if __name__ == "__main__":
    main()
