"""Command-line front end for the distillation pipeline and the survey service."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .corpus import (
    Corpus,
    TierSpec,
    filter_samples,
    format_training_record,
    load_corpus,
    save_corpus,
    subsample_tiers,
)
from .demo import make_demo_corpus
from .grid import ExperimentGrid, run_experiment_grid
from .metrics import Embedder, corpus_scores, load_text_map, save_text_map
from .model import (
    DESK_CONFIGS,
    ENCDEC_DEFAULT,
    PAPER_SCALE_CONFIGS,
    DecodeConfig,
    ModelConfig,
    generate_summary,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .stats import analyze_study, convergence_rate, render_study_report
from .survey import ResponseStore, export_responses, flag_low_effort, import_responses
from .teacher import HarvestCache, MockTeacher, RetryPolicy, TeacherClient, harvest
from .tokenizer import SubwordTokenizer, train_bpe


def read_config_document(path: str | Path) -> dict:
    """Parse a config file: a JSON object or KEY=VALUE lines."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("{"):
        return json.loads(text)
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.ClickException(f"config line {lineno}: expected KEY=VALUE, got {line!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def resolve_model_config(name_or_file: str | None, overrides: dict | None = None) -> ModelConfig:
    """Named preset (desk-small, 38m, encdec, ...) or a config document path."""
    presets = {**DESK_CONFIGS, **PAPER_SCALE_CONFIGS, "encdec": ENCDEC_DEFAULT}
    base: dict = {}
    if name_or_file is None:
        base = DESK_CONFIGS["desk-small"].to_dict()
    elif name_or_file in presets:
        base = presets[name_or_file].to_dict()
    elif Path(name_or_file).exists():
        base = {**DESK_CONFIGS["desk-small"].to_dict(), **read_config_document(name_or_file)}
    else:
        raise click.ClickException(
            f"unknown config {name_or_file!r}; presets: {', '.join(sorted(presets))}"
        )
    base.update(overrides or {})
    return ModelConfig(**base)


@click.group()
def main() -> None:
    """Distill a teacher model's code summarization into small local students."""


@main.command("demo-data")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="output directory")
@click.option("--train-size", default=4096, show_default=True)
@click.option("--test-size", default=128, show_default=True)
@click.option("--base-count", default=1024, show_default=True, help="samples flagged as the common tier core")
@click.option("--seed", default=0, show_default=True)
def demo_data(out: Path, train_size: int, test_size: int, base_count: int, seed: int) -> None:
    """Generate the synthetic desk-scale corpus (train + held-out test files)."""
    out.mkdir(parents=True, exist_ok=True)
    train_corpus = make_demo_corpus(train_size, seed=seed, base_count=base_count)
    test_corpus = make_demo_corpus(
        test_size, seed=seed + 1, id_prefix="test", exclude_code={s.code for s in train_corpus}
    )
    save_corpus(train_corpus, out / "train.jsonl")
    save_corpus(test_corpus, out / "test.jsonl")
    click.echo(f"wrote {len(train_corpus)} train and {len(test_corpus)} test samples to {out}")


@main.command()
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--cache", type=click.Path(path_type=Path), required=True, help="harvest cache file")
@click.option("--mock", is_flag=True, help="use the deterministic in-process mock teacher")
@click.option("--endpoint", default=None, help="chat-completion endpoint URL")
@click.option("--model", "model_name", default="gpt-3.5-turbo", show_default=True)
@click.option("--auth-token", default="", envvar="TEACHER_AUTH_TOKEN")
@click.option("--max-parallel", default=4, show_default=True)
def harvest_cmd(data: Path, out: Path, cache: Path, mock: bool, endpoint: str | None,
                model_name: str, auth_token: str, max_parallel: int) -> None:
    """Collect teacher summaries for every sample, with caching and retries."""
    corpus = load_corpus(data)
    if mock:
        client = MockTeacher(max_parallel=max_parallel)
    elif endpoint:
        client = TeacherClient(
            endpoint=endpoint, model=model_name, auth_token=auth_token,
            max_parallel=max_parallel, retry=RetryPolicy(),
        )
    else:
        raise click.ClickException("pass --endpoint for a real teacher or --mock for the bundled one")
    result, report = harvest(corpus, client, HarvestCache(cache))
    save_corpus(result, out)
    click.echo(
        f"harvested {report.fresh} fresh, {report.from_cache} cached, {len(report.failed)} failed "
        f"of {report.total}"
    )
    if report.failed:
        click.echo("failed ids: " + ", ".join(report.failed[:20]))
        sys.exit(1)


main.add_command(harvest_cmd, name="harvest")


@main.command("build-data")
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--sizes", required=True, help="comma-separated ascending tier sizes, e.g. 1000,4000")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--source", type=click.Choice(["reference", "teacher"]), default="teacher", show_default=True)
@click.option("--no-filter", is_flag=True, help="skip the summary validity filter")
def build_data(data: Path, sizes: str, seed: int, out: Path, source: str, no_filter: bool) -> None:
    """Filter invalid summaries and write the nested dataset tiers."""
    corpus = load_corpus(data)
    if not no_filter:
        corpus, drops = filter_samples(corpus, source)
        click.echo(f"filtered: {drops}")
    spec = TierSpec(sizes=[int(s) for s in sizes.split(",")], seed=seed)
    tiers = subsample_tiers(corpus, spec)
    out.mkdir(parents=True, exist_ok=True)
    for size, tier in zip(spec.sizes, tiers):
        path = out / f"tier_{size}.jsonl"
        save_corpus(tier, path)
        click.echo(f"wrote {len(tier)} samples to {path}")


@main.command("train")
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True, help="tier file")
@click.option("--config", "config_name", default="desk-small", show_default=True)
@click.option("--source", type=click.Choice(["reference", "teacher"]), default="teacher", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=None, type=int, help="override config epochs")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="output directory")
def train_cmd(data: Path, config_name: str, source: str, seed: int, epochs: int | None, out: Path) -> None:
    """Fine-tune a decoder-only student on one tier; saves checkpoint + tokenizer."""
    overrides = {"e": epochs} if epochs else {}
    config = resolve_model_config(config_name, overrides)
    if config.kind != "decoder_only":
        raise click.ClickException("train handles decoder_only configs; use grid for encoder_decoder")
    corpus = load_corpus(data)
    records = [format_training_record(s, source) for s in corpus]
    tok = train_bpe((r.text for r in records), config.vocab_size)
    model = init_model(config, seed)
    log = train(model, records, tok, config=config, seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.bin")
    tok.save(out / "tokenizer.txt")
    (out / "train_log.json").write_text(json.dumps(vars(log), indent=2))
    click.echo(f"epoch losses: {[round(x, 4) for x in log.epoch_losses]}")
    click.echo(f"saved checkpoint to {out / 'checkpoint.bin'}")


@main.command("generate")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--tokenizer", "tokenizer_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--code", default=None, help="one method body (otherwise read --data)")
@click.option("--data", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None, help="predictions file for --data")
@click.option("--max-new-tokens", default=32, show_default=True)
def generate_cmd(checkpoint: Path, tokenizer_path: Path, code: str | None, data: Path | None,
                 out: Path | None, max_new_tokens: int) -> None:
    """Generate summaries from a trained checkpoint."""
    model = load_checkpoint(checkpoint)
    tok = SubwordTokenizer.load(tokenizer_path)
    dc = DecodeConfig(max_new_tokens=max_new_tokens, eos_id=tok.eos_id)
    if code is not None:
        click.echo(generate_summary(model, code, tok, dc))
        return
    if data is None:
        raise click.ClickException("pass --code or --data")
    corpus = load_corpus(data)
    preds = {s.id: generate_summary(model, s.code, tok, dc) for s in corpus}
    if out is None:
        for sample_id in sorted(preds):
            click.echo(f"{sample_id}\t{preds[sample_id]}")
    else:
        save_text_map(preds, out)
        click.echo(f"wrote {len(preds)} predictions to {out}")


@main.command("eval")
@click.option("--predictions", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--references", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--embeddings", type=click.Path(exists=True, path_type=Path), default=None,
              help="token embedding file for the similarity score")
@click.option("--hashed-embedder", is_flag=True, help="use the deterministic hashed token table")
def eval_cmd(predictions: Path, references: Path, embeddings: Path | None, hashed_embedder: bool) -> None:
    """Score predictions against references (mean METEOR and similarity, x100)."""
    preds = load_text_map(predictions)
    refs = load_text_map(references)
    emb = None
    if embeddings is not None:
        emb = Embedder.from_token_file(embeddings)
    elif hashed_embedder:
        emb = Embedder.hashed_token_table()
    cell = corpus_scores(preds, refs, emb=emb)
    click.echo(f"pairs: {len(cell.pairs)}")
    click.echo(f"METEOR x100: {cell.meteor_x100:.2f}")
    if cell.use_x100 is not None:
        click.echo(f"similarity x100: {cell.use_x100:.2f}")


@main.command("grid")
@click.option("--train-data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--test-data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--configs", default="desk-small,desk-medium", show_default=True,
              help="comma-separated preset names or config files")
@click.option("--sizes", default="1000,4000", show_default=True)
@click.option("--source", type=click.Choice(["reference", "teacher"]), default="teacher", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--use-mock-teacher", is_flag=True,
              help="fill missing teacher summaries with the deterministic mock")
def grid_cmd(train_data: Path, test_data: Path, configs: str, sizes: str, source: str,
             seed: int, out: Path, use_mock_teacher: bool) -> None:
    """Run the (config x tier) experiment grid and render the score tables."""
    train_corpus = load_corpus(train_data)
    test_corpus = load_corpus(test_data)
    if use_mock_teacher:
        from .teacher import mock_summary

        def fill(corpus: Corpus) -> Corpus:
            out_c = Corpus()
            for s in corpus:
                if s.teacher is None:
                    s = type(s)(id=s.id, code=s.code, reference=s.reference,
                                teacher=mock_summary(s.code), project=s.project, base=s.base)
                out_c.add(s)
            return out_c

        train_corpus, test_corpus = fill(train_corpus), fill(test_corpus)
    spec = TierSpec(sizes=[int(s) for s in sizes.split(",")], seed=seed)
    tiers = dict(zip([_tier_label(n) for n in spec.sizes], subsample_tiers(train_corpus, spec)))
    grid = ExperimentGrid(
        configs={name: resolve_model_config(name) for name in configs.split(",")},
        tiers=tiers,
        test_codes={s.id: s.code for s in test_corpus},
        test_refs={s.id: s.summary(source) or "" for s in test_corpus},
        source=source,
        seed=seed,
        out_dir=out,
        embedder=Embedder.hashed_token_table(),
    )
    report = run_experiment_grid(grid)
    click.echo(report.render_text())
    click.echo(f"report written to {out / 'report.txt'}")


def _tier_label(n: int) -> str:
    if n % 1_000_000 == 0 and n >= 1_000_000:
        return f"{n // 1_000_000}m"
    if n % 1000 == 0 and n >= 1000:
        return f"{n // 1000}k"
    return str(n)


@main.command("stats")
@click.option("--export", "export_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--compare", type=click.Path(exists=True, path_type=Path), default=None,
              help="second study export for the convergence rate")
@click.option("--flag-threshold", default=30.0, show_default=True,
              help="seconds per item under which a session is flagged")
def stats_cmd(export_path: Path, compare: Path | None, flag_threshold: float) -> None:
    """Render the study statistics report from a survey export."""
    records = import_responses(export_path.read_text(encoding="utf-8"))
    if not records:
        raise click.ClickException("export has no responses")
    stats = analyze_study(records)
    click.echo(render_study_report(stats))

    per_session: dict[str, list[float]] = {}
    for rec in records:
        per_session.setdefault(rec["session"], []).append(rec["page1_seconds"] + rec["page2_seconds"])
    flagged = flag_low_effort({k: sum(v) / len(v) for k, v in per_session.items()}, flag_threshold)
    if flagged:
        click.echo(f"low-effort sessions (<{flag_threshold:g}s/item): {', '.join(flagged)}")

    if compare is not None:
        other = analyze_study(import_responses(compare.read_text(encoding="utf-8")))
        shared = set(stats.preferred_by_method) & set(other.preferred_by_method)
        rate = convergence_rate(
            {k: stats.preferred_by_method[k] for k in shared},
            {k: other.preferred_by_method[k] for k in shared},
        )
        click.echo(f"convergence with second study over {len(shared)} methods: {rate:.0%}")


@main.command("serve")
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--store", "store_path", type=click.Path(path_type=Path), required=True)
@click.option("--pair", default="reference,teacher", show_default=True,
              help="the two summary sources to compare")
@click.option("--predictions", multiple=True,
              help="extra source as name=path, e.g. student=preds.jsonl (repeatable)")
@click.option("--items", default=30, show_default=True, help="items per session")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--static-dir", type=click.Path(path_type=Path), default=None,
              help="directory with the built survey UI")
@click.option("--admin-token", default=None)
def serve_cmd(data: Path, store_path: Path, pair: str, predictions: tuple[str, ...], items: int,
              host: str, port: int, static_dir: Path | None, admin_token: str | None) -> None:
    """Run the survey HTTP service."""
    import uvicorn

    from .service import SurveyContent, create_app

    corpus = load_corpus(data)
    summaries: dict[str, dict[str, str]] = {
        "reference": {s.id: s.reference for s in corpus if s.reference},
        "teacher": {s.id: s.teacher for s in corpus if s.teacher},
    }
    for spec_str in predictions:
        if "=" not in spec_str:
            raise click.ClickException(f"--predictions needs name=path, got {spec_str!r}")
        name, path = spec_str.split("=", 1)
        summaries[name] = load_text_map(path)
    a, b = (pair.split(",") + [""])[:2]
    if a not in summaries or b not in summaries:
        raise click.ClickException(f"pair {pair!r} needs sources among {sorted(summaries)}")
    content = SurveyContent(
        methods={s.id: s.code for s in corpus},
        summaries=summaries,
        pair=(a, b),
        items_per_session=items,
        admin_token=admin_token,
    )
    if len(content.pool()) < items:
        raise click.ClickException(
            f"only {len(content.pool())} methods have both {a!r} and {b!r} summaries; need {items}"
        )
    app = create_app(ResponseStore(store_path), content, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


@main.command("survey-export")
@click.option("--store", "store_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), default=None, help="default: stdout")
def survey_export_cmd(store_path: Path, out: Path | None) -> None:
    """Write the line-delimited response export consumed by stats."""
    text = export_responses(ResponseStore(store_path))
    if out is None:
        click.echo(text, nl=False)
    else:
        out.write_text(text, encoding="utf-8")
        click.echo(f"wrote export to {out}")


if __name__ == "__main__":
    main()
