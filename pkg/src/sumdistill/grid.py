"""Experiment grid: train each (config, tier) cell, score it on the held-out set, render the report."""

from __future__ import annotations

import json
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, format_training_record
from .metrics import CellScores, Embedder, corpus_scores, render_score_grid, save_text_map
from .model import (
    DecodeConfig,
    ModelConfig,
    generate_encdec_summary,
    generate_summary,
    init_model,
    save_checkpoint,
    train,
    train_encdec,
)
from .tokenizer import build_word_vocab, train_bpe


class GridError(ValueError):
    """Invalid grid setup."""


@dataclass
class ExperimentGrid:
    """Model configs x dataset tiers, a held-out test set, and one seed."""

    configs: dict[str, ModelConfig]
    tiers: dict[str, Corpus]
    test_codes: dict[str, str]  # id -> code
    test_refs: dict[str, str]  # id -> target summary
    source: str = "teacher"
    seed: int = 0
    out_dir: Path | None = None
    max_new_tokens: int = 32
    embedder: Embedder | None = None

    def __post_init__(self) -> None:
        if not self.configs or not self.tiers:
            raise GridError("grid needs at least one config and one tier")
        if set(self.test_codes) != set(self.test_refs):
            raise GridError("test codes and references must share ids")


@dataclass
class CellResult:
    config_name: str
    tier_label: str
    seconds: float = 0.0
    error: str | None = None
    traceback: str | None = None
    scores: CellScores | None = None
    final_loss: float | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class GridReport:
    tier_labels: list[str]
    config_names: list[str]
    cells: dict[tuple[str, str], CellResult] = field(default_factory=dict)

    def _values(self, pick) -> dict[tuple[str, str], float | None]:
        out = {}
        for key, cell in self.cells.items():
            out[key] = pick(cell) if cell.ok else None
        return out

    def render_meteor(self) -> str:
        return render_score_grid(
            self.tier_labels, self.config_names,
            self._values(lambda c: c.scores.meteor_x100 if c.scores else None),
        )

    def render_use(self) -> str:
        return render_score_grid(
            self.tier_labels, self.config_names,
            self._values(lambda c: c.scores.use_x100 if c.scores else None),
        )

    def render_time(self) -> str:
        return render_score_grid(
            self.tier_labels, self.config_names,
            self._values(lambda c: c.seconds), corner="dataset",
        )

    def render_text(self) -> str:
        parts = ["METEOR x100\n" + self.render_meteor()]
        if any(c.ok and c.scores and c.scores.use_mean is not None for c in self.cells.values()):
            parts.append("similarity x100\n" + self.render_use())
        parts.append("wall-clock seconds\n" + self.render_time())
        failures = [c for c in self.cells.values() if not c.ok]
        if failures:
            lines = [f"  {c.config_name} x {c.tier_label}: {c.error}" for c in failures]
            parts.append("failed cells\n" + "\n".join(lines) + "\n")
        return "\n".join(parts)

    def to_json(self) -> str:
        obj = {
            "tiers": self.tier_labels,
            "configs": self.config_names,
            "cells": [
                {
                    "config": c.config_name,
                    "tier": c.tier_label,
                    "seconds": round(c.seconds, 3),
                    "error": c.error,
                    "meteor_x100": c.scores.meteor_x100 if c.ok and c.scores else None,
                    "use_x100": c.scores.use_x100 if c.ok and c.scores else None,
                    "final_loss": c.final_loss,
                }
                for c in self.cells.values()
            ],
        }
        return json.dumps(obj, indent=2)


def run_cell(grid: ExperimentGrid, config_name: str, tier_label: str) -> CellResult:
    """Train one (config, tier) cell and score it on the held-out set.

    A pure function of (config, tier, seed): rerunning a cell reproduces its
    scores.
    """
    config = grid.configs[config_name]
    tier = grid.tiers[tier_label]
    cell = CellResult(config_name=config_name, tier_label=tier_label)
    start = time.perf_counter()
    try:
        records = [format_training_record(s, grid.source) for s in tier]
        if config.kind == "decoder_only":
            tok = train_bpe((r.text for r in records), config.vocab_size)
            model = init_model(config, grid.seed)
            log = train(model, records, tok, seed=grid.seed)
            dc = DecodeConfig(max_new_tokens=grid.max_new_tokens, eos_id=tok.eos_id)
            preds = {i: generate_summary(model, code, tok, dc) for i, code in grid.test_codes.items()}
        else:
            pairs = [(r.code, r.summary) for r in records]
            code_vocab = build_word_vocab(
                (c for c, _ in pairs), "code",
                size_bound=config.vocab_size - 4, limit=config.context_length,
            )
            sum_vocab = build_word_vocab(
                (s for _, s in pairs), "summary",
                size_bound=config.summary_vocab_size - 4, limit=config.summary_length,
            )
            model = init_model(config, grid.seed)
            log = train_encdec(model, pairs, code_vocab, sum_vocab, seed=grid.seed)
            preds = {
                i: generate_encdec_summary(model, code, code_vocab, sum_vocab)
                for i, code in grid.test_codes.items()
            }
        cell.scores = corpus_scores(preds, grid.test_refs, emb=grid.embedder)
        cell.final_loss = log.epoch_losses[-1] if log.epoch_losses else None
        if grid.out_dir is not None:
            cell_dir = Path(grid.out_dir) / "cells" / f"{config_name}__{tier_label}"
            cell_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(model, cell_dir / "checkpoint.bin")
            if config.kind == "decoder_only":
                tok.save(cell_dir / "tokenizer.txt")
            save_text_map(preds, cell_dir / "predictions.jsonl")
            (cell_dir / "cell.json").write_text(
                json.dumps(
                    {
                        "config": config_name,
                        "tier": tier_label,
                        "meteor_x100": cell.scores.meteor_x100,
                        "use_x100": cell.scores.use_x100,
                        "loss_curve": log.epoch_losses,
                    },
                    indent=2,
                )
            )
    except Exception as exc:  # a failed cell must not sink the rest of the grid
        cell.error = f"{type(exc).__name__}: {exc}"
        cell.traceback = traceback.format_exc()
    cell.seconds = time.perf_counter() - start
    return cell


def run_experiment_grid(grid: ExperimentGrid) -> GridReport:
    """Run every (config, tier) cell; failures are recorded and the rest continue."""
    report = GridReport(tier_labels=list(grid.tiers), config_names=list(grid.configs))
    for config_name in grid.configs:
        for tier_label in grid.tiers:
            report.cells[(tier_label, config_name)] = run_cell(grid, config_name, tier_label)
    if grid.out_dir is not None:
        out = Path(grid.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(report.render_text())
        (out / "report.json").write_text(report.to_json())
    return report
