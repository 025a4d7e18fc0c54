"""Knowledge distillation toolkit for neural code summarization.

Harvests summaries from a large teacher model, builds tiered fine-tuning
datasets, trains small transformer students from scratch, scores them with
METEOR and embedding similarity, and runs the human-evaluation survey
service plus its statistics.
"""

__version__ = "0.1.0"
