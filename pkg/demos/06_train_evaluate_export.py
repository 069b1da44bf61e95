"""
Synthetic data to predictions
=============================

Generate the 8 x 16 synthetic set, train for a few epochs, score the model,
then write predictions and per-block embeddings. Pass an epoch count as the
first argument (200 reaches a training composite above 2).
"""

# %%
import sys
import tempfile
from pathlib import Path

from twoaspect.data import generate_synthetic
from twoaspect.model import ModelConfig
from twoaspect.pipeline import evaluate, export_embeddings, predict, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 20
work = Path(tempfile.mkdtemp(prefix="twoaspect-"))
generate_synthetic(8, 16, 7, work / "data")

# %%
run = train(ModelConfig(epochs=epochs, val_fraction=0.0, seed=7), work / "data", work / "run")
for row in run.history[:: max(1, epochs // 5)]:
    print(f"epoch {row['epoch']:4d}  loss {row['loss']:.3f}  composite {row['train_composite']:.3f}")

# %%
print(evaluate(run.final_checkpoint, work / "data").to_text(note=False))
print("predictions:", predict(run.final_checkpoint, work / "data", work / "pred.csv"))
print("embeddings: ", export_embeddings(run.final_checkpoint, work / "data", work / "emb.csv"))
