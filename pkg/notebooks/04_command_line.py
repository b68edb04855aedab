"""
The ``lslp`` command line
=========================

The same workflow driven through the CLI entry point: ingest a synthetic
dataset, train every stage, sample, evaluate and render. Each command
writes a ``run-<command>.json`` manifest with the config, seeds and file
hashes next to its outputs.
"""
# %%
import json
from pathlib import Path

from lslp.cli import main

out = Path(__file__).with_name("output") / "cli"
out.mkdir(parents=True, exist_ok=True)
cfg = out / "small.yaml"
cfg.write_text("""preset: desk
autoencoder: {epochs: 15}
gan: {epochs: 60}
""")

# %%
main(["ingest", "--synthetic", "40", "--config", str(cfg), "--out", str(out / "data")])
main(["train", "--dataset", str(out / "data"), "--config", str(cfg), "--out", str(out / "run")])
main(["synthesize", "--pyramid", str(out / "run" / "pyramid.json"), "--count", "10", "--out", str(out / "samples")])

# %%
# Records are printed as ``metric=<name> value=<float> key=value ...``.
main(["evaluate", "--a", str(out / "samples" / "level2"), "--b", str(out / "data"), "--b-split", "test",
      "--table", "--out", str(out / "eval")])

# %%
main(["render", "--clouds", str(out / "samples" / "level2"), "--logs", *map(str, sorted((out / "run" / "logs").glob("*.log"))),
      "--out", str(out / "figures")])
manifest = json.loads((out / "run" / "run-train.json").read_text())
print(manifest["command"])
print(len(manifest["outputs"]), "training artifacts hashed")
