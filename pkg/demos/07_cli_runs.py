"""
Running experiments from config files
=====================================

Each TOML file in ``configs/`` names one experiment. The runner writes CSV
tables plus ``manifest.json`` with the config echo and a hash per file.
Equivalent shell command::

    python -m ergodic_channels run demos/configs/correlation.toml --out out/correlation
"""
import json
import tempfile
from pathlib import Path

from ergodic_channels.cli import main

here = Path(__file__).parent / "configs"
with tempfile.TemporaryDirectory() as tmp:
    for cfg in sorted(here.glob("*.toml")):
        out = Path(tmp) / cfg.stem
        code = main(["run", str(cfg), "--out", str(out), "--threads", "2"])
        man = json.loads((out / "manifest.json").read_text())
        print(f"{cfg.name:28s} exit {code}  files {sorted(man['files'])}")
        scalars = {k: v for k, v in man["summary"].items() if not isinstance(v, (dict, list))}
        if scalars:
            print("    summary:", scalars)
