"""Walk the HTTP API of a freshly built map without leaving the process.

Builds a small map, mounts it the same way `cartomap serve` does, and
exercises each endpoint through the in-process test client. Point curl at
`cartomap serve --map-dir <dir>` for the real thing.
"""

import json
import tempfile
from pathlib import Path

import yaml
from fastapi.testclient import TestClient

from cartomap.cli import main
from cartomap.server import create_app_from_dir

root = Path(tempfile.mkdtemp(prefix="cartomap-demo-"))
main(["synth", "--out", str(root), "--topics", "3", "--docs-per-topic", "40"])
cfg = {
    "input_csv": str(root / "corpus.csv"),
    "out_dir": str(root / "map"),
    "m_min": 5,
    "min_docs": 2,
    "d": 24,
    "k": 8,
    "ks": [3],
    "zmax": 2,
    "epochs": 80,
}
(root / "config.yaml").write_text(yaml.safe_dump(cfg), encoding="utf-8")
assert main(["--config", str(root / "config.yaml"), "run-all"]) == 0

client = TestClient(create_app_from_dir(root / "map"))

def show(path, **params):
    r = client.get(path, params=params)
    body = r.json() if "json" in r.headers.get("content-type", "") else f"{len(r.content)} bytes"
    text = json.dumps(body) if isinstance(body, (dict, list)) else body
    print(f"GET {path} -> {text[:150]}{'...' if len(str(text)) > 150 else ''}")

show("/layers")
show("/tiles/articles/0/0/0.png")
show("/filtered/articles/1/0/0.png", f="type:article")
show("/labels", bbox="0,0,1,1", limit=3)
show("/clusters", level="0", bbox="0,0,1,1")
show("/search", q="t0")
show("/entity/article:0")
show("/stats")
