"""Run manifest: per-stage input/output content hashes, seeds, timestamps.

Rerunning a stage whose recorded input hashes, seed, and output hashes all
still match is a no-op. Reusing an output directory with a different config
hash or root seed is refused.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from pathlib import Path

from .errors import ConfigError


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digests(out_dir: Path, relpaths: list[str]) -> dict[str, str]:
    return {rel: file_digest(out_dir / rel) for rel in sorted(relpaths)}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


class RunManifest:
    def __init__(self, out_dir, config_hash: str, seed: int):
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / "manifest.json"
        if self.path.exists():
            data = json.loads(self.path.read_text())
            if data.get("config_hash") != config_hash or data.get("seed") != seed:
                raise ConfigError(
                    f"output dir {self.out_dir} was produced with a different "
                    "config or seed; use a fresh --out"
                )
            self.data = data
        else:
            run_id = hashlib.sha256(f"{config_hash}|{seed}".encode()).hexdigest()[:16]
            self.data = {
                "run_id": run_id,
                "config_hash": config_hash,
                "seed": seed,
                "stages": {},
            }

    @property
    def run_id(self) -> str:
        return self.data["run_id"]

    def save(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, sort_keys=True, indent=2) + "\n")

    def should_skip(self, stage: str, inputs: dict[str, str], stage_seed: int) -> bool:
        entry = self.data["stages"].get(stage)
        if entry is None:
            return False
        if entry["inputs"] != inputs or entry["seed"] != stage_seed:
            return False
        for rel, digest in entry["outputs"].items():
            path = self.out_dir / rel
            if not path.exists() or file_digest(path) != digest:
                return False
        return True

    def record(
        self,
        stage: str,
        inputs: dict[str, str],
        outputs: dict[str, str],
        stage_seed: int,
        started_at: str,
    ) -> None:
        self.data["stages"][stage] = {
            "inputs": inputs,
            "outputs": outputs,
            "seed": stage_seed,
            "started_at": started_at,
            "finished_at": _now(),
        }
        self.save()


def now_iso() -> str:
    return _now()
