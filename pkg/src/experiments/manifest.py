"""
Run manifests.

A manifest records the resolved config, the code version, the repetition
seeds, the emitted files and command diagnostics. Passing it back to the
command reproduces the CSV and JSON outputs byte for byte. Wall-clock
timings vary between runs, so they go to timing.log instead.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
TIMING_NAME = "timing.log"


def _jsonable(value):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(value, float):
        return value if value == value and abs(value) != float('inf') else None
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, 'item') and hasattr(value, 'dtype'):
        return _jsonable(value.item())
    return value


def write_json(data, filename) -> Path:
    """Sorted, indented JSON with a trailing newline."""
    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    filename.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding='utf-8')
    return filename


@dataclass
class RunManifest:
    command: str
    config: Dict
    code_version: str
    seeds: List[int] = field(default_factory=list)
    files: List[str] = field(default_factory=list)
    diagnostics: Dict = field(default_factory=dict)
    timing_file: str = TIMING_NAME
    schema_version: int = SCHEMA_VERSION

    def add_file(self, path, output_dir):
        name = str(Path(path).relative_to(Path(output_dir)))
        if name not in self.files:
            self.files.append(name)

    def to_dict(self) -> Dict:
        return asdict(self)

    def write(self, output_dir) -> Path:
        return write_json(self.to_dict(), Path(output_dir) / MANIFEST_NAME)

    @classmethod
    def load(cls, filename) -> 'RunManifest':
        data = json.loads(Path(filename).read_text(encoding='utf-8'))
        version = data.get('schema_version')
        if version != SCHEMA_VERSION:
            raise ValueError(f"Unsupported manifest schema_version {version}, expected {SCHEMA_VERSION}")
        return cls(**data)


def write_timing(timing: Dict[str, float], output_dir) -> Path:
    """One 'stage milliseconds' line per timed stage."""
    path = Path(output_dir) / TIMING_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{stage} {ms:.1f}" for stage, ms in timing.items()]
    path.write_text("\n".join(lines) + "\n", encoding='utf-8')
    return path
