"""Report emission: CSV tables, JSON summaries, SVG plots and the run manifest.

Every writer records the file it produced on a :class:`Manifest`, which the
CLI saves last.  Report files carry no timestamps so that a fixed config
gives byte-identical CSV, JSON and SVG output; the manifest alone is dated.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .bounds import ProfileCurves, SweepReport  # noqa: E402
from .config import ExperimentConfig, config_hash  # noqa: E402
from .errors import ConfigError  # noqa: E402
from .linear_evolve import LargenessCertificate  # noqa: E402
from .osgood import ConstructionRow  # noqa: E402
from .semilinear import BlowupReport, Trajectory  # noqa: E402

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

KERNEL_COLUMNS = ("x", "y", "t", "kernel", "bound", "slack")
BLOWUP_COLUMNS = ("M", "I", "blew_up", "t_blowup")
OSGOOD_COLUMNS = ("i", "log_phi", "log_f_phi", "term", "partial_sum")
CERTIFICATE_COLUMNS = ("phi", "r", "tau")
TRAJECTORY_COLUMNS = ("t", "r", "u")

plt.rcParams["svg.hashsalt"] = "heatlab"
plt.rcParams["svg.fonttype"] = "none"


@dataclass
class Manifest:
    """Provenance for one run directory."""

    experiment_id: str
    config_hash: str
    version: str = __version__
    timestamp: str = ""
    files: List[Dict[str, str]] = field(default_factory=list)
    exit_code: Optional[int] = None
    error: Optional[str] = None

    def add(self, path: Path) -> Path:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.files.append({"name": path.name, "sha256": digest})
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment_id": self.experiment_id,
            "timestamp": self.timestamp,
            "config_hash": self.config_hash,
            "version": self.version,
            "files": list(self.files),
            "exit_code": self.exit_code,
            "error": self.error,
        }


def new_manifest(cfg: ExperimentConfig) -> Manifest:
    digest = config_hash(cfg)
    return Manifest(experiment_id=f"{cfg.command}-{digest[:12]}", config_hash=digest)


def prepare_out_dir(path: Union[str, Path]) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"Output directory {out} is not writable: {exc}") from exc
    return out


def write_manifest(manifest: Manifest, out_dir: Path) -> Path:
    manifest.timestamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote manifest with %d files to %s", len(manifest.files), path)
    return path


# ---------------------------------------------------------------------------
# CSV


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (tuple, list)):
        return ";".join(_cell(v) for v in value)
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]], manifest: Optional[Manifest] = None) -> Path:
    """Write ``rows`` under a header; an empty ``rows`` gives a header-only file."""

    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    if manifest is not None:
        manifest.add(path)
    return path


def sweep_rows(report: SweepReport) -> Iterable[Sequence[Any]]:
    for x, y, t, kernel, bound, slack in report.iter_rows():
        yield (x[0] if len(x) == 1 else x), (y[0] if len(y) == 1 else y), t, kernel, bound, slack


def profile_rows(curves: ProfileCurves) -> Iterable[Sequence[Any]]:
    for x, k, b in zip(curves.x, curves.kernel, curves.bound):
        yield x, curves.y, curves.t, k, b, k - b


def blowup_rows(report: BlowupReport) -> Iterable[Sequence[Any]]:
    for record in report.records:
        yield record.cap, record.mass, record.blew_up, record.t_blowup


def osgood_rows(rows: Sequence[ConstructionRow]) -> Iterable[Sequence[Any]]:
    for row in rows:
        yield row.i, row.log_phi, row.log_f_phi, row.term, row.partial_sum


def certificate_rows(cert: LargenessCertificate) -> Iterable[Sequence[Any]]:
    for sample in cert.samples:
        yield sample.phi, sample.r, sample.tau


def trajectory_rows(trajectory: Trajectory) -> Iterable[Sequence[Any]]:
    return trajectory.rows()


# ---------------------------------------------------------------------------
# JSON


def jsonable(value: Any) -> Any:
    """Replace numpy scalars and non-finite floats with JSON-safe values."""

    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isnan(number):
            return "nan"
        if math.isinf(number):
            return "inf" if number > 0 else "-inf"
        return number
    return value


def write_json(path: Path, payload: Dict[str, Any], cfg: ExperimentConfig, manifest: Optional[Manifest] = None) -> Path:
    """Write ``payload`` with the schema version, artifact version and resolved config.

    The output directory is left out of the embedded config so the same
    experiment gives the same bytes wherever it is written.
    """

    config = cfg.resolved()
    config.pop("out_dir", None)
    document = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "config": config,
        "config_hash": config_hash(cfg),
        "report": payload,
    }
    path.write_text(json.dumps(jsonable(document), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if manifest is not None:
        manifest.add(path)
    return path


# ---------------------------------------------------------------------------
# SVG


def write_svg(fig: plt.Figure, path: Path, manifest: Optional[Manifest] = None) -> Path:
    """Save ``fig`` as SVG without a date stamp and close it."""

    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    if manifest is not None:
        manifest.add(path)
    return path


def kernel_figure(curves: ProfileCurves) -> plt.Figure:
    """Kernel (solid) above its lower bound (dashed), nothing else."""

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curves.x, curves.kernel, color="black", label="kernel")
    ax.plot(curves.x, curves.bound, color="black", linestyle="--", label="lower bound")
    ax.set_xlabel("x")
    ax.set_ylabel(f"K(x, {curves.y:g}; {curves.t:g})")
    ax.set_xlim(0.0, 2.0 * curves.a)
    ax.legend()
    fig.tight_layout()
    return fig


def blowup_figure(report: BlowupReport) -> plt.Figure:
    fig, ax = plt.subplots(figsize=(6, 4))
    caps = np.array([r.cap for r in report.records])
    lower = np.array([r.lower_mass for r in report.records])
    ax.plot(np.log10(caps), np.log10(lower), marker="o", color="black", label="Duhamel lower mass")
    finite = [(r.cap, r.mass) for r in report.records if math.isfinite(r.mass) and r.mass > 0]
    if finite:
        ax.plot(np.log10([c for c, _ in finite]), np.log10([m for _, m in finite]), marker="s", linestyle=":", color="gray", label="simulated mass")
    ax.set_xlabel("log10 M")
    ax.set_ylabel("log10 I")
    ax.legend()
    fig.tight_layout()
    return fig


def certificate_figure(cert: LargenessCertificate) -> plt.Figure:
    fig, ax = plt.subplots(figsize=(6, 4))
    phis = np.array([s.phi for s in cert.samples])
    ax.plot(np.log10(phis), np.log10([s.r for s in cert.samples]), marker="o", color="black", label="r(phi)")
    ax.plot(np.log10(phis), np.log10([s.tau for s in cert.samples]), marker="s", linestyle="--", color="black", label="tau(phi)")
    ax.set_xlabel("log10 phi")
    ax.set_ylabel("log10 r, log10 tau")
    ax.legend()
    fig.tight_layout()
    return fig


__all__ = [
    "SCHEMA_VERSION",
    "KERNEL_COLUMNS",
    "BLOWUP_COLUMNS",
    "OSGOOD_COLUMNS",
    "CERTIFICATE_COLUMNS",
    "TRAJECTORY_COLUMNS",
    "Manifest",
    "new_manifest",
    "prepare_out_dir",
    "write_manifest",
    "write_csv",
    "sweep_rows",
    "profile_rows",
    "blowup_rows",
    "osgood_rows",
    "certificate_rows",
    "trajectory_rows",
    "jsonable",
    "write_json",
    "kernel_figure",
    "blowup_figure",
    "certificate_figure",
    "write_svg",
]
