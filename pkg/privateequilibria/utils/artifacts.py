"""Schema-versioned run artifacts: manifest, regret trace, distribution and certificate."""

import json
import os
import subprocess
from functools import lru_cache
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from privateequilibria.src.base_learner import prefix_regret_trace
from privateequilibria.src.base_mechanism import MechanismRun
from privateequilibria.src.base_verifier import SCHEMA_VERSION, CorrelatedDistribution, EquilibriumCertificate

MANIFEST = "manifest.json"
REGRET_TRACE = "regret_trace.csv"
DISTRIBUTION = "distribution.json"
CERTIFICATE = "certificate.json"

TRACE_COLUMNS = ["round", "player", "lambda", "rho_fixed", "rho_swap", "clamped_entries"]


@lru_cache(maxsize=1)
def build_id() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    from privateequilibria import __version__

    here = os.path.dirname(os.path.abspath(__file__))
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        described = ""
    return described or f"privateequilibria-{__version__}"


def _jsonable(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, default=_jsonable) + "\n"


def stamp(payload: Dict[str, Any], config: Dict[str, Any]) -> Dict[str, Any]:
    """Adds the schema version, build id and resolved configuration to an artifact body."""
    return {"schema": SCHEMA_VERSION, "build": build_id(), "config": config, **payload}


def write_json(path: str, payload: Dict[str, Any], config: Dict[str, Any]) -> str:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(stamp(payload, config)))
    return path


def regret_trace_frame(run: MechanismRun) -> pd.DataFrame:
    """Running average loss and regrets of every learning player on the true losses, with per-round clamp counts."""
    frames: List[pd.DataFrame] = []
    for i, sequence in enumerate(run.sequences):
        if sequence is None or run.true_losses is None:
            continue
        losses = run.true_losses[i]
        if losses.shape[0] == 0:
            continue
        rounds = losses.shape[0]
        lam, rho_fixed, rho_swap = prefix_regret_trace(sequence.played[:rounds], losses)
        if run.clamp_counts is None:
            clamped = np.zeros(rounds, dtype=np.int64)
        else:
            clamped = run.clamp_counts[i, :rounds]
        frames.append(
            pd.DataFrame(
                {
                    "round": np.arange(1, rounds + 1),
                    "player": i,
                    "lambda": lam,
                    "rho_fixed": rho_fixed,
                    "rho_swap": rho_swap,
                    "clamped_entries": clamped,
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=TRACE_COLUMNS)
    return pd.concat(frames, ignore_index=True).sort_values(["round", "player"], kind="stable", ignore_index=True)


def write_regret_trace(path: str, run: MechanismRun, config: Dict[str, Any]) -> str:
    """CSV whose first line is a '#' comment holding the stamped configuration."""
    header = json.dumps(stamp({}, config), sort_keys=True, default=_jsonable)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# {header}\n")
        regret_trace_frame(run).to_csv(f, index=False, float_format="%.17g")
    return path


def read_regret_trace(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def write_run_artifacts(
    out_dir: str,
    run: MechanismRun,
    certificate: Optional[EquilibriumCertificate],
    config: Dict[str, Any],
) -> Dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    manifest = run.manifest()
    if certificate is not None:
        manifest["alpha_cce"] = certificate.alpha_cce
        manifest["alpha_ce"] = certificate.alpha_ce
    paths = {"manifest": write_json(os.path.join(out_dir, MANIFEST), manifest, config)}
    if run.failed:
        return paths
    paths["regret_trace"] = write_regret_trace(os.path.join(out_dir, REGRET_TRACE), run, config)
    paths["distribution"] = write_json(
        os.path.join(out_dir, DISTRIBUTION), {"distribution": run.distribution.to_dict()}, config
    )
    if certificate is not None:
        paths["certificate"] = write_json(os.path.join(out_dir, CERTIFICATE), certificate.to_dict(), config)
    return paths


def load_artifact(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_distribution(path: str) -> CorrelatedDistribution:
    return CorrelatedDistribution.load(path)


__all__ = [
    "CERTIFICATE",
    "DISTRIBUTION",
    "MANIFEST",
    "REGRET_TRACE",
    "build_id",
    "load_artifact",
    "load_distribution",
    "read_regret_trace",
    "regret_trace_frame",
    "stamp",
    "write_json",
    "write_regret_trace",
    "write_run_artifacts",
]
