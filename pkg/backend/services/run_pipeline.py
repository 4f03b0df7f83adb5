# run_pipeline.py
"""
Run Pipeline - load a JSON run configuration, run the experiment, write artifacts.

Exit codes: 0 success, 1 configuration or parameter error, 2 numerical failure
(including ensembles with failed paths and failing acceptance checks).
"""
import json
import logging
import re
import time
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from core.config import settings
from db.artifact_store import (
    checks_frame,
    resolve_output_dir,
    write_csv,
    write_manifest,
    write_path_dump,
)
from services.sde.errors import ConfigError, ParameterError, SDEError
from services.sde.experiments import EXPERIMENT_REGISTRY
from services.sde.schemas import CheckResult, RunConfig, SimSpec

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

REPORT_FILE = "acceptance_summary.csv"


# ==============================================================================
# CONFIG LOADING
# ==============================================================================

def _line_of(text: str, loc: Sequence) -> Optional[int]:
    """Line of the innermost key of `loc` found in order through the JSON text."""
    pos, found = 0, None
    for key in loc:
        if not isinstance(key, str):
            continue
        match = re.compile(rf'"{re.escape(key)}"\s*:').search(text, pos)
        if match is None:
            break
        pos, found = match.end(), match.start()
    return None if found is None else text.count("\n", 0, found) + 1


def _validation_messages(error: ValidationError, text: str, source: str) -> List[str]:
    messages = []
    for err in error.errors():
        loc = err.get("loc", ())
        line = _line_of(text, loc)
        where = f"{source}:{line}" if line is not None else source
        field = ".".join(str(p) for p in loc) or "<root>"
        messages.append(f"{where}: {field}: {err['msg']}")
    return messages


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration; every problem is reported with its JSON line."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError([f"{path}: cannot read config ({e.strerror or e})"]) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"{path}:{e.lineno}: invalid JSON: {e.msg} (column {e.colno})"]) from e
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_validation_messages(e, text, str(path))) from e


# ==============================================================================
# REPORTS
# ==============================================================================

def emit_report(results: Iterable[CheckResult], path) -> Path:
    """Summary CSV `test_name,quantity,expected,observed,tolerance,pass`, rows sorted."""
    results = list(results)
    if not results:
        raise ParameterError("emit_report needs at least one result")
    return write_csv(checks_frame(results), Path(path))


# ==============================================================================
# RUNNER
# ==============================================================================

def _with_seed(config: RunConfig, seed: Optional[int]) -> RunConfig:
    if seed is None:
        return config
    sim = SimSpec.model_validate({**config.sim.model_dump(), "seed": seed})
    return config.model_copy(update={"sim": sim})


def run_config(config: RunConfig, out: Optional[str] = None, seed: Optional[int] = None,
               threads: Optional[int] = None) -> int:
    """Run one experiment end to end and return the process exit code."""
    start_time = time.time()
    threads = settings.DEFAULT_THREADS if threads is None else threads
    out_dir = resolve_output_dir(out or config.output.directory)
    files: List[str] = []
    warnings: List[str] = []
    summary: dict = {}
    error: Optional[str] = None

    print("=" * 60)
    print("STEP 1: CONFIGURATION")
    print("=" * 60)
    try:
        if threads < 1:
            raise ParameterError(f"threads must be at least 1 (got {threads})")
        config = _with_seed(config, seed)
    except (ValidationError, ParameterError) as e:
        error = f"{type(e).__name__}: {e}"
        print(f"INVALID RUN: {error}")
        write_manifest(out_dir, config.model_dump(mode="json"), config.sim.seed, time.time() - start_time,
                       ["manifest.json"], EXIT_INVALID, warnings, summary, error)
        return EXIT_INVALID

    print(f"Experiment: {config.experiment}")
    if config.model is not None:
        print(f"Model: {config.model.preset} {config.model.params or ''}")
    print(f"Alpha: {config.alpha:g}   Scheme: {config.scheme}")
    print(f"Seed: {config.sim.seed}   Threads: {threads}")
    print(f"Output: {out_dir}")

    print("\n" + "=" * 60)
    print("STEP 2: RUN EXPERIMENT")
    print("=" * 60)
    try:
        result = EXPERIMENT_REGISTRY[config.experiment](config, threads)
    except (ValidationError, ParameterError) as e:
        exit_code, error = EXIT_INVALID, f"{type(e).__name__}: {e}"
    except SDEError as e:
        exit_code, error = EXIT_NUMERICAL, f"{type(e).__name__}: {e}"
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        logger.exception("Numerical failure outside the engine checks")
        exit_code, error = EXIT_NUMERICAL, f"{type(e).__name__}: {e}"
    else:
        warnings.extend(result.warnings)
        summary = result.summary

        print("\n" + "=" * 60)
        print("STEP 3: WRITE ARTIFACTS")
        print("=" * 60)
        for name, frame in sorted(result.tables.items()):
            write_csv(frame, out_dir / name)
            files.append(name)
            print(f"   wrote {name} ({len(frame)} rows)")
        for name, paths in sorted(result.binaries.items()):
            write_path_dump(paths, out_dir / name)
            files.append(name)
            print(f"   wrote {name} {tuple(paths.shape)}")
        if result.checks:
            emit_report(result.checks, out_dir / REPORT_FILE)
            files.append(REPORT_FILE)
            print(f"   wrote {REPORT_FILE} ({len(result.checks)} checks)")

        failed_checks = [c for c in result.checks if not c.passed]
        if result.failures:
            warnings.append(f"{len(result.failures)} paths failed")
        if failed_checks:
            warnings.append(f"{len(failed_checks)} checks failed")
        exit_code = EXIT_NUMERICAL if result.failures or failed_checks else EXIT_OK

    elapsed = time.time() - start_time
    files.append("manifest.json")
    write_manifest(out_dir, config.model_dump(mode="json"), config.sim.seed, elapsed,
                   files, exit_code, warnings, summary, error)

    print("\n" + "=" * 60)
    print("RUN REPORT")
    print("=" * 60)
    print(f"Total runtime: {elapsed:.1f} s")
    for w in warnings:
        print(f"   WARNING: {w}")
    if error:
        print(f"\nRUN FAILED: {error}")
        logger.error(error)
    print(f"Exit code: {exit_code}")
    return exit_code


def run_config_file(path, out: Optional[str] = None, seed: Optional[int] = None,
                    threads: Optional[int] = None) -> int:
    try:
        config = load_config(path)
    except ConfigError as e:
        print("INVALID CONFIG:")
        for msg in e.messages:
            print(f"   {msg}")
        return EXIT_INVALID
    return run_config(config, out=out, seed=seed, threads=threads)
