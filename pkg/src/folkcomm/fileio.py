"""File formats and manifests.

All indices in files are 1-based; everything in memory is 0-based. Floats
are written with ``repr`` (shortest round-trip form), so identical inputs
produce byte-identical files. Formats:

* model/config: flat ``key = value`` INI with one section per module,
* memberships: CSV with header ``community_1..community_k``, one row per node,
* hypergraphs: TSV triple list ``u<TAB>t<TAB>r`` after a one-line header
  carrying the dims,
* run manifests: JSON with the config snapshot, seed, tool version, and a
  sha256 per output file (timings go to a separate, unhashed sidecar).
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import HypergraphSample, MembershipMatrix, ModelParams
from .pipeline import RunOptions


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


# ----- config -----------------------------------------------------------

def params_to_config(params: ModelParams) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp["model"] = {
        "k": str(params.k),
        "n_users": str(params.n_users),
        "n_tags": str(params.n_tags),
        "n_resources": str(params.n_resources),
        "p": repr(params.p),
        "q": repr(params.q),
        "rho": repr(params.rho),
        "alpha": ", ".join(repr(float(a)) for a in params.alpha),
        "seed": str(params.seed),
    }
    return cp


def params_from_config(cp: configparser.ConfigParser) -> ModelParams:
    if "model" not in cp:
        raise ConfigError("config is missing the [model] section")
    sec = cp["model"]
    try:
        k = sec.getint("k")
        alpha_raw = sec.get("alpha", fallback="1.0")
        alpha = tuple(float(a) for a in alpha_raw.replace(",", " ").split())
        if len(alpha) == 1:
            alpha = alpha * k
        return ModelParams(
            k=k,
            n_users=sec.getint("n_users"),
            n_tags=sec.getint("n_tags"),
            n_resources=sec.getint("n_resources"),
            p=sec.getfloat("p"),
            q=sec.getfloat("q"),
            rho=sec.getfloat("rho"),
            alpha=alpha,
            seed=sec.getint("seed", fallback=0),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad [model] section: {exc}") from exc


def options_from_config(cp: configparser.ConfigParser) -> RunOptions:
    kwargs = {}
    if "detect" in cp:
        sec = cp["detect"]
        kwargs["detect_mode"] = sec.get("mode", fallback="oracle")
        kwargs["eps_r_mode"] = sec.get("eps_r_mode", fallback="lemma")
        kwargs["eps_r_value"] = sec.getfloat("eps_r", fallback=0.0)
        if sec.get("tau1", fallback=None) is not None:
            kwargs["tau1"] = sec.getfloat("tau1")
        if sec.get("tau2", fallback=None) is not None:
            kwargs["tau2"] = sec.getfloat("tau2")
    if "learn" in cp:
        sec = cp["learn"]
        if sec.get("trials", fallback=None) is not None:
            kwargs["trials"] = sec.getint("trials")
        kwargs["iterations"] = sec.getint("iterations", fallback=50)
        kwargs["deflate_tol"] = sec.getfloat("deflate_tol", fallback=1e-6)
        kwargs["tau_mode"] = sec.get("tau_mode", fallback="auto")
        kwargs["tau_value"] = sec.getfloat("tau", fallback=0.0)
    try:
        return RunOptions(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad options: {exc}") from exc


def read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    found = cp.read(path)
    if not found:
        raise ConfigError(f"config file not found: {path}")
    return cp


def read_config_string(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    return cp


def config_text(cp: configparser.ConfigParser) -> str:
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# ----- memberships ------------------------------------------------------

def write_membership_csv(members: MembershipMatrix, path) -> None:
    lines = [",".join(f"community_{i + 1}" for i in range(members.k))]
    for col in members.entries.T:
        lines.append(",".join(repr(float(v)) for v in col))
    Path(path).write_text("\n".join(lines) + "\n")


def read_membership_csv(path, role: str = "combined") -> MembershipMatrix:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty membership file")
    header = lines[0].split(",")
    if not all(h.strip().startswith("community_") for h in header):
        raise ConfigError(f"{path}: bad header {lines[0]!r}")
    k = len(header)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != k:
            raise ConfigError(f"{path}: line {lineno}: expected {k} values")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
    return MembershipMatrix(entries=np.array(rows).T, role=role)


def write_raw_membership_csv(matrix: np.ndarray, path) -> None:
    """Same CSV layout as membership files, but without simplex validation
    (used for pre-threshold estimates, which may carry negatives)."""
    matrix = np.asarray(matrix, dtype=float)
    lines = [",".join(f"community_{i + 1}" for i in range(matrix.shape[0]))]
    for col in matrix.T:
        lines.append(",".join(repr(float(v)) for v in col))
    Path(path).write_text("\n".join(lines) + "\n")


def read_raw_membership_csv(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty membership file")
    k = len(lines[0].split(","))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != k:
            raise ConfigError(f"{path}: line {lineno}: expected {k} values")
        rows.append([float(v) for v in parts])
    return np.array(rows).T


# ----- hypergraphs ------------------------------------------------------

_TSV_HEADER = "# dims"


def write_hypergraph_tsv(sample: HypergraphSample, path) -> None:
    n_u, n_t, n_r = sample.dims
    lines = [f"{_TSV_HEADER}\t{n_u}\t{n_t}\t{n_r}"]
    for u, t, r in sample.triples:
        lines.append(f"{u + 1}\t{t + 1}\t{r + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_hypergraph_tsv(path, dims: tuple[int, int, int] | None = None,
                        allow_duplicates: bool = False):
    """Parse a triple-list TSV. Returns ``(sample, n_duplicates)``; any
    malformed or out-of-range line raises with its line number."""
    lines = Path(path).read_text().splitlines()
    start = 0
    if lines and lines[0].startswith(_TSV_HEADER):
        parts = lines[0].split("\t")
        if len(parts) != 4:
            raise ConfigError(f"{path}: line 1: malformed dims header")
        try:
            header_dims = tuple(int(v) for v in parts[1:])
        except ValueError as exc:
            raise ConfigError(f"{path}: line 1: {exc}") from exc
        if dims is not None and tuple(dims) != header_dims:
            raise ConfigError(
                f"{path}: header dims {header_dims} differ from requested {tuple(dims)}"
            )
        dims = header_dims
        start = 1
    if dims is None:
        raise ConfigError(f"{path}: no dims header and no dims given")
    triples = []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ConfigError(f"{path}: line {lineno}: expected 3 tab-separated indices")
        try:
            u, t, r = (int(v) for v in parts)
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
        if not (1 <= u <= dims[0] and 1 <= t <= dims[1] and 1 <= r <= dims[2]):
            raise ConfigError(
                f"{path}: line {lineno}: index out of range for dims {dims}")
        triples.append((u - 1, t - 1, r - 1))
    arr = np.array(triples, dtype=np.int64).reshape(-1, 3)
    n_dup = 0
    if len(arr):
        uniq = np.unique(arr, axis=0)
        n_dup = len(arr) - len(uniq)
        if n_dup and not allow_duplicates:
            raise ConfigError(f"{path}: {n_dup} duplicate triples")
        arr = uniq
    return HypergraphSample(triples=arr, dims=dims), n_dup


# ----- detection and eigen reports --------------------------------------

def write_index_list(indices, path) -> None:
    Path(path).write_text(
        "".join(f"{int(i) + 1}\n" for i in indices))


def read_index_list(path) -> np.ndarray:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            v = int(line)
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
        if v < 1:
            raise ConfigError(f"{path}: line {lineno}: indices are 1-based")
        out.append(v - 1)
    return np.array(sorted(set(out)), dtype=np.int64)


def write_detection_csv(result, path) -> None:
    lines = ["node,side,sigma1,sigma2,verdict"]
    order = np.argsort(result.nodes, kind="stable")
    for i in order:
        lines.append(
            f"{int(result.nodes[i]) + 1},{result.sides[i]},"
            f"{repr(float(result.sigma1[i]))},{repr(float(result.sigma2[i]))},"
            f"{'pure' if result.is_pure[i] else 'mixed'}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_eigen_report(eig, bundle, path) -> None:
    report = {
        "eigenvalues": [float(v) for v in eig.eigenvalues],
        "residual": float(eig.residual),
        "iterations": list(eig.iterations),
        "pair_conditions": {k: float(v) for k, v in bundle.pair_conditions.items()},
        "whiten_residual": float(bundle.whiten_residual),
    }
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


# ----- sweep ------------------------------------------------------------

def write_sweep_csv(rows, columns, path) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c, "")) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


# ----- manifests --------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def build_manifest(config_snapshot: str, seed: int, outputs: dict,
                   version: str) -> dict:
    return {
        "config": config_snapshot,
        "seed": int(seed),
        "tool_version": version,
        "outputs": {name: {"path": str(path), "sha256": sha256_file(path)}
                    for name, path in sorted(outputs.items())},
    }


def write_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_timings(timings: dict, path) -> None:
    Path(path).write_text(
        json.dumps({str(k): float(v) for k, v in timings.items()},
                   indent=2, sort_keys=True) + "\n")
