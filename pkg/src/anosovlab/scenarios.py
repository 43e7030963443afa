"""Config-driven experiment runner binding the analysis modules together.

A scenario is a YAML file naming a fixture, tolerances, depths, sampling
counts, a seed and an output directory. `run_scenario` executes the requested
pipeline stages and writes one CSV per report plus a plain-text summary.
Verdict-level findings (non-special, non-rigid, branch-dependent unstable
directions, failed certification, ...) are collected rather than raised, and
drive the exit code: 0 clean, 2 findings, 1 infrastructure error.

Determinism contract: every sampled quantity is derived from the scenario
seed, and CSV bodies are byte-identical across repeated runs and thread
counts. Wall-clock data goes to run_meta.txt only.

Expensive artifacts (periodic orbit inventories, conjugacy diagnostics) are
cached on disk keyed by a content hash of the fixture and the parameters that
affect the numbers, so a cache hit reproduces a cold run exactly.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path

import numpy as np
import yaml

from anosovlab.bundles import integrability_verdict
from anosovlab.conjugacy import (
    conjugacy_evaluator,
    deep_translation_decay,
    specialness_defect,
)
from anosovlab.errors import (
    AnosovLabError,
    CertificationFailed,
    ConfigInvalid,
    ObstructionNonzero,
    RefusedNonIntegrable,
)
from anosovlab.leafmetric import (
    ConjugacyIsometryReport,
    conjugacy_leaf_isometry_check,
    holonomy_isometry_check,
    livschitz_solve,
    stable_log_norm_observable,
)
from anosovlab.linear import covering_radius_table
from anosovlab.maps import (
    FIXTURE_NAMES,
    TorusMap,
    TrigField,
    anosov_certificate,
    fixture_catalog,
    local_diffeo_margin,
)
from anosovlab.orbits import (
    OrbitInventory,
    PeriodicOrbit,
    enumerate_orbits,
    rigidity_report,
)
from anosovlab.util import float_cell

STAGES = ("analyze", "certify", "conjugacy", "orbits", "branches", "metric")

CACHE_ENV = "ANOSOVLAB_CACHE"


# -- scenario config -----------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Validated run configuration; the seed determines all sampling."""

    fixture: str
    epsilon: float = 0.0
    custom: dict | None = None
    # tolerances
    rigidity_threshold: float = 5e-4
    spread_tol: float = 1e-3
    residual_target: float = 1e-9
    specialness_threshold: float = 1e-4
    obstruction_tol: float = 1e-4
    exponent_tol: float = 1e-4
    isometry_tol: float = 1e-3
    # depths
    series_depth: int | None = None
    branch_depth: int = 12
    max_period: int = 3
    fourier_order: int = 16
    # sampling counts
    points: int = 50
    codes_per_point: int = 8
    pairs: int = 100
    seed: int = 0
    out_dir: str = "runs/scenario"
    stages: tuple[str, ...] = STAGES
    dichotomy_family: str | None = None
    dichotomy_epsilons: tuple[float, ...] = ()

    def build_map(self) -> TorusMap:
        return fixture_catalog(self.fixture, self.epsilon, custom=self.custom)


# section name -> (yaml key -> (Scenario field, expected kind))
_SECTIONS = {
    "tolerances": {
        "rigidity": ("rigidity_threshold", "pos_float"),
        "spread": ("spread_tol", "pos_float"),
        "conjugacy_residual": ("residual_target", "pos_float"),
        "specialness": ("specialness_threshold", "pos_float"),
        "obstruction": ("obstruction_tol", "pos_float"),
        "exponent": ("exponent_tol", "pos_float"),
        "isometry": ("isometry_tol", "pos_float"),
    },
    "depths": {
        "series": ("series_depth", "opt_pos_int"),
        "branch": ("branch_depth", "pos_int"),
        "max_period": ("max_period", "pos_int"),
        "fourier_order": ("fourier_order", "pos_int"),
    },
    "sampling": {
        "points": ("points", "pos_int"),
        "codes_per_point": ("codes_per_point", "pos_int"),
        "pairs": ("pairs", "pos_int"),
    },
}

_TOP_KEYS = {"fixture", "tolerances", "depths", "sampling", "seed", "output", "stages", "dichotomy"}


def _coerce(kind: str, value):
    """Return (ok, coerced). Booleans are not numbers here."""
    if isinstance(value, bool):
        return False, None
    if kind == "pos_float":
        if isinstance(value, (int, float)) and value > 0:
            return True, float(value)
        return False, None
    if kind == "pos_int":
        if isinstance(value, int) and value >= 1:
            return True, int(value)
        return False, None
    if kind == "opt_pos_int":
        if value is None:
            return True, None
        if isinstance(value, int) and value >= 1:
            return True, int(value)
        return False, None
    raise ValueError(kind)


def load_scenario(source) -> Scenario:
    """Parse and validate a config (path to YAML, YAML string, or dict).

    Raises ConfigInvalid listing every problem found, with field paths.
    """
    if isinstance(source, dict):
        cfg = source
    else:
        path = Path(source)
        try:
            text = path.read_text() if path.exists() else str(source)
        except OSError as exc:
            raise ConfigInvalid([f"cannot read config: {exc}"]) from exc
        try:
            cfg = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigInvalid([f"not valid YAML: {exc}"]) from exc
    if not isinstance(cfg, dict):
        raise ConfigInvalid(["config root must be a mapping"])

    problems: list[str] = []
    values: dict = {}

    for key in cfg:
        if key not in _TOP_KEYS:
            problems.append(f"unknown top-level key {key!r}")

    fix = cfg.get("fixture")
    if not isinstance(fix, dict) or "name" not in fix:
        problems.append("fixture: must be a mapping with a 'name'")
    else:
        name = fix.get("name")
        if name not in FIXTURE_NAMES:
            problems.append(f"fixture.name: unknown fixture {name!r}")
        else:
            values["fixture"] = name
        eps = fix.get("epsilon", 0.0)
        if isinstance(eps, bool) or not isinstance(eps, (int, float)) or eps < 0:
            problems.append("fixture.epsilon: must be a number >= 0")
        else:
            values["epsilon"] = float(eps)
            if name in ("linear_A0", "cubic_companion") and eps != 0.0:
                problems.append(f"fixture.epsilon: {name} takes no perturbation scale")
        custom = fix.get("custom")
        if custom is not None and not isinstance(custom, dict):
            problems.append("fixture.custom: must be a mapping")
        else:
            values["custom"] = custom
            if name == "custom" and not (isinstance(custom, dict) and "matrix" in custom):
                problems.append("fixture.custom: needs a 'matrix' entry")
        for key in fix:
            if key not in ("name", "epsilon", "custom"):
                problems.append(f"fixture.{key}: unknown key")

    for section, schema in _SECTIONS.items():
        raw = cfg.get(section, {})
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            problems.append(f"{section}: must be a mapping")
            continue
        for key, value in raw.items():
            if key not in schema:
                problems.append(f"{section}.{key}: unknown key")
                continue
            target, kind = schema[key]
            ok, coerced = _coerce(kind, value)
            if not ok:
                problems.append(f"{section}.{key}: expected {kind.replace('_', ' ')}, got {value!r}")
            else:
                values[target] = coerced

    seed = cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        problems.append("seed: must be an integer >= 0")
    else:
        values["seed"] = seed

    out = cfg.get("output", "runs/scenario")
    if not isinstance(out, str) or not out:
        problems.append("output: must be a non-empty path string")
    else:
        values["out_dir"] = out

    stages = cfg.get("stages", list(STAGES))
    if not isinstance(stages, list) or not all(isinstance(s, str) for s in stages):
        problems.append("stages: must be a list of stage names")
    else:
        bad = [s for s in stages if s not in STAGES]
        for s in bad:
            problems.append(f"stages: unknown stage {s!r}")
        if not bad:
            values["stages"] = tuple(s for s in STAGES if s in stages)

    dich = cfg.get("dichotomy")
    if dich is not None:
        if not isinstance(dich, dict):
            problems.append("dichotomy: must be a mapping")
        else:
            family = dich.get("family")
            if family not in FIXTURE_NAMES:
                problems.append(f"dichotomy.family: unknown fixture {family!r}")
            else:
                values["dichotomy_family"] = family
            eps_list = dich.get("epsilons")
            if (
                not isinstance(eps_list, list)
                or not eps_list
                or not all(isinstance(e, (int, float)) and not isinstance(e, bool) and e >= 0 for e in eps_list)
            ):
                problems.append("dichotomy.epsilons: must be a non-empty list of numbers >= 0")
            else:
                values["dichotomy_epsilons"] = tuple(float(e) for e in eps_list)
            for key in dich:
                if key not in ("family", "epsilons"):
                    problems.append(f"dichotomy.{key}: unknown key")

    if problems:
        raise ConfigInvalid(sorted(problems))
    return Scenario(**values)


# -- content-addressed cache ----------------------------------------------------


def cache_root() -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path.home() / ".cache" / "anosovlab"


def _field_payload(tf: TrigField | None):
    if tf is None:
        return None
    return [
        [
            [[int(round(c)) for c in row] for row in np.atleast_2d(tf.freqs[i]).tolist()],
            [float(c) for c in np.atleast_1d(tf.cos_coeffs[i]).tolist()],
            [float(c) for c in np.atleast_1d(tf.sin_coeffs[i]).tolist()],
        ]
        for i in range(tf.dim)
    ]


def fixture_payload(f: TorusMap) -> dict:
    """Content identity of a map: matrix plus perturbation data, not the label."""
    return {
        "matrix": [[int(round(v)) for v in row] for row in f.model.matrix.array.tolist()],
        "epsilon": float(f.epsilon),
        "perturbation": _field_payload(f.perturbation),
        "conjugator": _field_payload(f.conjugator),
    }


def content_key(kind: str, payload: dict) -> str:
    blob = kind + "\n" + json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return sha256(blob.encode()).hexdigest()


def _cache_file(key: str, suffix: str) -> Path:
    return cache_root() / key[:2] / (key + suffix)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _cache_get_json(key: str) -> dict | None:
    path = _cache_file(key, ".json")
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None


def _cache_put_json(key: str, obj: dict) -> None:
    _atomic_write(_cache_file(key, ".json"), json.dumps(obj).encode())


def cached_inventory(f: TorusMap, max_period: int, tol: float = 1e-12) -> OrbitInventory:
    """enumerate_orbits with a disk cache; hits rebuild the inventory verbatim."""
    key = content_key(
        "orbits",
        {"fixture": fixture_payload(f), "max_period": max_period, "tol": tol},
    )
    npz_path = _cache_file(key, ".npz")
    meta = _cache_get_json(key)
    if meta is not None and npz_path.exists():
        try:
            with np.load(npz_path, allow_pickle=False) as data:
                return _inventory_from_arrays(dict(data.items()), meta)
        except (OSError, ValueError, KeyError):
            pass  # corrupt entry: fall through to a cold run
    inv = enumerate_orbits(f, max_period, tol=tol)
    arrays, meta = _inventory_to_arrays(inv)
    buf_path = _cache_file(key, ".npz")
    buf_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = buf_path.with_suffix(".npz.tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, buf_path)
    _cache_put_json(key, meta)
    return inv


def _inventory_to_arrays(inv: OrbitInventory) -> tuple[dict, dict]:
    orbits = inv.orbits
    pts = (
        np.concatenate([o.points for o in orbits])
        if orbits
        else np.zeros((0, 0))
    )
    arrays = {
        "points": pts,
        "periods": np.array([o.period for o in orbits], dtype=int),
        "translations": np.array([o.translation_class for o in orbits], dtype=int).reshape(len(orbits), -1),
        "exponents": np.array([o.stable_exponents for o in orbits], dtype=float).reshape(len(orbits), -1),
        "residuals": np.array([o.residual for o in orbits], dtype=float),
    }
    meta = {
        "expected": [[n, c] for n, c in sorted(inv.expected_counts.items())],
        "found": [[n, c] for n, c in sorted(inv.found_counts.items())],
        "failures": [[n, list(seed), res] for n, seed, res in inv.failures],
    }
    return arrays, meta


def _inventory_from_arrays(arrays: dict, meta: dict) -> OrbitInventory:
    periods = arrays["periods"]
    orbits, offset = [], 0
    for idx, n in enumerate(periods):
        n = int(n)
        orbits.append(
            PeriodicOrbit(
                points=arrays["points"][offset : offset + n].copy(),
                period=n,
                translation_class=tuple(int(c) for c in arrays["translations"][idx]),
                stable_exponents=tuple(float(v) for v in arrays["exponents"][idx]),
                residual=float(arrays["residuals"][idx]),
                orbit_id=idx,
            )
        )
        offset += n
    return OrbitInventory(
        orbits=tuple(orbits),
        expected_counts={int(n): int(c) for n, c in meta["expected"]},
        found_counts={int(n): int(c) for n, c in meta["found"]},
        failures=tuple((int(n), tuple(seed), float(r)) for n, seed, r in meta["failures"]),
    )


# -- report plumbing -------------------------------------------------------------


@dataclass
class StageOutcome:
    name: str
    summary: list  # (key, value-string) pairs
    findings: list
    files: list


@dataclass(frozen=True)
class ScenarioResult:
    exit_code: int
    findings: tuple[str, ...]
    files: tuple[str, ...]
    summary_path: str
    error: str | None = None


def _write_csv(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(rows)


def _yn(flag: bool) -> str:
    return "yes" if flag else "no"


def _kv_csv(pairs: list) -> list:
    return [["property", "value"]] + [[k, v] for k, v in pairs]


# -- stages ----------------------------------------------------------------------


def _stage_analyze(f: TorusMap, sc: Scenario, out: Path) -> StageOutcome:
    m = f.model
    pairs = [
        ("fixture", f.label),
        ("dim", str(m.dim)),
        ("matrix", "; ".join(" ".join(str(int(round(v))) for v in row) for row in m.matrix.array.tolist())),
        ("char_poly", " ".join(str(c) for c in m.char_poly)),
        ("degree", str(m.degree)),
        ("irreducible", _yn(m.irreducible)),
        ("stable_dim", str(m.stable_dim)),
        ("stable_eigenvalues", " ".join(float_cell(v) for v in m.stable_eigenvalues)),
        ("stable_exponents", " ".join(float_cell(v) for v in m.stable_exponents)),
        ("unstable_moduli", " ".join(float_cell(v) for v in m.unstable_moduli)),
        ("stable_norm", float_cell(m.stable_norm)),
        ("unstable_conorm", float_cell(m.unstable_conorm)),
    ]
    _write_csv(out / "analyze.csv", _kv_csv(pairs))

    k_max = 8 if m.dim == 2 else 5
    table = covering_radius_table(m.matrix, k_max)
    rows = [["k", "radius", "bound", "fitted_constant"]]
    for entry in table:
        rows.append([
            str(entry["k"]),
            float_cell(entry["radius"]),
            float_cell(entry["bound"]),
            float_cell(entry["fitted_constant"]),
        ])
    _write_csv(out / "covering.csv", rows)

    # descriptive only: the k=1 fitted bound is tight for the 2x2 model but
    # reducible matrices with a unimodular block never equidistribute preimages
    violations = [e["k"] for e in table[1:] if e["radius"] > e["bound"] * (1 + 1e-9)]
    summary = pairs + [
        ("covering_r0", float_cell(table[0]["radius"])),
        ("covering_constant", float_cell(table[0]["fitted_constant"])),
        ("covering_bound_held", _yn(not violations)),
    ]
    return StageOutcome("analyze", summary, [], ["analyze.csv", "covering.csv"])


def _stage_certify(f: TorusMap, sc: Scenario, out: Path) -> StageOutcome:
    margin, worst = local_diffeo_margin(f)
    findings = []
    try:
        cert = anosov_certificate(f)
        pairs = [
            ("certified", _yn(cert.certified)),
            ("grid_n", str(cert.grid_n)),
            ("iterations", str(cert.iterations)),
            ("cone_slope", float_cell(cert.cone_slope)),
            ("expansion_min", float_cell(cert.expansion_min)),
            ("slope_margin_min", float_cell(cert.slope_margin_min)),
            ("backward_expansion_min", float_cell(cert.backward_expansion_min)),
            ("backward_slope_margin_min", float_cell(cert.backward_slope_margin_min)),
            ("grid_sensitivity", float_cell(cert.grid_sensitivity)),
            ("diffeo_margin", float_cell(margin)),
        ]
    except CertificationFailed as exc:
        findings.append(f"cone-field certification failed: {exc}")
        pairs = [
            ("certified", "no"),
            ("failure", str(exc)),
            ("diffeo_margin", float_cell(margin)),
        ]
    _write_csv(out / "certify.csv", _kv_csv(pairs))
    return StageOutcome("certify", pairs, findings, ["certify.csv"])


def _conjugacy_numbers(f: TorusMap, sc: Scenario) -> dict:
    """All conjugacy-stage numbers as JSON-safe data (cacheable)."""
    ce = conjugacy_evaluator(f, residual_target=sc.residual_target, depth=sc.series_depth)
    rng = np.random.default_rng(sc.seed + 29)
    x = rng.random((64, f.dim)) * 2.0 - 0.5
    lhs = ce.apply(x) @ f.model.array.T
    rhs = ce.apply(f.evaluate(x))
    residual = float(np.abs(lhs - rhs).max())
    y = rng.random((32, f.dim))
    roundtrip = float(np.abs(ce.apply_inverse(ce.apply(y)) - y).max())

    rep = specialness_defect(
        ce, samples=sc.points, seed=sc.seed + 11, threshold=sc.specialness_threshold
    )
    decay = deep_translation_decay(ce, m_max=6, samples=12, seed=sc.seed + 31)
    return {
        "series_depth": ce.series_depth,
        "tail_bound": float(ce.tail_bound),
        "sup_bound": float(ce.sup_bound),
        "residual": residual,
        "roundtrip": roundtrip,
        "special": bool(rep.special),
        "max_defect": float(rep.max_defect),
        "max_stable_component": float(rep.max_stable_component),
        "max_unstable_component": float(rep.max_unstable_component),
        "u_sup": float(rep.u_sup_measured),
        "threshold": float(rep.threshold),
        "specialness_rows": [
            [list(pt), int(j), d, s, u] for pt, j, d, s, u in rep.rows
        ],
        "decay_rows": [[int(m), list(vec), dm, dinv] for m, vec, dm, dinv in decay.rows],
        "decay_rate": float(decay.fitted_rate),
        "stable_log_norm": float(decay.stable_log_norm),
    }


def _stage_conjugacy(f: TorusMap, sc: Scenario, out: Path) -> StageOutcome:
    key = content_key(
        "conjugacy",
        {
            "fixture": fixture_payload(f),
            "residual_target": sc.residual_target,
            "depth": sc.series_depth,
            "samples": sc.points,
            "seed": sc.seed,
            "threshold": sc.specialness_threshold,
        },
    )
    data = _cache_get_json(key)
    if data is None:
        data = _conjugacy_numbers(f, sc)
        _cache_put_json(key, data)

    rows = [["point", "direction", "defect", "stable_component", "unstable_component"]]
    for pt, j, d, s, u in data["specialness_rows"]:
        rows.append([
            " ".join(float_cell(c) for c in pt),
            str(j),
            float_cell(d),
            float_cell(s),
            float_cell(u),
        ])
    _write_csv(out / "conjugacy.csv", rows)

    decay_rows = [["m", "n_m", "D_m", "D_m_inverse", "fitted_rate"]]
    for m, vec, dm, dinv in data["decay_rows"]:
        decay_rows.append([
            str(m),
            " ".join(str(int(c)) for c in vec),
            float_cell(dm),
            float_cell(dinv),
            float_cell(data["decay_rate"]),
        ])
    _write_csv(out / "decay.csv", decay_rows)

    findings = []
    if not data["special"]:
        findings.append(
            "conjugacy does not commute with integer translations "
            f"(defect {data['max_defect']:.3e} vs sup|u| {data['u_sup']:.3e}): map is not special"
        )
    pairs = [
        ("series_depth", str(data["series_depth"])),
        ("tail_bound", float_cell(data["tail_bound"])),
        ("sup_bound", float_cell(data["sup_bound"])),
        ("sampled_residual", float_cell(data["residual"])),
        ("roundtrip_error", float_cell(data["roundtrip"])),
        ("special", _yn(data["special"])),
        ("specialness_defect", float_cell(data["max_defect"])),
        ("defect_unstable_component", float_cell(data["max_unstable_component"])),
        ("decay_fitted_rate", float_cell(data["decay_rate"])),
        ("decay_expected_rate", float_cell(data["stable_log_norm"])),
    ]
    return StageOutcome("conjugacy", pairs, findings, ["conjugacy.csv", "decay.csv"])


def _stage_orbits(f: TorusMap, sc: Scenario, out: Path) -> StageOutcome:
    inv = cached_inventory(f, sc.max_period)
    rep = rigidity_report(f, sc.max_period, threshold=sc.rigidity_threshold, inventory=inv)
    _write_csv(out / "orbits.csv", rep.csv_rows())
    findings = []
    if not inv.complete:
        findings.append(
            f"orbit enumeration incomplete: expected {inv.expected_counts}, found {inv.found_counts}"
        )
    if not rep.rigid:
        note = ""
        if not f.model.irreducible:
            note = " (linearization is reducible, so agreement with the linear spectrum is not expected)"
        findings.append(
            f"periodic stable exponents deviate from the linear model by {rep.max_deviation:.3e} "
            f"> {sc.rigidity_threshold:g}{note}"
        )
    pairs = [
        ("orbit_count", str(len(inv))),
        ("counts_complete", _yn(inv.complete)),
        ("linear_exponents", " ".join(float_cell(v) for v in rep.linear_exponents)),
        ("max_deviation", float_cell(rep.max_deviation)),
        ("max_spread", float_cell(rep.max_spread)),
        ("rigid", _yn(rep.rigid)),
    ]
    return StageOutcome("orbits", pairs, findings, ["orbits.csv"])


def _stage_branches(f: TorusMap, sc: Scenario, out: Path) -> StageOutcome:
    rep = integrability_verdict(
        f,
        samples=sc.points,
        codes_per_point=sc.codes_per_point,
        depth=sc.branch_depth,
        tol=sc.spread_tol,
        seed=sc.seed + 13,
    )
    _write_csv(out / "branches.csv", rep.csv_rows())
    findings = []
    if not rep.integrable:
        findings.append(
            f"unstable direction depends on the backward branch: spread {rep.max_spread:.3e} rad "
            f"> {rep.tol:g} (witness at {rep.witness['point']})"
        )
    pairs = [
        ("integrable", _yn(rep.integrable)),
        ("max_spread", float_cell(rep.max_spread)),
        ("spread_tol", float_cell(rep.tol)),
        ("depth", str(rep.depth)),
    ]
    return StageOutcome("branches", pairs, findings, ["branches.csv"])


def _stage_metric(f: TorusMap, sc: Scenario, out: Path) -> StageOutcome:
    findings: list = []
    files = ["coboundary.csv", "isometry.csv"]
    phi = stable_log_norm_observable(f, i=1, depth=sc.branch_depth)
    lam = f.model.stable_exponents[0]
    psi = None
    try:
        sol = livschitz_solve(
            f,
            phi,
            fourier_order=sc.fourier_order,
            obstruction_tol=sc.obstruction_tol,
            max_period=sc.max_period,
            seed=sc.seed + 17,
        )
    except ObstructionNonzero as exc:
        sol = exc.solution
        findings.append(
            f"stable log-norm cocycle has a periodic obstruction of {sol.obstruction:.3e}: "
            "no continuous transfer function; affine metric skipped"
        )
    else:
        if abs(sol.mean - lam) > sc.exponent_tol:
            findings.append(
                f"cocycle mean {sol.mean:.8f} differs from the linear stable exponent "
                f"{lam:.8f} by more than {sc.exponent_tol:g}; affine metric skipped"
            )
        else:
            psi = sol.negated()
    _write_csv(out / "coboundary.csv", sol.csv_rows())
    pairs = [
        ("cocycle_mean", float_cell(sol.mean)),
        ("linear_exponent", float_cell(lam)),
        ("fourier_residual", float_cell(sol.residual)),
        ("periodic_obstruction", float_cell(sol.obstruction)),
        ("transfer_sup", float_cell(sol.sup_transfer)),
    ]

    if psi is None:
        iso = ConjugacyIsometryReport(
            status="skipped_non_rigid",
            scale=float("nan"),
            max_relative_deviation=float("nan"),
            pairs=0,
            rows=(),
        )
    else:
        iso = conjugacy_leaf_isometry_check(
            f, samples=sc.pairs, seed=sc.seed + 19, depth=sc.branch_depth, psi=psi
        )
        if iso.max_relative_deviation > sc.isometry_tol:
            findings.append(
                f"conjugacy is not a leaf isometry after scaling: worst deviation "
                f"{iso.max_relative_deviation:.3e} > {sc.isometry_tol:g}"
            )
    _write_csv(out / "isometry.csv", iso.csv_rows())
    pairs += [
        ("isometry_status", iso.status),
        ("isometry_scale", float_cell(iso.scale)),
        ("isometry_max_deviation", float_cell(iso.max_relative_deviation)),
        ("isometry_pairs", str(iso.pairs)),
    ]

    if psi is not None and f.dim == 2:
        try:
            hol = holonomy_isometry_check(
                f, samples=sc.points, seed=sc.seed + 23, psi=psi, depth=sc.branch_depth
            )
        except RefusedNonIntegrable:
            findings.append("unstable holonomy refused: branch-dependent unstable directions")
            pairs.append(("holonomy_status", "refused_non_integrable"))
        else:
            rows = [["sample", "d_s_source", "d_s_image", "relative_defect"]]
            for s, a, b, d in hol.rows:
                rows.append([str(s), float_cell(a), float_cell(b), float_cell(d)])
            _write_csv(out / "holonomy.csv", rows)
            files.append("holonomy.csv")
            if hol.max_relative_defect > sc.isometry_tol:
                findings.append(
                    f"unstable holonomy is not an isometry for the affine metric: worst defect "
                    f"{hol.max_relative_defect:.3e} > {sc.isometry_tol:g}"
                )
            pairs += [
                ("holonomy_status", "ok"),
                ("holonomy_max_defect", float_cell(hol.max_relative_defect)),
                ("holonomy_samples", str(hol.samples)),
            ]
    else:
        reason = "non_rigid" if psi is None else "dim_not_2"
        pairs.append(("holonomy_status", f"skipped_{reason}"))
    return StageOutcome("metric", pairs, findings, files)


_STAGE_FN = {
    "analyze": _stage_analyze,
    "certify": _stage_certify,
    "conjugacy": _stage_conjugacy,
    "orbits": _stage_orbits,
    "branches": _stage_branches,
    "metric": _stage_metric,
}


# -- runner ------------------------------------------------------------------------


def _write_summary(
    path: Path, sc: Scenario, outcomes: list, findings: list, error: str | None, exit_code: int
) -> None:
    lines = [
        f"scenario: {sc.fixture}" + (f" epsilon={sc.epsilon:g}" if sc.epsilon else ""),
        f"seed: {sc.seed}",
        f"stages: {' '.join(o.name for o in outcomes)}",
        "",
    ]
    for o in outcomes:
        lines.append(f"[{o.name}]")
        lines += [f"{k}: {v}" for k, v in o.summary]
        lines.append("")
    lines.append("[findings]")
    lines += findings if findings else ["none"]
    if error:
        lines += ["", "[error]", error]
    lines += ["", f"exit_code: {exit_code}", ""]
    path.write_text("\n".join(lines))


def _write_meta(path: Path, started: float, threads: int) -> None:
    path.write_text(
        "\n".join(
            [
                f"started_unix: {started:.3f}",
                f"elapsed_seconds: {time.time() - started:.3f}",
                f"threads: {threads}",
                f"numpy: {np.__version__}",
                "",
            ]
        )
    )


def run_scenario(sc: Scenario, threads: int = 1) -> ScenarioResult:
    """Execute the configured stages; write CSV reports, summary.txt, run_meta.txt.

    Exit code 0: clean; 2: verdict-level findings (non-special, non-rigid,
    branch-dependent directions, failed certification, metric obstructions);
    1: infrastructure error (reported in the summary, partial files kept).
    """
    started = time.time()
    out = Path(sc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outcomes: list[StageOutcome] = []
    findings: list[str] = []
    files: list[str] = []
    error = None
    try:
        f = sc.build_map()
        for stage in STAGES:
            if stage not in sc.stages:
                continue
            outcome = _STAGE_FN[stage](f, sc, out)
            outcomes.append(outcome)
            findings += [f"{stage}: {msg}" for msg in outcome.findings]
            files += outcome.files
    except AnosovLabError as exc:
        error = f"{type(exc).__name__}: {exc}"
    exit_code = 1 if error else (2 if findings else 0)
    summary_path = out / "summary.txt"
    _write_summary(summary_path, sc, outcomes, findings, error, exit_code)
    _write_meta(out / "run_meta.txt", started, threads)
    return ScenarioResult(
        exit_code=exit_code,
        findings=tuple(findings),
        files=tuple(files),
        summary_path=str(summary_path),
        error=error,
    )


# -- dichotomy sweep ------------------------------------------------------------------


@dataclass(frozen=True)
class DichotomyRow:
    epsilon: float
    specialness_defect: float
    max_branch_spread: float
    rigidity_deviation: float
    special: bool
    integrable: bool
    rigid: bool

    @property
    def agreement(self) -> bool:
        return self.integrable == self.rigid


@dataclass(frozen=True)
class DichotomyReport:
    """Per-epsilon dichotomy diagnostics for one fixture family."""

    family: str
    irreducible: bool
    rows: tuple[DichotomyRow, ...]

    @property
    def all_agree(self) -> bool:
        return all(r.agreement for r in self.rows)

    def co_vanishing(self, zero_level: float = 1e-6) -> bool:
        """All three diagnostics shrink toward zero as epsilon does.

        Values below zero_level count as vanished; above it each diagnostic
        must be nondecreasing in epsilon.
        """
        ordered = sorted(self.rows, key=lambda r: r.epsilon)
        for take in (
            lambda r: r.specialness_defect,
            lambda r: r.max_branch_spread,
            lambda r: r.rigidity_deviation,
        ):
            vals = [take(r) for r in ordered]
            floored = [0.0 if v <= zero_level else v for v in vals]
            if any(b < a for a, b in zip(floored, floored[1:])):
                return False
            if ordered[0].epsilon == 0.0 and floored[0] != 0.0:
                return False
        return True

    def csv_rows(self) -> list:
        out = [[
            "epsilon", "specialness_defect", "max_branch_spread", "rigidity_deviation",
            "special", "integrable", "rigid", "agreement",
        ]]
        for r in self.rows:
            out.append([
                float_cell(r.epsilon),
                float_cell(r.specialness_defect),
                float_cell(r.max_branch_spread),
                float_cell(r.rigidity_deviation),
                _yn(r.special),
                _yn(r.integrable),
                _yn(r.rigid),
                _yn(r.agreement),
            ])
        return out


def _dichotomy_row(family: str, eps: float, sc: Scenario) -> DichotomyRow:
    f = fixture_catalog(family, eps)
    ce = conjugacy_evaluator(f, residual_target=sc.residual_target, depth=sc.series_depth)
    sp = specialness_defect(
        ce, samples=sc.points, seed=sc.seed + 11, threshold=sc.specialness_threshold
    )
    iv = integrability_verdict(
        f,
        samples=sc.points,
        codes_per_point=sc.codes_per_point,
        depth=sc.branch_depth,
        tol=sc.spread_tol,
        seed=sc.seed + 13,
    )
    rep = rigidity_report(
        f,
        sc.max_period,
        threshold=sc.rigidity_threshold,
        inventory=cached_inventory(f, sc.max_period),
    )
    return DichotomyRow(
        epsilon=eps,
        specialness_defect=sp.max_defect,
        max_branch_spread=iv.max_spread,
        rigidity_deviation=rep.max_deviation,
        special=sp.special,
        integrable=iv.integrable,
        rigid=rep.rigid,
    )


def dichotomy_sweep(
    family: str, epsilons, sc: Scenario, threads: int = 1
) -> DichotomyReport:
    """Specialness, branch spread and rigidity per epsilon, in a fixed row order.

    Rows are independent, so they may be computed in a thread pool; the merge
    is by input position and the numbers do not depend on the thread count.
    """
    eps = [float(e) for e in epsilons]
    if threads > 1 and len(eps) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda e: _dichotomy_row(family, e, sc), eps))
    else:
        rows = [_dichotomy_row(family, e, sc) for e in eps]
    irreducible = fixture_catalog(family, eps[0] if eps else 0.0).model.irreducible
    return DichotomyReport(family=family, irreducible=irreducible, rows=tuple(rows))


def run_dichotomy(sc: Scenario, threads: int = 1) -> ScenarioResult:
    """Sweep runner behind the `dichotomy` CLI verb."""
    started = time.time()
    out = Path(sc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    findings: list[str] = []
    outcomes: list[StageOutcome] = []
    error = None
    try:
        if sc.dichotomy_family is None:
            raise ConfigInvalid(["dichotomy: section required for the dichotomy verb"])
        report = dichotomy_sweep(sc.dichotomy_family, sc.dichotomy_epsilons, sc, threads=threads)
        _write_csv(out / "dichotomy.csv", report.csv_rows())
        if report.irreducible and not report.all_agree:
            bad = [r.epsilon for r in report.rows if not r.agreement]
            findings.append(
                f"dichotomy: integrability and rigidity verdicts disagree at epsilon={bad}"
            )
        pairs = [
            ("family", report.family),
            ("irreducible", _yn(report.irreducible)),
            ("epsilons", " ".join(float_cell(r.epsilon) for r in report.rows)),
            ("all_agree", _yn(report.all_agree)),
            ("co_vanishing", _yn(report.co_vanishing())),
        ]
        for r in report.rows:
            pairs.append((
                f"eps_{float_cell(r.epsilon)}",
                f"defect={float_cell(r.specialness_defect)} spread={float_cell(r.max_branch_spread)} "
                f"deviation={float_cell(r.rigidity_deviation)} special={_yn(r.special)} "
                f"integrable={_yn(r.integrable)} rigid={_yn(r.rigid)}",
            ))
        outcomes.append(StageOutcome("dichotomy", pairs, findings, ["dichotomy.csv"]))
    except AnosovLabError as exc:
        error = f"{type(exc).__name__}: {exc}"
    exit_code = 1 if error else (2 if findings else 0)
    summary_path = out / "summary.txt"
    _write_summary(summary_path, sc, outcomes, findings, error, exit_code)
    _write_meta(out / "run_meta.txt", started, threads)
    return ScenarioResult(
        exit_code=exit_code,
        findings=tuple(findings),
        files=tuple(f for o in outcomes for f in o.files),
        summary_path=str(summary_path),
        error=error,
    )
