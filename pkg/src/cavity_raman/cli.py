"""Command-line front end.

Configuration files are ``key = value`` lines (``#`` starts a comment).
Keys carry their unit in the name (``omega0_khz``, ``waist_mm``,
``tau_a_ms``...); values are converted to SI once, when parsed.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analytic, experiments
from .evolve import IntegrationAccuracyError
from .fockspace import DegenerateConditionError, TruncationError
from .model import SystemParams, khz, to_khz

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("scan", "prepare", "ramsey", "analytic", "scenario")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _float(key, text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite")
    return value


def _int(key, text):
    value = _float(key, text)
    if value != int(value):
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return int(value)


def _bool(key, text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _field(key, text):
    kind, _, mean = text.partition(":")
    try:
        return experiments.FieldSpec(kind.strip(), _float(key, mean or "0"))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _positive(key, value):
    if not value > 0:
        raise ConfigError(f"{key}: must be strictly positive")
    return value


def _nonneg(key, value):
    if value < 0:
        raise ConfigError(f"{key}: must be non-negative")
    return value


# key -> (default text, parser)
KEYS = {
    "omega0_khz": ("49", lambda k, t: _nonneg(k, _float(k, t))),
    "delta_khz": ("128", lambda k, t: _positive(k, _float(k, t))),
    "waist_mm": ("6", lambda k, t: _positive(k, _float(k, t))),
    "velocity_mps": ("200", lambda k, t: _positive(k, _float(k, t))),
    "tau_a_ms": ("1.2", lambda k, t: _positive(k, _float(k, t))),
    "tau_b_ms": ("0.9", lambda k, t: _positive(k, _float(k, t))),
    "n_th": ("1", lambda k, t: _nonneg(k, _float(k, t))),
    "relaxation": ("true", _bool),
    # scan
    "scan_start_khz": ("-300", _float),
    "scan_stop_khz": ("150", _float),
    "scan_step_khz": ("5", lambda k, t: _positive(k, _float(k, t))),
    "field_a": ("thermal:1", _field),
    "field_b": ("thermal:1", _field),
    "shots": ("0", lambda k, t: _nonneg(k, _int(k, t))),
    # preparation and probe
    "source_mean": ("6", lambda k, t: _nonneg(k, _float(k, t))),
    "prep_velocity_mps": ("170", lambda k, t: _positive(k, _float(k, t))),
    "t_switch_us": ("5", _float),
    "detuning_before_khz": ("65", _float),
    "detuning_after_khz": ("135", _float),
    "ramsey_points": ("41", lambda k, t: _positive(k, _int(k, t))),
    # imperfections
    "p_enter_g": ("0", lambda k, t: _float(k, t)),
    "background_floor": ("0", lambda k, t: _float(k, t)),
    "ramsey_contrast": ("1", lambda k, t: _float(k, t)),
    "mean_atoms": ("0", lambda k, t: _nonneg(k, _float(k, t))),
    "thermal_growth": ("0", lambda k, t: _nonneg(k, _float(k, t))),
}


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    values: dict
    command: str | None = None
    options: dict = field(default_factory=dict)
    out_dir: Path = Path("out")
    threads: int = 1
    seed: int = 0

    def __getitem__(self, key):
        return self.values[key]

    def echo(self) -> str:
        """Normalized ``key = value`` listing of every setting."""
        return "".join(f"{k} = {self.values[k]!r}\n" for k in sorted(self.values))

    def config_hash(self) -> str:
        text = self.echo() + f"command = {self.command}\noptions = {sorted(self.options.items())}\nseed = {self.seed}\n"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def imperfections(self) -> experiments.ImperfectionModel:
        try:
            return experiments.ImperfectionModel(
                self["p_enter_g"], self["background_floor"], self["ramsey_contrast"],
                self["mean_atoms"], self["thermal_growth"],
            )
        except ValueError as exc:
            raise ConfigError(f"imperfections: {exc}") from None


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` text; missing keys take the default parameter set."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{key}: unknown key")
        if key in raw:
            raise ConfigError(f"{key}: given twice")
        raw[key] = value.strip()
    values = {}
    for key, (default, parse) in KEYS.items():
        values[key] = parse(key, raw.get(key, default))
    try:
        params = SystemParams(
            omega0=khz(values["omega0_khz"]),
            delta=khz(values["delta_khz"]),
            waist=values["waist_mm"] * 1e-3,
            velocity=values["velocity_mps"],
            kappa_a=1.0 / (values["tau_a_ms"] * 1e-3),
            kappa_b=1.0 / (values["tau_b_ms"] * 1e-3),
            n_th_a=values["n_th"],
            n_th_b=values["n_th"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if values["scan_stop_khz"] < values["scan_start_khz"]:
        raise ConfigError("scan_stop_khz: must not be below scan_start_khz")
    cfg = RunConfig(params, values)
    cfg.imperfections()
    return cfg


# -- output -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _header(cfg: RunConfig, truncation) -> str:
    trunc = " ".join(f"{k}={v}" for k, v in truncation)
    return (
        f"# cavity-raman {__version__}\n"
        f"# command {' '.join([str(cfg.command)] + [f'{k}={v}' for k, v in sorted(cfg.options.items())])}\n"
        f"# config_hash {cfg.config_hash()}\n"
        f"# truncation {trunc or 'none'}\n"
    )


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_echo(cfg: RunConfig) -> None:
    _write(cfg.out_dir / "config.echo", f"# config_hash {cfg.config_hash()}\n" + cfg.echo())


def _prep_inputs(cfg: RunConfig) -> dict:
    return dict(
        source_mean=cfg["source_mean"],
        velocity=cfg["prep_velocity_mps"],
        t_switch=cfg["t_switch_us"] * 1e-6,
        detuning_before=khz(cfg["detuning_before_khz"]),
        detuning_after=khz(cfg["detuning_after_khz"]),
    )


def run_scan(cfg: RunConfig) -> Path:
    imp = cfg.imperfections()
    spec = experiments.ScanSpec(
        start=khz(cfg["scan_start_khz"]),
        stop=khz(cfg["scan_stop_khz"]),
        step=khz(cfg["scan_step_khz"]),
        velocity=cfg.params.velocity,
        field_a=cfg["field_a"],
        field_b=cfg["field_b"],
        relaxation=cfg["relaxation"],
        imperfections=None if imp.is_identity else imp,
        params=cfg.params,
    )
    result = experiments.scan_pg_vs_delta(spec, threads=cfg.threads)
    p = result.p_g
    if cfg["shots"] > 0:
        rng = np.random.default_rng(cfg.seed)
        p = rng.binomial(cfg["shots"], np.clip(p, 0.0, 1.0)) / cfg["shots"]
    space = spec.space()
    lines = [_header(cfg, [("n_max_a", space.n_max_a), ("n_max_b", space.n_max_b)]),
             "delta_khz,p_g\n"]
    lines += [f"{_fmt(to_khz(d))},{_fmt(v)}\n" for d, v in zip(result.detunings, p)]
    path = cfg.out_dir / "scan.csv"
    _write(path, "".join(lines))
    return path


def _prepare(cfg: RunConfig) -> experiments.RamanPrepResult:
    ideal = experiments.prepare_two_photon(cfg.params, **_prep_inputs(cfg))
    return experiments.apply_imperfections(ideal, cfg.imperfections())


def run_prepare(cfg: RunConfig) -> Path:
    res = _prepare(cfg)
    space = res.inputs.space()
    trunc = [("n_max_a", space.n_max_a), ("n_max_b", space.n_max_b)]
    lines = [_header(cfg, trunc),
             f"success_probability = {_fmt(res.success_probability)}\n",
             f"p_two = {_fmt(res.p_two)}\n",
             f"mean_b = {_fmt(res.mean_b)}\n",
             f"initial_mean_b = {_fmt(res.initial_mean_b)}\n",
             f"exit_p_two = {_fmt(res.exit_distribution_a[2] if len(res.exit_distribution_a) > 2 else 0.0)}\n",
             f"exit_mean_b = {_fmt(res.exit_mean_b)}\n",
             "mode,n,probability\n"]
    for mode, dist in (("a", res.distribution_a), ("b", res.distribution_b)):
        lines += [f"{mode},{n},{_fmt(p)}\n" for n, p in enumerate(dist)]
    path = cfg.out_dir / "prepare.txt"
    _write(path, "".join(lines))
    joint = [_header(cfg, trunc), "n_a,n_b,probability\n"]
    joint += [f"{a},{b},{_fmt(p)}\n" for (a, b), p in np.ndenumerate(res.joint_distribution)]
    _write(cfg.out_dir / "prepare_joint.csv", "".join(joint))
    return path


def _load_joint(path: Path) -> np.ndarray:
    rows = [line.split(",") for line in path.read_text().splitlines()
            if line and not line.startswith("#") and not line.startswith("n_a")]
    na = max(int(r[0]) for r in rows) + 1
    nb = max(int(r[1]) for r in rows) + 1
    out = np.zeros((na, nb))
    for a, b, p in rows:
        out[int(a), int(b)] = float(p)
    return out / out.sum()


def run_ramsey(cfg: RunConfig) -> Path:
    scenario = cfg.options.get("scenario", "raman")
    kw = _prep_inputs(cfg)
    params = cfg.params.replace(velocity=kw["velocity"])
    probe = experiments.RamseyProbe(params, kw["t_switch"], kw["detuning_after"], kw["source_mean"])
    offsets = probe.default_offsets(cfg["ramsey_points"])
    imp = cfg.imperfections()
    contrast = imp.ramsey_contrast
    if scenario == "raman":
        joint_path = cfg.out_dir / "prepare_joint.csv"
        if joint_path.exists():
            dist = _load_joint(joint_path)
        else:
            dist = _prepare(cfg).joint_distribution
    elif scenario in experiments.SCENARIOS:
        dist = probe.reference_distribution(0 if scenario == "vacuum_ref" else 1)
        if imp.p_enter_g > 0:
            vacuum = probe.reference_distribution(0, dist.shape[1] - 1)
            dist = experiments.mix_distributions(dist, vacuum, imp.p_enter_g)
    else:
        raise ConfigError(f"scenario: unknown Ramsey scenario {scenario!r}")
    res = experiments.fringe_from_distribution(probe, scenario, dist, offsets, contrast, imp.background_floor)
    trunc = [("n_max_a", dist.shape[0] - 1), ("n_max_b", dist.shape[1] - 1)]
    lines = [_header(cfg, trunc), "offset_hz,p_g\n"]
    lines += [f"{_fmt(nu)},{_fmt(p)}\n" for nu, p in res.rows()]
    path = cfg.out_dir / f"ramsey_{scenario}.csv"
    _write(path, "".join(lines))
    report = (_header(cfg, trunc)
              + f"scenario = {scenario}\nreference = {res.reference}\n"
              + f"relative_phase_rad = {_fmt(res.phase)}\ncontrast = {_fmt(res.contrast)}\n"
              + f"ramsey_time_us = {_fmt(res.ramsey_time * 1e6)}\n")
    _write(cfg.out_dir / f"ramsey_{scenario}.txt", report)
    return path


def run_analytic(cfg: RunConfig, stdout=None) -> Path:
    p = cfg.params
    quantity = cfg.options.get("quantity", "raman-coupling")
    n = int(cfg.options.get("n", 6))
    det = khz(float(cfg.options.get("detuning_khz", to_khz(p.delta))))
    if quantity == "raman-coupling":
        value, unit = to_khz(analytic.raman_coupling(n, det, p.delta, p.omega0)), "kHz"
    elif quantity == "light-shift":
        level = cfg.options.get("level", "g")
        value = to_khz(analytic.light_shift(level, int(cfg.options.get("na", 1)), int(cfg.options.get("nb", 0)),
                                            det, p.delta, p.omega0))
        unit = "kHz"
    elif quantity == "resonance":
        value, unit = to_khz(analytic.shifted_raman_resonance(n, p.omega0, p.delta)), "kHz"
    elif quantity == "ramsey-phase":
        kw = _prep_inputs(cfg)
        probe = experiments.RamseyProbe(p.replace(velocity=kw["velocity"]), kw["t_switch"], kw["detuning_after"])
        pa, pb = probe.unit_phases()
        value, unit = pa * int(cfg.options.get("na", 1)) + pb * int(cfg.options.get("nb", 0)), "rad"
    elif quantity == "transfer":
        value, unit = analytic.perturbative_transfer(n, p, det), ""
    else:
        raise ConfigError(f"quantity: unknown analytic quantity {quantity!r}")
    text = f"{quantity} = {value:.2f} {unit}".rstrip()
    print(text, file=stdout or sys.stdout)
    path = cfg.out_dir / f"analytic_{quantity}.txt"
    _write(path, _header(cfg, []) + f"{quantity} = {_fmt(value)} {unit}".rstrip() + "\n")
    return path


def run_scenario(cfg: RunConfig) -> Path:
    kind = cfg.options.get("kind", "fifth")
    n = int(cfg.options.get("n", 6))
    if kind == "reverse":
        res = experiments.scenario_reverse_raman(n, cfg.params)
        body = (f"transfer = {_fmt(res.transfer)}\ndetuning_khz = {_fmt(to_khz(res.detuning))}\n"
                f"mean_b_loss = {_fmt(res.mean_b_loss)}\nmode,n,probability\n"
                + "".join(f"b,{k},{_fmt(x)}\n" for k, x in enumerate(res.distribution_b_given_e)))
        trunc = [("n_max_a", 3), ("n_max_b", n + 2)]
    elif kind == "fifth":
        res = experiments.scenario_fifth_order(n, cfg.params, velocity=cfg.params.velocity)
        body = (f"transfer = {_fmt(res.transfer)}\ndetuning_khz = {_fmt(to_khz(res.detuning))}\n"
                f"velocity_mps = {_fmt(res.velocity)}\n")
        trunc = [("n_max_a", 4), ("n_max_b", n + 1)]
    else:
        raise ConfigError(f"kind: unknown scenario {kind!r}")
    path = cfg.out_dir / f"scenario_{kind}.txt"
    _write(path, _header(cfg, trunc) + body)
    return path


RUNNERS = {"scan": run_scan, "prepare": run_prepare, "ramsey": run_ramsey,
           "analytic": run_analytic, "scenario": run_scenario}

NUMERIC_ERRORS = (
    IntegrationAccuracyError,
    TruncationError,
    DegenerateConditionError,
    experiments.FitError,
    analytic.NoResonanceError,
    analytic.SingularDetuningError,
)


def dispatch(cfg: RunConfig) -> int:
    """Run the selected command; map failures to exit codes (config 2, numerics 3, io 4)."""
    if cfg.command not in RUNNERS:
        print(f"error: unknown command {cfg.command!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        RUNNERS[cfg.command](cfg)
        _write_echo(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value parameter file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads for scan points")
    common.add_argument("--seed", type=int, default=0, help="seed for shot-noise sampling")
    parser = argparse.ArgumentParser(prog="cavity-raman", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("scan", parents=[common], help="P_g versus detuning")
    sub.add_parser("prepare", parents=[common], help="two-photon preparation with freeze")
    r = sub.add_parser("ramsey", parents=[common], help="Ramsey fringe of the prepared field")
    r.add_argument("--scenario", choices=experiments.SCENARIOS, default="raman")
    a = sub.add_parser("analytic", parents=[common], help="perturbative estimates")
    a.add_argument("quantity", choices=("raman-coupling", "light-shift", "resonance", "ramsey-phase", "transfer"))
    a.add_argument("--n", type=int, default=6)
    a.add_argument("--detuning-khz", type=float)
    a.add_argument("--level", choices=("e", "g"), default="g")
    a.add_argument("--na", type=int, default=1)
    a.add_argument("--nb", type=int, default=0)
    s = sub.add_parser("scenario", parents=[common], help="reverse Raman or fifth-order transfer")
    s.add_argument("kind", choices=("reverse", "fifth"))
    s.add_argument("--n", type=int, default=6)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    text = args.config.read_text() if args.config is not None else ""
    cfg = parse_config(text)
    if args.threads < 1:
        raise ConfigError("threads: must be at least 1")
    options = {k: v for k, v in vars(args).items()
               if k not in ("command", "config", "out", "threads", "seed") and v is not None}
    return dataclasses.replace(cfg, command=args.command, options=options, out_dir=args.out,
                               threads=args.threads, seed=args.seed)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
