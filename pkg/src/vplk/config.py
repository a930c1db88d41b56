"""Plain-text ``key = value`` run configuration with sections.

Example::

    [grid]
    nv = 16
    vcut = 6.0
    nx = 32
    lx = 12.566370614359172
    dimx = 1

    [scheme]
    dt = cfl
    steps = 1000

Unknown sections or keys, bad types and out-of-range values are all
collected into a single :class:`ConfigError`.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields

# section -> key -> (type, default)
SCHEMA = {
    "grid": {"nv": (int, 16), "vcut": (float, 6.0), "nx": (int, 32), "lx": (float, 4.0 * math.pi),
             "dimx": (int, 1)},
    "kernel": {"kernel_p": (float, -1.0), "conv_mode": (str, "fft")},
    "scheme": {"dt": (str, "cfl"), "cfl": (float, 0.5), "steps": (int, 1000), "implicit_tol": (float, 1e-10),
               "formulation": (str, "sd"), "implicit_solver": (str, "auto")},
    "initial": {"family": (str, "a"), "epsilon": (float, 1e-3)},
    "functionals": {"m": (int, 1), "l": (float, 1.0), "q": (float, 0.0), "s": (float, 0.5), "ell": (int, 1),
                    "sample_every": (int, 1), "violation_tol": (float, 1e-8)},
    "output": {"csv": (str, "run.csv"), "snapshot_every": (int, 0)},
    "run": {"seed": (int, 0)},
}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


def _flat_fields():
    return [(sec, key, typ, default) for sec, keys in SCHEMA.items() for key, (typ, default) in keys.items()]


@dataclass
class RunConfig:
    nv: int = 16
    vcut: float = 6.0
    nx: int = 32
    lx: float = 4.0 * math.pi
    dimx: int = 1
    kernel_p: float = -1.0
    conv_mode: str = "fft"
    dt: str = "cfl"
    cfl: float = 0.5
    steps: int = 1000
    implicit_tol: float = 1e-10
    formulation: str = "sd"
    implicit_solver: str = "auto"
    family: str = "a"
    epsilon: float = 1e-3
    m: int = 1
    l: float = 1.0
    q: float = 0.0
    s: float = 0.5
    ell: int = 1
    sample_every: int = 1
    violation_tol: float = 1e-8
    csv: str = "run.csv"
    snapshot_every: int = 0
    seed: int = 0

    def validate(self) -> "RunConfig":
        p = []
        if self.nv < 2 or self.nv % 2:
            p.append(f"grid.nv must be an even integer >= 2 (got {self.nv})")
        if not self.vcut > 0:
            p.append(f"grid.vcut must be positive (got {self.vcut})")
        if self.nx < 2:
            p.append(f"grid.nx must be >= 2 (got {self.nx})")
        if not self.lx > 0:
            p.append(f"grid.lx must be positive (got {self.lx})")
        if self.dimx not in (1, 2, 3):
            p.append(f"grid.dimx must be 1, 2 or 3 (got {self.dimx})")
        if not self.kernel_p > -3:
            p.append(f"kernel.kernel_p must exceed -3 (got {self.kernel_p})")
        if self.conv_mode not in ("fft", "direct"):
            p.append(f"kernel.conv_mode must be fft or direct (got {self.conv_mode!r})")
        if self.dt != "cfl":
            try:
                if not float(self.dt) > 0:
                    p.append(f"scheme.dt must be positive or 'cfl' (got {self.dt})")
            except ValueError:
                p.append(f"scheme.dt must be a number or 'cfl' (got {self.dt!r})")
        if not 0 < self.cfl <= 1:
            p.append(f"scheme.cfl must lie in (0, 1] (got {self.cfl})")
        if self.steps < 0:
            p.append(f"scheme.steps must be nonnegative (got {self.steps})")
        if not self.implicit_tol > 0:
            p.append(f"scheme.implicit_tol must be positive (got {self.implicit_tol})")
        if self.formulation not in ("sd", "pm"):
            p.append(f"scheme.formulation must be sd or pm (got {self.formulation!r})")
        if self.implicit_solver not in ("auto", "dense", "cg"):
            p.append(f"scheme.implicit_solver must be auto, dense or cg (got {self.implicit_solver!r})")
        if self.family not in ("a", "b", "c"):
            p.append(f"initial.family must be a, b or c (got {self.family!r})")
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            p.append(f"initial.epsilon must be finite and nonnegative (got {self.epsilon})")
        if self.m < 0:
            p.append(f"functionals.m must be nonnegative (got {self.m})")
        if self.l < self.m:
            p.append(f"functionals.l must be at least m (got l={self.l}, m={self.m})")
        if self.q < 0:
            p.append(f"functionals.q must be nonnegative (got {self.q})")
        if not 0 < self.s < 1.5:
            p.append(f"functionals.s must lie in (0, 1.5) (got {self.s})")
        if self.ell < 0:
            p.append(f"functionals.ell must be nonnegative (got {self.ell})")
        if self.sample_every < 1:
            p.append(f"functionals.sample_every must be >= 1 (got {self.sample_every})")
        if not self.violation_tol >= 0:
            p.append(f"functionals.violation_tol must be nonnegative (got {self.violation_tol})")
        if self.snapshot_every < 0:
            p.append(f"output.snapshot_every must be nonnegative (got {self.snapshot_every})")
        if p:
            raise ConfigError(p)
        return self


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    problems = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    values = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            problems.append(f"unknown section [{sec}]")
            continue
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                problems.append(f"unknown key {sec}.{key}")
                continue
            typ = SCHEMA[sec][key][0]
            try:
                if typ is int:
                    values[key] = int(raw)
                elif typ is float:
                    values[key] = float(raw)
                else:
                    values[key] = raw.strip()
            except ValueError:
                problems.append(f"{sec}.{key}: cannot parse {raw!r} as {typ.__name__}")
    if problems:
        raise ConfigError(problems)
    cfg = RunConfig(**values)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(problems + exc.problems) from None
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    return parse_config(text)


def _fmt(x) -> str:
    return repr(x) if isinstance(x, float) else str(x)


def serialize_config(cfg: RunConfig) -> str:
    out = []
    for sec, keys in SCHEMA.items():
        out.append(f"[{sec}]")
        for key in keys:
            out.append(f"{key} = {_fmt(getattr(cfg, key))}")
        out.append("")
    return "\n".join(out)


assert {f.name for f in fields(RunConfig)} == {k for _, k, _, _ in _flat_fields()}
