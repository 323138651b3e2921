"""Line-oriented scenario files.

One directive per line, ``#`` starts a comment.  ``fail``, ``monitor``,
``group`` and ``profile`` may repeat; every other directive appears at most
once.  See the README for the full grammar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path as FsPath

from mstte.flowsim import MODES
from mstte.netmodel import NetworkFormatError, _num
from mstte.qos import DROP, MAX_FRAME_BYTES, REMARK

REPEATABLE = {"fail", "monitor", "group", "profile"}


class ScenarioError(NetworkFormatError):
    pass


class EmptyScenarioError(ScenarioError):
    pass


@dataclass(frozen=True)
class FailSpec:
    kind: str
    value: tuple[int, ...]
    at_ms: float = 0.0

    def __str__(self) -> str:
        return f"fail {self.kind} {' '.join(map(str, self.value))} at {_num(self.at_ms)}"


@dataclass(frozen=True)
class GroupSpec:
    gid: int
    root: int
    members: tuple[int, ...]

    def __str__(self) -> str:
        return f"group {self.gid} root {self.root} members {' '.join(map(str, self.members))}"


@dataclass(frozen=True)
class ProfileSpec:
    host: int
    rate: float
    burst: float
    action: str = DROP

    def __str__(self) -> str:
        return f"profile {self.host} rate {_num(self.rate)} burst {_num(self.burst)} action {self.action}"


@dataclass
class Scenario:
    topology: tuple = ()
    traffic: tuple = ()
    modes: tuple[str, ...] = MODES
    failures: list[FailSpec] = field(default_factory=list)
    detect: tuple[float, float] | None = None
    hoplat: float | None = None
    lookup: float | None = None
    rampup: tuple[float, float] | None = None
    monitors: tuple[int, ...] = ()
    groups: list[GroupSpec] = field(default_factory=list)
    loss: float | None = None
    timeout: float | None = None
    retries: int | None = None
    grouplimit: int | None = None
    profiles: list[ProfileSpec] = field(default_factory=list)
    seed: int | None = None
    output: str | None = None
    base_dir: FsPath = field(default=FsPath("."), compare=False)

    @property
    def stochastic(self) -> bool:
        return bool(self.failures) or (bool(self.groups) and bool(self.loss))

    def resolve(self, name: str) -> FsPath:
        p = FsPath(name)
        return p if p.is_absolute() else self.base_dir / p

    def to_text(self) -> str:
        lines = []
        if self.topology[0] == "grid":
            lines.append("grid " + " ".join(_num(x) for x in self.topology[1:]))
        else:
            lines.append(f"topology {self.topology[1]}")
        if self.traffic[0] == "uniform":
            lines.append(f"uniform {_num(self.traffic[1])}")
        else:
            lines.append(f"traffic {self.traffic[1]}")
        lines.append("modes " + " ".join(self.modes))
        lines += [str(f) for f in self.failures]
        if self.detect is not None:
            lines.append(f"detect {_num(self.detect[0])} {_num(self.detect[1])}")
        for key in ("hoplat", "lookup"):
            if getattr(self, key) is not None:
                lines.append(f"{key} {_num(getattr(self, key))}")
        if self.rampup is not None:
            lines.append(f"rampup {_num(self.rampup[0])} {_num(self.rampup[1])}")
        if self.monitors:
            lines.append("monitor " + " ".join(map(str, self.monitors)))
        lines += [str(g) for g in self.groups]
        for key in ("loss", "timeout", "retries", "grouplimit"):
            if getattr(self, key) is not None:
                lines.append(f"{key} {_num(getattr(self, key))}")
        lines += [str(p) for p in self.profiles]
        if self.seed is not None:
            lines.append(f"seed {self.seed}")
        if self.output is not None:
            lines.append(f"output {self.output}")
        return "\n".join(lines) + "\n"


def _ints(args, lineno) -> tuple[int, ...]:
    try:
        return tuple(int(a) for a in args)
    except ValueError:
        raise ScenarioError(lineno, f"expected integers, got {' '.join(args)}") from None


def _float(arg, lineno, lo=None, strict=False) -> float:
    try:
        x = float(arg)
    except ValueError:
        raise ScenarioError(lineno, f"expected a number, got {arg!r}") from None
    if lo is not None and (x < lo or (strict and x == lo)):
        raise ScenarioError(lineno, f"value {arg} must be {'>' if strict else '>='} {_num(lo)}")
    return x


def _interval(args, lineno) -> tuple[float, float]:
    if len(args) != 2:
        raise ScenarioError(lineno, "expected <lo> <hi>")
    lo, hi = (_float(a, lineno, 0) for a in args)
    if lo > hi:
        raise ScenarioError(lineno, f"interval [{args[0]}, {args[1]}] is empty")
    return lo, hi


def _expect(args, n, lineno, usage):
    if len(args) not in ((n,) if isinstance(n, int) else n):
        raise ScenarioError(lineno, f"usage: {usage}")


def parse_scenario(text: str, base_dir: FsPath | str = ".") -> Scenario:
    sc = Scenario(base_dir=FsPath(base_dir))
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *args = line.split()
        if word in seen and word not in REPEATABLE:
            raise ScenarioError(lineno, f"{word!r} given twice")
        if word in ("grid", "topology") and sc.topology:
            raise ScenarioError(lineno, "more than one topology source")
        if word in ("uniform", "traffic") and sc.traffic:
            raise ScenarioError(lineno, "more than one traffic source")
        seen.add(word)
        if word == "grid":
            _expect(args, (2, 3), lineno, "grid <side> <capacity> [hosts-per-switch]")
            side = _ints(args[:1], lineno)[0]
            cap = _float(args[1], lineno, 0, strict=True)
            hosts = _ints(args[2:], lineno)[0] if len(args) == 3 else 1
            if side < 2 or hosts < 1:
                raise ScenarioError(lineno, "grid needs side >= 2 and at least one host per switch")
            sc.topology = ("grid", side, cap, hosts)
        elif word in ("topology", "traffic"):
            _expect(args, 1, lineno, f"{word} <file>")
            if word == "topology":
                sc.topology = ("file", args[0])
            else:
                sc.traffic = ("file", args[0])
        elif word == "uniform":
            _expect(args, 1, lineno, "uniform <rate>")
            sc.traffic = ("uniform", _float(args[0], lineno, 0, strict=True))
        elif word == "modes":
            if not args:
                raise ScenarioError(lineno, "usage: modes <mode>...")
            if args == ["all"]:
                args = list(MODES)
            bad = [m for m in args if m not in MODES]
            if bad:
                raise ScenarioError(lineno, f"unknown mode {bad[0]!r}; choose from {', '.join(MODES)}")
            sc.modes = tuple(args)
        elif word == "fail":
            if len(args) < 2 or args[0] not in ("link", "switch"):
                raise ScenarioError(lineno, "usage: fail link <a> <b> [at <ms>] | fail switch <s> [at <ms>]")
            n = 2 if args[0] == "link" else 1
            value = _ints(args[1 : 1 + n], lineno)
            rest = args[1 + n :]
            at = 0.0
            if rest:
                if len(rest) != 2 or rest[0] != "at":
                    raise ScenarioError(lineno, "expected 'at <ms>' after the failed element")
                at = _float(rest[1], lineno, 0)
            if len(value) != n:
                raise ScenarioError(lineno, f"fail {args[0]} needs {n} switch id(s)")
            sc.failures.append(FailSpec(args[0], value, at))
        elif word in ("detect", "rampup"):
            setattr(sc, word, _interval(args, lineno))
        elif word in ("hoplat", "lookup", "timeout"):
            _expect(args, 1, lineno, f"{word} <ms>")
            setattr(sc, word, _float(args[0], lineno, 0, strict=word == "timeout"))
        elif word == "monitor":
            if not args:
                raise ScenarioError(lineno, "usage: monitor <switch>...")
            sc.monitors += _ints(args, lineno)
        elif word == "group":
            if len(args) < 5 or args[1] != "root" or args[3] != "members":
                raise ScenarioError(lineno, "usage: group <id> root <host> members <host>...")
            gid, root = _ints([args[0], args[2]], lineno)
            sc.groups.append(GroupSpec(gid, root, _ints(args[4:], lineno)))
        elif word == "loss":
            _expect(args, 1, lineno, "loss <p>")
            p = _float(args[0], lineno, 0)
            if p >= 1:
                raise ScenarioError(lineno, "loss probability must be below 1")
            sc.loss = p
        elif word in ("retries", "grouplimit", "seed"):
            _expect(args, 1, lineno, f"{word} <n>")
            n = _ints(args, lineno)[0]
            if n < (1 if word == "grouplimit" else 0):
                raise ScenarioError(lineno, f"{word} out of range")
            setattr(sc, word, n)
        elif word == "profile":
            if len(args) != 7 or args[1:6:2] != ["rate", "burst", "action"]:
                raise ScenarioError(lineno, "usage: profile <host> rate <mbps> burst <bytes> action drop|remark")
            if args[6] not in (DROP, REMARK):
                raise ScenarioError(lineno, f"unknown action {args[6]!r}")
            burst = _float(args[4], lineno, MAX_FRAME_BYTES)
            sc.profiles.append(
                ProfileSpec(_ints(args[:1], lineno)[0], _float(args[2], lineno, 0, strict=True), burst, args[6])
            )
        elif word == "output":
            _expect(args, 1, lineno, "output <dir>")
            sc.output = args[0]
        else:
            raise ScenarioError(lineno, f"unknown directive {word!r}")
    if not seen:
        raise EmptyScenarioError(0, "empty scenario")
    if not sc.topology:
        raise ScenarioError(0, "no topology source (grid or topology)")
    if not sc.traffic:
        raise ScenarioError(0, "no traffic source (uniform or traffic)")
    gids = [g.gid for g in sc.groups]
    if len(set(gids)) != len(gids):
        raise ScenarioError(0, "duplicate group id")
    hosts = [p.host for p in sc.profiles]
    if len(set(hosts)) != len(hosts):
        raise ScenarioError(0, "duplicate profile host")
    return sc


def load_scenario(path: str | FsPath) -> Scenario:
    path = FsPath(path)
    return parse_scenario(path.read_text(), path.parent)
