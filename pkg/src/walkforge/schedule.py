"""Scale sequences for the hierarchical environment.

A schedule fixes, for levels n = 1..N, the tile period a_n, the obstacle
thickness scale b_n, the obstacle offset beta_n, and the conductance levels
eta_n (low, on gates) and K_n (high, on bars; unset until calibrated).
Level 0 is the homogeneous background with a_0 = 1.

Two validation modes exist. Desk mode keeps every structural relation
(parity, divisibility, containment geometry) while dropping the huge
magnitude lower bounds that make the asymptotic regime uncomputable.
Strict mode checks the asymptotic conditions verbatim, labeled (i)-(viii).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace


class ScheduleStructureError(ValueError):
    """Sequence lengths or index conventions are malformed.

    Distinct from condition violations: a structurally broken schedule
    cannot even be inspected, so validate() raises instead of reporting.
    """


@dataclass(frozen=True)
class ParameterSchedule:
    """Immutable scale sequences; index 0..N for a, 1..N for the rest.

    a[0] must be 1. b, beta, eta, K are stored as length-N tuples whose
    slot i holds the level-(i+1) value; use the *_at accessors to stay
    in level coordinates.
    """

    levels: int
    a: tuple[int, ...]
    b: tuple[int, ...]
    beta: tuple[int, ...]
    eta: tuple[float, ...]
    K: tuple
    mode: str = "desk"
    eta_auto: bool = True

    def a_at(self, n: int) -> int:
        if not 0 <= n <= self.levels:
            raise IndexError(f"level {n} outside 0..{self.levels}")
        return self.a[n]

    def half_a(self, n: int) -> int:
        # a'_n = a_n / 2; a_n is even for n >= 1
        return self.a_at(n) // 2

    def b_at(self, n: int) -> int:
        self._check_level(n)
        return self.b[n - 1]

    def beta_at(self, n: int) -> int:
        self._check_level(n)
        return self.beta[n - 1]

    def eta_at(self, n: int) -> float:
        self._check_level(n)
        return self.eta[n - 1]

    def K_at(self, n: int):
        self._check_level(n)
        return self.K[n - 1]

    def with_K(self, n: int, value: float) -> "ParameterSchedule":
        """A copy with K_n set (calibration writes results through this)."""
        self._check_level(n)
        if not value > 0:
            raise ValueError("K must be positive")
        K = list(self.K)
        K[n - 1] = float(value)
        return replace(self, K=tuple(K))

    def _check_level(self, n: int) -> None:
        if not 1 <= n <= self.levels:
            raise IndexError(f"level {n} outside 1..{self.levels}")

    def to_dict(self) -> dict:
        return {
            "levels": self.levels,
            "a": list(self.a),
            "b": list(self.b),
            "beta": list(self.beta),
            "eta": list(self.eta),
            "K": list(self.K),
            "mode": self.mode,
            "eta_auto": self.eta_auto,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSchedule":
        try:
            return cls(
                levels=int(d["levels"]),
                a=tuple(int(v) for v in d["a"]),
                b=tuple(int(v) for v in d["b"]),
                beta=tuple(int(v) for v in d["beta"]),
                eta=tuple(float(v) for v in d["eta"]),
                K=tuple(None if v is None else float(v) for v in d["K"]),
                mode=str(d.get("mode", "desk")),
                eta_auto=bool(d.get("eta_auto", True)),
            )
        except KeyError as exc:
            raise ScheduleStructureError(f"missing schedule field {exc}") from exc


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate(): labeled violations plus informational flags."""

    mode: str
    violations: tuple
    flags: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def labels(self) -> list:
        return [label for label, _ in self.violations]

    def __str__(self) -> str:
        if self.ok and not self.flags:
            return f"schedule valid ({self.mode} mode)"
        lines = [f"{label}: {msg}" for label, msg in self.violations]
        lines += [f"[flag] {label}: {msg}" for label, msg in self.flags]
        return "\n".join(lines) or f"schedule valid ({self.mode} mode)"


def eta_of(n: int, b_n: int) -> float:
    """Low conductance level for scale n: b_n^-(1 + 1/n)."""
    if n < 1:
        raise ValueError("level must be >= 1")
    if b_n < 2:
        raise ValueError("b_n must be >= 2")
    return float(b_n) ** -(1.0 + 1.0 / n)


def _check_structure(s: ParameterSchedule) -> None:
    if s.levels < 1:
        raise ScheduleStructureError("schedule needs at least one level")
    if len(s.a) != s.levels + 1:
        raise ScheduleStructureError(
            f"a has length {len(s.a)}, expected levels+1 = {s.levels + 1}")
    for name, seq in (("b", s.b), ("beta", s.beta), ("eta", s.eta), ("K", s.K)):
        if len(seq) != s.levels:
            raise ScheduleStructureError(
                f"{name} has length {len(seq)}, expected levels = {s.levels}")
    for name, seq in (("a", s.a), ("b", s.b), ("beta", s.beta)):
        for v in seq:
            if not isinstance(v, int) or isinstance(v, bool):
                raise ScheduleStructureError(f"{name} entries must be integers")
            if v <= 0:
                raise ScheduleStructureError(f"{name} entries must be positive")
    if s.a[0] != 1:
        raise ScheduleStructureError("a[0] must equal 1")
    if s.mode not in ("desk", "strict"):
        raise ScheduleStructureError(f"unknown mode {s.mode!r}")


def validate(s: ParameterSchedule) -> ValidationReport:
    """Check every condition for the schedule's mode.

    Returns a report listing violated conditions by label; an empty
    report means the schedule is usable. Structural problems (wrong
    sequence lengths, a[0] != 1) raise ScheduleStructureError instead.
    """
    _check_structure(s)
    bad = []
    flags = []
    N = s.levels

    for n in range(1, N + 1):
        a, b, beta = s.a_at(n), s.b_at(n), s.beta_at(n)
        ap = s.a_at(n - 1)
        if a % 2 != 0:
            bad.append(("(i)", f"a_{n} = {a} is odd"))
        if b % ap != 0:
            bad.append(("(ii)", f"a_{n-1} = {ap} does not divide b_{n} = {b}"))
        if beta % b != 0:
            bad.append(("(ii)", f"b_{n} = {b} does not divide beta_{n} = {beta}"))
        if a % b != 0:
            bad.append(("(ii)", f"b_{n} = {b} does not divide a_{n} = {a}"))
        if not ap < b < beta < a:
            bad.append(("ordering",
                        f"level {n} breaks a_{n-1} < b_n < beta_n < a_n: "
                        f"{ap}, {b}, {beta}, {a}"))
        if not s.eta_at(n) > 0:
            bad.append(("positivity", f"eta_{n} must be positive"))
        if s.K_at(n) is not None and not s.K_at(n) > 0:
            bad.append(("positivity", f"K_{n} must be positive when set"))
        if s.eta_auto:
            want = eta_of(n, b) if b >= 2 else None
            if want is not None and not math.isclose(s.eta_at(n), want,
                                                     rel_tol=1e-12):
                bad.append(("eta-formula",
                            f"eta_{n} = {s.eta_at(n)!r} but auto-derived "
                            f"value is {want!r}"))

        if s.mode == "desk":
            if beta < 11 * b:
                bad.append(("desk-fit",
                            f"beta_{n} = {beta} < 11 b_{n} = {11 * b}; the "
                            f"obstacle would poke out of its inner region"))
            if 8 * beta > a:
                bad.append(("desk-room",
                            f"8 beta_{n} = {8 * beta} > a_{n} = {a}; the "
                            f"inner region would not fit in the tile"))
        else:
            if n == 1 and b < 10**10:
                bad.append(("(iii)", f"b_1 = {b} < 10^10"))
            if not a / math.sqrt(2 * n) <= b <= a / math.sqrt(n):
                bad.append(("(iv)",
                            f"b_{n} = {b} outside [a_n/sqrt(2n), a_n/sqrt(n)]"
                            f" = [{a / math.sqrt(2 * n):.6g},"
                            f" {a / math.sqrt(n):.6g}]"))
            if n < N and s.b_at(n + 1) < 2**n * b:
                bad.append(("(v)", f"b_{n+1} = {s.b_at(n+1)} < 2^{n} b_{n}"
                                   f" = {2**n * b}"))
            if not b > 40 * ap:
                bad.append(("(vi)", f"b_{n} = {b} <= 40 a_{n-1} = {40 * ap}"))
            if not (100 * b < beta <= b * n**0.25 < 2 * beta < a / 10):
                bad.append(("(viii)",
                            f"level {n} breaks 100 b_n < beta_n <= b_n n^(1/4)"
                            f" < 2 beta_n < a_n/10 (asymptotic condition,"
                            f" stated only for n large enough)"))

    if s.mode == "strict":
        flags.append(("(vii)",
                      "b_n large enough for external sharp heat-kernel"
                      " estimates: no effective bound exists, recorded"
                      " but not enforced"))
        flags.append(("(clubsuit)",
                      "a_n large enough that the level-(n-1) rescaled walk"
                      " is close to its scaling limit: no effective bound,"
                      " measured by experiments instead"))

    return ValidationReport(mode=s.mode, violations=tuple(bad),
                            flags=tuple(flags))


def default_desk_schedule(N: int) -> ParameterSchedule:
    """Smallest-footprint desk schedule: b_n = 4 a_{n-1}, beta_n = 11 b_n,
    a_n = 8 beta_n, eta auto-derived, K unset.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    a = [1]
    b, beta, eta = [], [], []
    for n in range(1, N + 1):
        bn = 4 * a[-1]
        betan = 11 * bn
        b.append(bn)
        beta.append(betan)
        eta.append(eta_of(n, bn))
        a.append(8 * betan)
    return ParameterSchedule(levels=N, a=tuple(a), b=tuple(b),
                             beta=tuple(beta), eta=tuple(eta),
                             K=(None,) * N, mode="desk")


def roomy_desk_schedule(N: int, b1: int = 2) -> ParameterSchedule:
    """Desk schedule with slack between the outer-region threshold 4 beta_n
    and the tile half-width, so the far region of every level is nonempty.

    The default generator sits exactly at 8 beta_n = a_n, which makes the
    set of points farther than 4 beta_n from all tile centers empty; the
    excursion machinery then never fires. This generator uses a_n = 92 b_n
    (= 8 beta_n + 4 b_n), leaving a corner band of width 2 b_n per tile.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if b1 < 2:
        raise ValueError("b1 must be >= 2")
    a = [1]
    b, beta, eta = [], [], []
    for n in range(1, N + 1):
        bn = b1 if n == 1 else 4 * a[-1]
        b.append(bn)
        beta.append(11 * bn)
        eta.append(eta_of(n, bn))
        a.append(92 * bn)
    return ParameterSchedule(levels=N, a=tuple(a), b=tuple(b),
                             beta=tuple(beta), eta=tuple(eta),
                             K=(None,) * N, mode="desk")


def schedule_hash(s: ParameterSchedule) -> str:
    """Stable content hash used to stamp reports."""
    blob = json.dumps(s.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
