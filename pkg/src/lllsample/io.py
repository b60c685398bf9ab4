"""Instance and graph files, JSON reports and samples files."""

from __future__ import annotations

import json
import shlex
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

from .core import BadEvent, LLLInstance, Variable
from .errors import InstanceError, RegionError
from .runtime import Network

INSTANCE_HEADER = "lll-instance 1"
GRAPH_HEADER = "lll-graph 1"
REPORT_HEADER = "lllsample-report/1"
SAMPLES_HEADER = "# lllsample-samples/1"


def _fraction(text: str, line: int, path: str | None) -> Fraction:
    try:
        num, _, den = text.partition("/")
        return Fraction(int(num), int(den) if den else 1)
    except (ValueError, ZeroDivisionError):
        raise InstanceError(f"malformed rational {text!r}", line, path) from None


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if body:
            yield no, body


def parse_instance_text(text: str, path: str | None = None) -> LLLInstance:
    """Parse the line format; every diagnostic carries its line number.

    ::

        lll-instance 1
        gamma 5/8                          (optional)
        var x1 2 1/2 1/2                   id, domain size, weights
        event a vbl x1 x2 forbid 1,1 0,1   forbidden tuples (``forbid`` may be empty)
        node a / edge a b                  (optional network annotation)
    """
    lines = list(_lines(text))
    if not lines or lines[0][1] != INSTANCE_HEADER:
        raise InstanceError(f"expected header {INSTANCE_HEADER!r}", lines[0][0] if lines else 1, path)
    variables: dict[str, Variable] = {}
    events: list[BadEvent] = []
    seen_events: set[str] = set()
    gamma = None
    nodes: list[str] = []
    edges: list[tuple[str, str]] = []
    for no, body in lines[1:]:
        tok = body.split()
        kind = tok[0]
        try:
            if kind == "gamma":
                if len(tok) != 2 or gamma is not None:
                    raise InstanceError("expected a single 'gamma p/q' line", no, path)
                gamma = _fraction(tok[1], no, path)
                if not 0 < gamma <= 1:
                    raise InstanceError("gamma must lie in (0, 1]", no, path)
            elif kind == "var":
                if len(tok) < 3:
                    raise InstanceError("expected 'var ID SIZE W1 ... WSIZE'", no, path)
                vid = tok[1]
                if vid in variables:
                    raise InstanceError(f"duplicate variable id {vid!r}", no, path)
                try:
                    size = int(tok[2])
                except ValueError:
                    raise InstanceError(f"domain size {tok[2]!r} is not an integer", no, path) from None
                ws = [_fraction(w, no, path) for w in tok[3:]]
                if size < 1 or len(ws) != size:
                    raise InstanceError(f"variable {vid!r} declares size {size} but lists {len(ws)} weights", no, path)
                variables[vid] = Variable(vid, ws)
            elif kind == "event":
                if len(tok) < 3 or tok[2] != "vbl" or "forbid" not in tok:
                    raise InstanceError("expected 'event ID vbl X... forbid T...'", no, path)
                eid = tok[1]
                if eid in seen_events:
                    raise InstanceError(f"duplicate event id {eid!r}", no, path)
                cut = tok.index("forbid")
                vbl = tok[3:cut]
                if not vbl:
                    raise InstanceError(f"event {eid!r} has an empty scope", no, path)
                for x in vbl:
                    if x not in variables:
                        raise InstanceError(f"event {eid!r} references undeclared variable {x!r}", no, path)
                forb = []
                for item in tok[cut + 1 :]:
                    try:
                        t = tuple(int(a) for a in item.split(","))
                    except ValueError:
                        raise InstanceError(f"malformed tuple {item!r}", no, path) from None
                    if len(t) != len(vbl):
                        raise InstanceError(f"tuple {item!r} has {len(t)} entries for {len(vbl)} variables", no, path)
                    for a, x in zip(t, vbl):
                        if not 0 <= a < variables[x].size:
                            raise InstanceError(f"value {a} is outside the domain of {x!r}", no, path)
                    forb.append(t)
                seen_events.add(eid)
                events.append(BadEvent(eid, vbl, forb))
            elif kind == "node":
                if len(tok) != 2:
                    raise InstanceError("expected 'node ID'", no, path)
                nodes.append(tok[1])
            elif kind == "edge":
                if len(tok) != 3:
                    raise InstanceError("expected 'edge U V'", no, path)
                edges.append((tok[1], tok[2]))
            else:
                raise InstanceError(f"unknown directive {kind!r}", no, path)
        except InstanceError as exc:
            if exc.line is None:
                raise InstanceError(str(exc), no, path) from None
            raise
    network = (tuple(nodes), tuple(edges)) if nodes or edges else None
    if network is not None:
        try:
            Network.from_edges(network[0], network[1])
        except (RegionError, KeyError) as exc:
            raise InstanceError(f"invalid network annotation: {exc}", None, path) from None
    return LLLInstance(variables.values(), events, gamma=gamma, network=network)


def parse_instance(path: str | Path) -> LLLInstance:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceError(f"cannot read instance: {exc.strerror}", None, str(p)) from None
    return parse_instance_text(text, str(p))


def serialize_instance(inst: LLLInstance) -> str:
    out = [INSTANCE_HEADER]
    if inst.gamma is not None:
        out.append(f"gamma {inst.gamma}")
    for x, var in inst.variables.items():
        out.append(" ".join(["var", x, str(var.size), *(str(w) for w in var.weights)]))
    for e, ev in inst.events.items():
        forb = " ".join(",".join(map(str, t)) for t in sorted(ev.forbidden))
        out.append(" ".join(["event", e, "vbl", *ev.vbl, "forbid"]) + (" " + forb if forb else ""))
    if inst.network is not None:
        nodes, edges = inst.network
        out.extend(f"node {v}" for v in nodes)
        out.extend(f"edge {u} {w}" for u, w in edges)
    return "\n".join(out) + "\n"


def parse_graph_text(text: str, path: str | None = None) -> Network:
    """``lll-graph 1`` followed by ``node ID`` and ``edge U V`` lines."""
    lines = list(_lines(text))
    if not lines or lines[0][1] != GRAPH_HEADER:
        raise InstanceError(f"expected header {GRAPH_HEADER!r}", lines[0][0] if lines else 1, path)
    nodes: list[str] = []
    edges: list[tuple[str, str]] = []
    for no, body in lines[1:]:
        tok = body.split()
        if tok[0] == "node" and len(tok) == 2:
            if tok[1] in nodes:
                raise InstanceError(f"duplicate node {tok[1]!r}", no, path)
            nodes.append(tok[1])
        elif tok[0] == "edge" and len(tok) == 3:
            for v in tok[1:]:
                if v not in nodes:
                    raise InstanceError(f"edge uses undeclared node {v!r}", no, path)
            if tok[1] == tok[2]:
                raise InstanceError("self-loops are not allowed", no, path)
            edges.append((tok[1], tok[2]))
        else:
            raise InstanceError(f"unrecognized line {body!r}", no, path)
    return Network.from_edges(nodes, edges)


def parse_graph(path: str | Path) -> Network:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceError(f"cannot read graph: {exc.strerror}", None, str(p)) from None
    return parse_graph_text(text, str(p))


def bundled_path(name: str) -> Path:
    """Path of a bundled instance (``pair``) or graph (``path-3.graph``)."""
    fname = name if "." in name else f"{name}.instance"
    ref = resources.files("lllsample") / "data" / fname
    p = Path(str(ref))
    if not p.exists():
        raise InstanceError(f"no bundled file named {name!r}")
    return p


def load_bundled(name: str) -> LLLInstance:
    return parse_instance(bundled_path(name))


def bundled_names() -> list[str]:
    root = Path(str(resources.files("lllsample") / "data"))
    return sorted(p.stem for p in root.glob("*.instance"))


# reports ------------------------------------------------------------------------------


def _fmt_float(x: float) -> str | None:
    if x != x:
        return None
    if x in (float("inf"), float("-inf")):
        return "inf" if x > 0 else "-inf"
    return format(x, ".12g")


def to_jsonable(obj: Any) -> Any:
    """Rationals become "num/den" strings and floats 12-significant-digit decimals."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, Mapping):
        return {_key(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset, range)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [to_jsonable(v) for v in items]
    if hasattr(obj, "as_dict"):
        return to_jsonable(obj.as_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _key(k: Any) -> str:
    if isinstance(k, tuple):
        return "".join(map(str, k)) if all(isinstance(a, int) and 0 <= a < 10 for a in k) else ",".join(map(str, k))
    return str(k)


def report_text(report: Mapping[str, Any]) -> str:
    doc = {"format": REPORT_HEADER, **report}
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def emit_report(report: Mapping[str, Any], path: str | Path) -> None:
    Path(path).write_text(report_text(report), encoding="utf-8")


def parse_rational(text: str) -> Fraction:
    num, _, den = text.partition("/")
    return Fraction(int(num), int(den) if den else 1)


def samples_text(variables: Iterable[str], rows: Iterable[tuple[int, ...]]) -> str:
    """Header naming the variables, then one line of values per run in declared order."""
    out = [SAMPLES_HEADER + " " + " ".join(shlex.quote(x) for x in variables)]
    for row in rows:
        out.append(" ".join(map(str, row)))
    return "\n".join(out) + "\n"
