"""Parser and printer for the mini-IR text format.

Grammar (one statement per line; ``;`` also separates statements)::

    region NAME BASE LENGTH local
    region NAME BASE LENGTH remote ENDPOINT
    fn NAME(p1, p2) {
      LABEL:
      d = const IMM
      d = add A, B            # also mul
      d = cmp PRED A, B       # PRED in eq ne lt le gt ge
      d = load ADDR, SIZE [@local|@remote(E)|@unknown]
      store ADDR, VALUE, SIZE [@...]
      branch COND, LABEL      # taken when COND != 0
      jump LABEL
      [d =] call NAME(args)
      ret [A]
      profile_label ID
      submit_slice ID(args)
      [d1, d2 =] await_mailbox ID
    }

Operands are register names or integer immediates (decimal or 0x-hex).
``#`` starts a comment.
"""

from __future__ import annotations

import re

from .types import (
    CMP_PREDICATES, LINE, LOCAL, OPCODES, UNKNOWN, Diagnostic, Function, Instr,
    Operand, ParseError, Program, RegionDecl, Space, remote,
)

_IDENT = r"[A-Za-z_][A-Za-z0-9_.]*"
_INT = r"-?(?:0[xX][0-9a-fA-F]+|\d+)"
_IDENT_RE = re.compile(_IDENT)
_INT_RE = re.compile(_INT)


class _Bad(Exception):
    pass


def _int(tok: str) -> int:
    tok = tok.strip()
    if not _INT_RE.fullmatch(tok):
        raise _Bad(f"malformed integer '{tok}'")
    return int(tok, 0)


def _reg(tok: str) -> str:
    tok = tok.strip()
    if not _IDENT_RE.fullmatch(tok):
        raise _Bad(f"malformed register '{tok}'")
    return tok


def _operand(tok: str) -> Operand:
    tok = tok.strip()
    if _INT_RE.fullmatch(tok):
        return int(tok, 0)
    if _IDENT_RE.fullmatch(tok):
        return tok
    raise _Bad(f"malformed operand '{tok}'")


def _split_args(text: str) -> list[str]:
    text = text.strip()
    if not text:
        return []
    return [t.strip() for t in text.split(",")]


def _space(tok: str) -> Space:
    tok = tok.strip()
    if tok == "local":
        return LOCAL
    if tok == "unknown":
        return UNKNOWN
    m = re.fullmatch(r"remote\((\d+)\)", tok)
    if m:
        return remote(int(m.group(1)))
    raise _Bad(f"malformed space annotation '@{tok}'")


def _statements(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        code = raw.split("#", 1)[0]
        for piece in re.split(r"([{};])", code):
            piece = piece.strip()
            if piece and piece != ";":
                yield lineno, piece


def _parse_instr(stmt: str) -> Instr:
    m = re.fullmatch(rf"({_IDENT})\s*:", stmt)
    if m:
        return Instr("label", target=m.group(1))

    dests: tuple[str, ...] = ()
    if "=" in stmt:
        lhs, rhs = stmt.split("=", 1)
        dests = tuple(_reg(d) for d in _split_args(lhs))
        if not dests:
            raise _Bad("missing destination")
        stmt = rhs.strip()

    parts = stmt.split(None, 1)
    op = parts[0]
    rest = parts[1] if len(parts) > 1 else ""
    if op not in OPCODES:
        raise _Bad(f"unknown opcode '{op}'")

    def want_dests(n: int) -> None:
        if len(dests) != n:
            raise _Bad(f"{op} takes {n} destination(s)")

    if op == "const":
        want_dests(1)
        return Instr(op, dests, (_int(rest),))
    if op in ("add", "mul"):
        want_dests(1)
        args = _split_args(rest)
        if len(args) != 2:
            raise _Bad(f"{op} takes 2 operands")
        return Instr(op, dests, tuple(_operand(a) for a in args))
    if op == "cmp":
        want_dests(1)
        pm = re.fullmatch(r"(\w+)\s+(.*)", rest)
        if not pm or pm.group(1) not in CMP_PREDICATES:
            raise _Bad("cmp needs a predicate (eq ne lt le gt ge)")
        args = _split_args(pm.group(2))
        if len(args) != 2:
            raise _Bad("cmp takes 2 operands")
        return Instr(op, dests, tuple(_operand(a) for a in args), target=pm.group(1))
    if op in ("load", "store"):
        space = None
        if "@" in rest:
            rest, ann = rest.rsplit("@", 1)
            space = _space(ann)
        args = _split_args(rest)
        if op == "load":
            want_dests(1)
            if len(args) != 2:
                raise _Bad("load takes an address and a size")
            return Instr(op, dests, (_operand(args[0]),), size=_int(args[1]), space=space)
        want_dests(0)
        if len(args) != 3:
            raise _Bad("store takes an address, a value and a size")
        return Instr(op, (), (_operand(args[0]), _operand(args[1])), size=_int(args[2]), space=space)
    if op == "branch":
        want_dests(0)
        args = _split_args(rest)
        if len(args) != 2:
            raise _Bad("branch takes a condition and a label")
        return Instr(op, (), (_operand(args[0]),), target=_reg(args[1]))
    if op in ("jump", "label"):
        want_dests(0)
        return Instr(op, target=_reg(rest))
    if op == "call":
        if len(dests) > 1:
            raise _Bad("call takes at most 1 destination")
        cm = re.fullmatch(rf"({_IDENT})\s*\((.*)\)", rest.strip())
        if not cm:
            raise _Bad("malformed call")
        return Instr(op, dests, tuple(_operand(a) for a in _split_args(cm.group(2))), target=cm.group(1))
    if op == "ret":
        want_dests(0)
        return Instr(op, (), (_operand(rest),) if rest.strip() else ())
    if op == "profile_label":
        want_dests(0)
        return Instr(op, imm=_int(rest))
    if op == "submit_slice":
        want_dests(0)
        sm = re.fullmatch(r"(\d+)\s*\((.*)\)", rest.strip())
        if not sm:
            raise _Bad("malformed submit_slice")
        return Instr(op, (), tuple(_operand(a) for a in _split_args(sm.group(2))), imm=int(sm.group(1)))
    # await_mailbox
    return Instr(op, dests, imm=_int(rest))


def parse_program(text: str, *, check: bool = True) -> Program:
    """Parse IR text; raises :class:`ParseError` carrying line-numbered diagnostics."""
    from .validate import validate

    diags: list[Diagnostic] = []
    regions: list[RegionDecl] = []
    functions: list[Function] = []
    cur: dict | None = None
    uid = 0

    for lineno, stmt in _statements(text):
        try:
            if cur is None:
                if stmt.startswith("region"):
                    toks = stmt.split()
                    if len(toks) == 5 and toks[4] == "local":
                        space = LOCAL
                    elif len(toks) == 6 and toks[4] == "remote":
                        space = remote(_int(toks[5]))
                    else:
                        raise _Bad("malformed region declaration")
                    base, length = _int(toks[2]), _int(toks[3])
                    if base % LINE or length % LINE:
                        raise _Bad(f"unaligned region '{toks[1]}'")
                    if length <= 0:
                        raise _Bad(f"empty region '{toks[1]}'")
                    regions.append(RegionDecl(_reg(toks[1]), base, length, space))
                    continue
                fm = re.fullmatch(rf"fn\s+({_IDENT})\s*\(([^)]*)\)", stmt)
                if fm:
                    params = tuple(_reg(p) for p in _split_args(fm.group(2)))
                    cur = {"name": fm.group(1), "params": params, "body": [],
                           "labels": set(), "line": lineno, "open": False}
                    continue
                _parse_instr(stmt)  # surfaces opcode/operand errors first
                raise _Bad("instruction outside a function")
            if stmt == "{":
                if cur["open"]:
                    raise _Bad("unexpected '{'")
                cur["open"] = True
                continue
            if not cur["open"]:
                raise _Bad("expected '{' after function header")
            if stmt == "}":
                functions.append(Function(cur["name"], cur["params"], tuple(cur["body"])))
                cur = None
                continue
            ins = _parse_instr(stmt)
            if ins.op == "label":
                if ins.target in cur["labels"]:
                    raise _Bad(f"duplicate label {ins.target}")
                cur["labels"].add(ins.target)
            if ins.op in ("load", "store") and not 0 < ins.size <= LINE:
                raise _Bad(f"access size {ins.size} outside 1..64")
            cur["body"].append(Instr(ins.op, ins.dests, ins.args, ins.target, ins.imm,
                                     ins.size, ins.space, uid))
            uid += 1
        except _Bad as exc:
            diags.append(Diagnostic(lineno, str(exc)))

    if cur is not None:
        diags.append(Diagnostic(cur["line"], f"function {cur['name']} is not closed"))
    if diags:
        raise ParseError(diags)
    program = Program(tuple(functions), tuple(regions))
    if check:
        problems = validate(program)
        if problems:
            raise ParseError(problems)
    return program


def _fmt_operand(a: Operand) -> str:
    return str(a)


def format_instr(ins: Instr) -> str:
    op = ins.op
    lhs = ", ".join(ins.dests) + " = " if ins.dests else ""
    ann = f" @{ins.space}" if ins.space is not None else ""
    args = ", ".join(_fmt_operand(a) for a in ins.args)
    if op == "label":
        return f"{ins.target}:"
    if op in ("const", "add", "mul"):
        return f"{lhs}{op} {args}"
    if op == "cmp":
        return f"{lhs}cmp {ins.target} {args}"
    if op == "load":
        return f"{lhs}load {_fmt_operand(ins.args[0])}, {ins.size}{ann}"
    if op == "store":
        return f"store {args}, {ins.size}{ann}"
    if op == "branch":
        return f"branch {_fmt_operand(ins.args[0])}, {ins.target}"
    if op == "jump":
        return f"jump {ins.target}"
    if op == "call":
        return f"{lhs}call {ins.target}({args})"
    if op == "ret":
        return f"ret {args}".rstrip()
    if op == "profile_label":
        return f"profile_label {ins.imm}"
    if op == "submit_slice":
        return f"submit_slice {ins.imm}({args})"
    if op == "await_mailbox":
        return f"{lhs}await_mailbox {ins.imm}"
    raise ValueError(f"cannot format opcode {op}")


def format_program(p: Program) -> str:
    out = []
    for r in p.regions:
        space = "local" if r.space.kind == "local" else f"remote {r.space.endpoint}"
        out.append(f"region {r.name} {r.base:#x} {r.length} {space}")
    for fn in p.functions:
        out.append(f"fn {fn.name}({', '.join(fn.params)}) {{")
        for ins in fn.body:
            indent = "" if ins.op == "label" else "  "
            out.append(indent + format_instr(ins))
        out.append("}")
    return "\n".join(out) + ("\n" if out else "")
