from __future__ import annotations

import sys
from collections import Counter
from pathlib import Path

import pytest

from cxloffload.analysis.cost import CostModel
from cxloffload.fabric.messages import DATA_KINDS, MESSAGE_OBSERVERS
from cxloffload.fabric.topology import builtin_topology

sys.path.insert(0, str(Path(__file__).parent))


class PayloadAudit:
    """Watches every fabric message built anywhere in the test session."""

    def __init__(self):
        self.counts: Counter = Counter()
        self.violations: list[str] = []

    def __call__(self, msg) -> None:
        self.counts[msg.kind] += 1
        if msg.kind in DATA_KINDS and (len(msg.payload) != 64 or msg.line % 64):
            self.violations.append(msg.log_line())

    @property
    def data_messages(self) -> int:
        return sum(self.counts[k] for k in DATA_KINDS)


AUDIT = PayloadAudit()
MESSAGE_OBSERVERS.append(AUDIT)

ACCEPTANCE: dict[int, str] = {}     # criterion number -> one-line verdict


@pytest.fixture(scope="session")
def payload_audit() -> PayloadAudit:
    return AUDIT


def pytest_sessionfinish(session, exitstatus):
    if AUDIT.violations:
        print(f"\npayload audit: {len(AUDIT.violations)} data messages without a 64-byte line")
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE.items()):
            terminalreporter.write_line(line)
        verdict = "PASS" if not AUDIT.violations else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion 3 suite-wide: {AUDIT.data_messages} "
                                    f"data messages, {len(AUDIT.violations)} not carrying one 64-byte line")
    terminalreporter.write_line(
        f"payload audit: {AUDIT.data_messages} data-bearing messages, "
        f"{len(AUDIT.violations)} violations")


@pytest.fixture
def line_topo():
    return builtin_topology("line")


@pytest.fixture
def cm():
    return CostModel()


CHASE3 = """
region heap 0x1000 0x400 remote 2
fn main() {
  p = const 0x1000
  n = const 3
L:
  p = load p, 8
  n = add n, -1
  branch n, L
  ret p
}
"""


def chase3_image(program):
    from cxloffload.ir.memory import MemoryImage
    mem = MemoryImage(program.regions)
    mem.set_word(0x1000, 0x1040)
    mem.set_word(0x1040, 0x1080)
    mem.set_word(0x1080, 0)
    return mem
