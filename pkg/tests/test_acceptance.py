"""One pass/fail line per acceptance criterion, repeated in the terminal summary."""

import pytest

from walshuniv import verify

LINES: list[str] = []

# (number, runner, time limit in seconds)
CRITERIA = [
    (1, verify.walsh_identities, 1),
    (2, verify.transform_correctness, 10),
    (3, verify.lemma1_suite, 30),
    (4, verify.lemma2_suite, 300),
    (5, verify.lemma3_suite, 300),
    (6, verify.lemma4_build, 600),
    (7, verify.greedy_runs, 600),
    (8, verify.negative_control, 60),
    (9, verify.property_suites, 300),
]


def _line(n, rec, limit):
    ok = rec["ok"] and rec["seconds"] < limit
    line = (f"criterion {n} [{rec['id']}]: {'PASS' if ok else 'FAIL'} "
            f"({rec['seconds']:.2f}s, limit {limit}s)")
    LINES.append(line)
    print("\n" + line)
    return ok


@pytest.mark.parametrize("n,run,limit", CRITERIA, ids=[c[1].__name__ for c in CRITERIA])
def test_criterion(n, run, limit):
    try:
        rec = run()
    except Exception as e:
        LINES.append(f"criterion {n} [{run.__name__}]: FAIL ({type(e).__name__}: {e})")
        raise
    ok = _line(n, rec, limit)
    assert rec["ok"], rec
    assert ok, f"criterion {n} took {rec['seconds']:.1f}s"
