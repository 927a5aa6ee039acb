import numpy as np
import pytest

from chanlingo.predictor import WindowedDataset

# Top-10 rows of a measured-channel vocabulary: (ID, CC, frequency).
TABLE_TOP10 = [
    (1, "+0.02-0.02i", 538211),
    (2, "-0.02+0.02i", 536925),
    (3, "-0.02-0.02i", 535761),
    (4, "+0.02+0.02i", 534726),
    (5, "-0.02+0.01i", 373125),
    (6, "-0.01+0.02i", 371946),
    (7, "+0.01+0.02i", 371856),
    (8, "-0.02-0.01i", 371778),
    (9, "-0.01-0.02i", 371682),
    (10, "+0.01-0.02i", 371673),
]


def parse_cc(text):
    return complex(text.replace("i", "j"))


def table_vccf_text():
    lines = [f"# vccf v1 step=0.01 X={len(TABLE_TOP10)} L=0"]
    for tid, cc, freq in TABLE_TOP10:
        z = parse_cc(cc)
        lines.append(f"{tid} {z.real:.2f} {z.imag:.2f} {freq}")
    return "\n".join(lines) + "\n"


@pytest.fixture
def table_vccf(tmp_path):
    path = tmp_path / "table.vccf"
    path.write_text(table_vccf_text())
    return path


def periodic_windows(count, M, N, period=7, num_tokens=8, seed=0, vocabulary_hash=7):
    """Windows cut from random periodic token sequences (one pattern per window).

    The continuation is fully determined once a whole period has been seen, so a
    model that reads its history well can drive the loss towards zero.
    """
    rng = np.random.default_rng(seed)
    patterns = rng.integers(1, num_tokens + 1, (count, period))
    phase = rng.integers(0, period, count)
    idx = (phase[:, None] + np.arange(M + N)[None]) % period
    seq = np.take_along_axis(patterns, idx, axis=1)
    return WindowedDataset(seq[:, :M], seq[:, M:], np.zeros(count, complex), vocabulary_hash)


def periodic_stream(length, period=7, num_tokens=8, segment=70, seed=0):
    """One long token stream made of periodic segments with fresh random patterns."""
    rng = np.random.default_rng(seed)
    parts = []
    while sum(len(p) for p in parts) < length:
        pattern = rng.integers(1, num_tokens + 1, period)
        parts.append(np.resize(pattern, segment))
    return np.concatenate(parts)[:length]


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
