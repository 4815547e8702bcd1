from timfg.selftest import CHECKS, run_selftest


def test_every_check_passes(capsys):
    assert run_selftest()
    out = capsys.readouterr().out
    assert out.count("PASS") == len(CHECKS)


def test_check_names_unique():
    names = [n for n, _ in CHECKS]
    assert len(names) == len(set(names)) >= 30
