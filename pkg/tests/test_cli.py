import csv
import io
import re
import subprocess
import sys

import pytest

from mstte import cli
from mstte.cli import EXIT_INVARIANT, EXIT_OK, EXIT_PARSE, EXIT_USAGE, compare_reports, main

FULL = """\
grid 4 100
uniform 10
modes all
fail link 5 6 at 50
fail switch 10
rampup 300 400
monitor 0
group 1 root 0 members 5 10 15
group 2 root 3 members 12
loss 0.05
profile 0 rate 50 burst 3000 action remark
profile 5 rate 20 burst 3000 action drop
seed 7
"""


def write(tmp_path, text, name="s.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


class TestRun:
    def test_three_modes(self, tmp_path, capsys):
        s = write(tmp_path, "grid 4 100\nuniform 10\nmodes all\n")
        assert main(["run", str(s), "--out", str(tmp_path / "r")]) == EXIT_OK
        table = rows(tmp_path / "r" / "throughput.csv")
        assert [r["mode"] for r in table] == ["single", "multi", "multi+backup"]
        assert [float(r["aggregate_mbps"]) for r in table] == [920, 1860, 1860]
        assert "throughput multi: 1860.000 Mbps" in capsys.readouterr().out
        assert (tmp_path / "r" / "vlans.txt").read_text().startswith("vlan 1: ")

    def test_summary_to_stdout_without_output(self, tmp_path, capsys):
        s = write(tmp_path, "grid 3 100\nuniform 1\nmodes single\n")
        assert main(["run", str(s)]) == EXIT_OK
        assert capsys.readouterr().out.startswith("switches 9 links 12 hosts 9 demands 72\n")

    def test_output_line_relative_to_scenario(self, tmp_path):
        s = write(tmp_path, "grid 3 100\nuniform 1\noutput res\n")
        assert main(["run", str(s)]) == EXIT_OK
        assert (tmp_path / "res" / "throughput.csv").exists()

    def test_full_scenario_writes_every_report(self, tmp_path):
        s = write(tmp_path, FULL)
        assert main(["run", str(s), "--out", str(tmp_path / "r")]) == EXIT_OK
        names = {p.name for p in (tmp_path / "r").iterdir()}
        assert {"throughput.csv", "failover.csv", "multicast.csv", "policing.csv", "paths.txt", "vlans.txt", "summary.txt"} <= names
        pol = {r["host"]: r for r in rows(tmp_path / "r" / "policing.csv")}
        assert float(pol["0"]["conform_mbps"]) == 50 and pol["0"]["action"] == "remark"
        assert float(pol["5"]["excess_mbps"]) == 150 - 20
        mc = rows(tmp_path / "r" / "multicast.csv")
        assert [r["group"] for r in mc] == ["1", "2"]
        assert all(int(r["acks"]) <= int(r["members"]) for r in mc)
        fo = rows(tmp_path / "r" / "failover.csv")
        assert {r["failure"] for r in fo} == {"link 5-6", "switch 10"}

    def test_network_files(self, tmp_path):
        write(tmp_path, "switch 0\nswitch 1\nswitch 2\nlink 0 1 10\nlink 1 2 10\nhost 0 0\nhost 1 2\n", "net.txt")
        write(tmp_path, "demand 0 1 4\ndemand 1 0 4\n", "tm.txt")
        s = write(tmp_path, "topology net.txt\ntraffic tm.txt\nmodes multi\n")
        assert main(["run", str(s), "--out", str(tmp_path / "r")]) == EXIT_OK
        assert float(rows(tmp_path / "r" / "throughput.csv")[0]["aggregate_mbps"]) == 8

    def test_same_seed_identical_bytes(self, tmp_path):
        s = write(tmp_path, FULL)
        for d in ("r1", "r2"):
            assert main(["run", str(s), "--out", str(tmp_path / d)]) == EXIT_OK
        for p in (tmp_path / "r1").iterdir():
            assert p.read_bytes() == (tmp_path / "r2" / p.name).read_bytes()

    def test_seed_flag_overrides(self, tmp_path):
        s = write(tmp_path, FULL.replace("seed 7\n", ""))
        assert main(["run", str(s)]) == EXIT_PARSE
        assert main(["run", str(s), "--seed", "7", "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(["run", str(write(tmp_path, FULL, "t.txt")), "--out", str(tmp_path / "b")]) == EXIT_OK
        assert (tmp_path / "a" / "failover.csv").read_text() == (tmp_path / "b" / "failover.csv").read_text()

    def test_different_seed_changes_draws(self, tmp_path):
        s = write(tmp_path, FULL)
        main(["run", str(s), "--out", str(tmp_path / "a")])
        main(["run", str(s), "--seed", "8", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "failover.csv").read_text() != (tmp_path / "b" / "failover.csv").read_text()

    def test_check_mode_writes_nothing(self, tmp_path, capsys):
        s = write(tmp_path, FULL + "output res\n")
        assert main(["run", str(s), "--check"]) == EXIT_OK
        assert capsys.readouterr().out == "ok: all invariants hold\n"
        assert not (tmp_path / "res").exists()


class TestExitCodes:
    def test_empty_scenario(self, tmp_path, capsys):
        assert main(["run", str(write(tmp_path, "# nothing\n"))]) == EXIT_USAGE
        assert "empty" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.txt")]) == EXIT_USAGE

    def test_usage(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == EXIT_USAGE

    def test_parse_error_names_line(self, tmp_path, capsys):
        s = write(tmp_path, "grid 4 100\nuniform 10\nfail link 1\n")
        assert main(["run", str(s)]) == EXIT_PARSE
        assert "line 3:" in capsys.readouterr().err

    def test_bad_network_file_line(self, tmp_path, capsys):
        write(tmp_path, "switch 0\nlink 0 zz 1\n", "net.txt")
        s = write(tmp_path, "topology net.txt\nuniform 1\n")
        assert main(["run", str(s)]) == EXIT_PARSE
        assert "net.txt" in capsys.readouterr().err

    def test_unknown_failed_link(self, tmp_path):
        s = write(tmp_path, "grid 3 100\nuniform 1\nfail link 0 8\nseed 1\n")
        assert main(["run", str(s)]) == EXIT_PARSE

    def test_invariant_violation(self, tmp_path, monkeypatch, capsys):
        # a tree builder that disagrees with the snooped state trips the check
        monkeypatch.setattr(cli.mcast, "build_multicast_tree", lambda *a, **k: frozenset())
        s = write(tmp_path, "grid 3 100\nuniform 1\ngroup 1 root 0 members 8\n")
        assert main(["run", str(s), "--check"]) == EXIT_INVARIANT
        assert "snoop-soundness" in capsys.readouterr().err

    def test_console_script_entry(self, tmp_path):
        s = write(tmp_path, "grid 2 100\nuniform 1\n")
        proc = subprocess.run([sys.executable, "-m", "mstte.cli", "run", str(s), "--check"], capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout == "ok: all invariants hold\n"


class TestCompare:
    def test_identical_runs(self, tmp_path, capsys):
        s = write(tmp_path, FULL)
        main(["run", str(s), "--out", str(tmp_path / "a")])
        main(["run", str(s), "--out", str(tmp_path / "b")])
        capsys.readouterr()
        assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == EXIT_OK
        assert capsys.readouterr().out == ""

    def test_more_capacity_never_lowers_throughput(self, tmp_path, capsys):
        for cap in (100, 200):
            s = write(tmp_path, f"grid 4 {cap}\nuniform 10\n", f"s{cap}.txt")
            main(["run", str(s), "--out", str(tmp_path / str(cap))])
        capsys.readouterr()
        assert main(["compare", str(tmp_path / "100" / "throughput.csv"), str(tmp_path / "200" / "throughput.csv")]) == 0
        out = capsys.readouterr().out.splitlines()
        deltas = [float(re.search(r"\(([-+][\d.e+-]+)\)", line).group(1)) for line in out if "aggregate_mbps" in line]
        assert len(deltas) == 3 and all(d > 0 for d in deltas)

    def test_row_added_and_removed(self):
        a = "host,x\n0,1\n1,2\n"
        b = "host,x\n1,3\n2,2\n"
        assert compare_reports(a, b) == ["- host=0", "host=1 x: 2 -> 3 (+1)", "+ host=2"]

    def test_schema_mismatch(self, tmp_path, capsys):
        s = write(tmp_path, FULL)
        main(["run", str(s), "--out", str(tmp_path / "a")])
        capsys.readouterr()
        code = main(["compare", str(tmp_path / "a" / "throughput.csv"), str(tmp_path / "a" / "policing.csv")])
        assert code == EXIT_PARSE and "schemas differ" in capsys.readouterr().err

    def test_missing_report(self, tmp_path):
        assert main(["compare", str(tmp_path / "x"), str(tmp_path / "y")]) == EXIT_USAGE
