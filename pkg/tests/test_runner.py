import io
import math
import shutil

import pytest
from hypothesis import given
from hypothesis import strategies as st

from optbench.problem_api import simulate_call_count
from optbench.runner import (
    DirectiveError,
    RecordFormatError,
    RegistryError,
    ResolutionError,
    RunDirective,
    RunnerError,
    RunRecord,
    execute_run,
    load_registry,
    parse_directives,
    parse_list_text,
    resolve_and_validate,
    run_cli,
    tree_checksum,
)
from optbench.runner.cli import default_registry_root

SHIPPED = default_registry_root()


@pytest.fixture
def registry_copy(tmp_path):
    root = tmp_path / "registry"
    shutil.copytree(SHIPPED, root)
    return root


@pytest.fixture
def workdir(tmp_path):
    d = tmp_path / "work"
    d.mkdir()
    return d


def cli(argv, text="", **kw):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(argv, io.StringIO(text), out, err, **kw)
    return code, out.getvalue(), err.getvalue()


# ---- list files


def test_list_grammar():
    lf = parse_list_text("# header\n\nalpha   # first\n  beta\n#gamma\n")
    assert lf.entries == ("alpha", "beta")
    assert lf.comments == (" header", " first", "gamma")


def test_list_only_comments_is_empty():
    assert parse_list_text("# nothing here\n   # still nothing\n").entries == ()


def test_list_rejects_duplicates_and_multiple_names():
    with pytest.raises(RegistryError, match="duplicate"):
        parse_list_text("a\nb\na # again\n")
    with pytest.raises(RegistryError, match=":2:"):
        parse_list_text("a\nb c\n")


@given(st.lists(st.sampled_from(["x1", "p", "q_2", "zz"]), unique=True), st.text(alphabet="ab #\t", max_size=8))
def test_list_comment_suffix_never_changes_entries(names, junk):
    plain = "\n".join(names)
    commented = "\n".join(f"{n} #{junk}" for n in names)
    assert parse_list_text(plain).entries == parse_list_text(commented).entries


# ---- registry layout


def test_shipped_registry_loads():
    reg = load_registry(SHIPPED)
    assert len(reg.solvers) >= 4
    assert reg.collections.entries == ("modulopt",)
    assert len(reg.problems("modulopt")) >= 5
    assert set(reg.solver_list("projgrad", "modulopt", "default.lst")) == {"boxquad1"}
    assert reg.solver_options[("sdesc", "modulopt")] == {"max_iter": 1000}


def test_default_not_subset_of_all(registry_copy):
    p = registry_copy / "solvers" / "sdesc" / "modulopt" / "default.lst"
    p.write_text(p.read_text() + "boxquad1\n")
    with pytest.raises(RegistryError, match="default.lst"):
        load_registry(registry_copy)


def test_collection_default_not_subset(registry_copy):
    p = registry_copy / "collections" / "modulopt" / "default.lst"
    p.write_text(p.read_text() + "ghost\n")
    with pytest.raises(RegistryError, match="ghost"):
        load_registry(registry_copy)


@pytest.mark.parametrize(
    "rel",
    ["solvers/solvers.lst", "collections/collections.lst", "collections/modulopt/all.lst",
     "solvers/auglag/collections.lst", "solvers/auglag/modulopt/default.lst"],
)
def test_missing_mandatory_list_is_named(registry_copy, rel):
    (registry_copy / rel).unlink()
    with pytest.raises(RegistryError, match=rel.split("/")[-1]):
        load_registry(registry_copy)


def test_missing_root(tmp_path):
    with pytest.raises(RegistryError):
        load_registry(tmp_path / "absent")


def test_checksum_sensitive(registry_copy):
    before = tree_checksum(registry_copy)
    assert tree_checksum(registry_copy) == before
    (registry_copy / "collections" / "modulopt" / "probs" / "offsetquad" / "offset.dat").write_text("0.6\n")
    assert tree_checksum(registry_copy) != before


# ---- directives


@pytest.fixture(scope="module")
def reg():
    return load_registry(SHIPPED)


def test_directive_triple(reg):
    assert parse_directives(["sdesc modulopt rosenbrock2\n"], reg) == [RunDirective("sdesc", "modulopt", "rosenbrock2", 1)]


def test_directive_default_expansion_in_order(reg):
    out = parse_directives(["sdesc modulopt   # comment\n"], reg)
    assert [d.problem for d in out] == list(reg.solver_list("sdesc", "modulopt", "default.lst"))


def test_directive_list_reference(reg):
    out = parse_directives(["sdesc modulopt unc.lst"], reg)
    assert [d.problem for d in out] == list(reg.collection_lists["modulopt"]["unc.lst"])
    with pytest.raises(ResolutionError, match="nope.lst"):
        parse_directives(["sdesc modulopt nope.lst"], reg)


def test_directive_comments_and_blanks(reg):
    out = parse_directives(["# header\n", "\n", "  newtoncg modulopt scaledquad # why\n"], reg)
    assert len(out) == 1 and out[0].lineno == 3


@pytest.mark.parametrize("line", ["sdesc", "a b c d"])
def test_directive_malformed(reg, line):
    with pytest.raises(DirectiveError, match="line 2"):
        parse_directives(["# ok\n", line], reg)


def test_directive_unknown_solver_names_solvers_list(reg):
    with pytest.raises(ResolutionError, match="solvers.lst"):
        parse_directives(["ghost modulopt rosenbrock2"], reg)


def test_directive_unknown_collection(reg):
    with pytest.raises(ResolutionError, match="collections.lst"):
        parse_directives(["sdesc cutest rosenbrock2"], reg)


# ---- resolution


@pytest.mark.parametrize("solver, problem", [("projgrad", "rosenbrock2"), ("sdesc", "boxquad1")])
def test_resolution_names_solver_list(reg, solver, problem):
    with pytest.raises(ResolutionError) as exc:
        resolve_and_validate(RunDirective(solver, "modulopt", problem), reg)
    assert exc.value.list_path == SHIPPED / "solvers" / solver / "modulopt" / "all.lst"


def test_resolution_unknown_problem_names_collection_list(reg):
    with pytest.raises(ResolutionError) as exc:
        resolve_and_validate(RunDirective("sdesc", "modulopt", "ghost"), reg)
    assert exc.value.list_path.name == "all.lst" and "collections" in str(exc.value.list_path)


def test_resolution_listed_but_not_installed(registry_copy):
    (registry_copy / "solvers" / "solvers.lst").write_text("sdesc\nlbfgs\n")
    shutil.copytree(registry_copy / "solvers" / "sdesc", registry_copy / "solvers" / "lbfgs")
    reg = load_registry(registry_copy)
    with pytest.raises(ResolutionError, match="not installed"):
        resolve_and_validate(RunDirective("lbfgs", "modulopt", "scaledquad"), reg)


def test_valid_plan(reg, workdir):
    plan = resolve_and_validate(RunDirective("sdesc", "modulopt", "offsetquad"), reg)
    assert plan.data_dir == SHIPPED / "collections" / "modulopt" / "probs" / "offsetquad"
    assert plan.options == {"max_iter": 1000}
    assert "offsetquad" in plan.describe(workdir)


# ---- execution


def test_execute_newtoncg_rosenbrock(reg, workdir):
    before = tree_checksum(SHIPPED)
    result = execute_run(resolve_and_validate(RunDirective("newtoncg", "modulopt", "rosenbrock2"), reg), workdir, SHIPPED)
    rec = result.record
    assert rec.status == "Converged" and rec.r_grad_lag <= 1e-6
    assert rec.n_simulate_total == sum(rec.counts) > 0
    assert tree_checksum(SHIPPED) == before
    # only the report file remains: scratch was removed
    assert [p.name for p in workdir.iterdir()] == ["newtoncg.modulopt.rosenbrock2.report"]
    assert rec.to_line() in result.report_path.read_text()


def test_execute_reads_problem_data_through_scratch(reg, workdir):
    rec = execute_run(resolve_and_validate(RunDirective("sdesc", "modulopt", "offsetquad"), reg), workdir, SHIPPED).record
    assert rec.status == "Converged" and rec.f_final == 0.5


def test_execute_init_failed(registry_copy, workdir):
    (registry_copy / "collections" / "modulopt" / "probs" / "offsetquad" / "offset.dat").unlink()
    reg = load_registry(registry_copy)
    result = execute_run(resolve_and_validate(RunDirective("sdesc", "modulopt", "offsetquad"), reg), workdir, registry_copy)
    rec = result.record
    assert rec.status == "InitFailed" and rec.n_simulate_total == 0 and sum(rec.counts) == 0
    assert math.isnan(rec.r_grad_lag)
    assert "initialization failed" in result.report


def test_execute_capability_mismatch(registry_copy, workdir):
    p = registry_copy / "solvers" / "newtoncg" / "modulopt" / "all.lst"
    p.write_text(p.read_text() + "eqline2\n")
    reg = load_registry(registry_copy)
    rec = execute_run(resolve_and_validate(RunDirective("newtoncg", "modulopt", "eqline2"), reg), workdir, registry_copy).record
    assert rec.status == "CapabilityMismatch" and rec.n_simulate_total == 0
    assert all(math.isnan(v) for v in (rec.r_grad_lag, rec.r_feas, rec.r_sign))


def test_execute_refuses_workdir_in_registry(reg):
    plan = resolve_and_validate(RunDirective("sdesc", "modulopt", "scaledquad"), reg)
    before = tree_checksum(SHIPPED)
    with pytest.raises(RunnerError, match="registry"):
        execute_run(plan, SHIPPED / "scratch", SHIPPED)
    with pytest.raises(RunnerError):
        execute_run(plan, SHIPPED, SHIPPED)
    assert tree_checksum(SHIPPED) == before


# ---- records


def test_record_round_trip_and_field_count():
    rec = RunRecord("sdesc", "modulopt", "p", 2, 1, 0, "Converged", 0.1, 1e-7, math.nan, 0.0, 12,
                    (1, 2, 3, 4, 1, 1, 0), 3.25)
    line = rec.to_line()
    assert len(line.split(" ")) == RunRecord.FIELD_COUNT == 21
    assert "  " not in line and "\n" not in line
    back = RunRecord.from_line(line)
    assert back.to_line() == line
    assert RunRecord.header().count(" ") == 20


@given(st.floats(allow_nan=True, allow_infinity=True), st.floats(min_value=0, allow_nan=False, allow_infinity=False))
def test_record_floats_round_trip_exactly(f, wall):
    rec = RunRecord("a", "b", "c", 1, 0, 0, "Converged", f_final=f, wall_time_ms=wall)
    back = RunRecord.from_line(rec.to_line())
    assert (math.isnan(f) and math.isnan(back.f_final)) or back.f_final == f
    assert back.wall_time_ms == wall


def test_record_rejects_bad_lines():
    with pytest.raises(RecordFormatError):
        RunRecord.from_line("libopt a b")
    with pytest.raises(RecordFormatError):
        RunRecord("has space", "b", "c", 1, 0, 0, "Converged")
    good = RunRecord("a", "b", "c", 1, 0, 0, "Converged").to_line()
    with pytest.raises(RecordFormatError):
        RunRecord.from_line(good.replace("libopt", "other", 1))


# ---- command line


def test_cli_empty_input(workdir):
    assert cli(["--workdir", str(workdir)], "") == (0, "", "")


def test_cli_dry_run_is_pure(workdir):
    calls = simulate_call_count()
    before = tree_checksum(SHIPPED)
    code, out, _ = cli(["-t", "--workdir", str(workdir)], "newtoncg modulopt rosenbrock2\n")
    assert code == 0 and "newtoncg" in out and "rosenbrock2" in out
    assert simulate_call_count() == calls
    assert tree_checksum(SHIPPED) == before
    assert list(workdir.iterdir()) == []


def test_cli_unknown_solver(workdir):
    code, out, err = cli(["--workdir", str(workdir)], "ghost modulopt rosenbrock2\n")
    assert code != 0 and out == "" and "solvers.lst" in err


def test_cli_parse_error(workdir):
    code, _, err = cli(["--workdir", str(workdir)], "sdesc\n")
    assert code != 0 and "line 1" in err


def test_cli_unknown_flag():
    code, out, err = cli(["--frobnicate"])
    assert code == 2 and "usage" in err


def test_cli_runs_and_emits_records(workdir):
    code, out, err = cli(["--workdir", str(workdir)], "projgrad modulopt\nauglag modulopt eqline2\n")
    assert code == 0
    lines = out.splitlines()
    assert [RunRecord.from_line(l).problem for l in lines] == ["boxquad1", "eqline2"]
    assert err == ""


def test_cli_verbose_commentary_on_stderr(workdir):
    code, out, err = cli(["-v", "--workdir", str(workdir)], "newtoncg modulopt scaledquad\n")
    assert code == 0 and len(out.splitlines()) == 1
    assert "dimensions" in err and "derivative check" in err and "KKT" in err


def test_cli_input_file_and_env_root(registry_copy, workdir, tmp_path):
    directives = tmp_path / "runs.txt"
    directives.write_text("sdesc modulopt scaledquad\n")
    code, out, _ = cli([str(directives), "--workdir", str(workdir)], environ={"LIBOPT_DIR": str(registry_copy)})
    assert code == 0 and RunRecord.from_line(out.strip()).solver == "sdesc"
    (registry_copy / "solvers" / "solvers.lst").write_text("newtoncg\n")
    code, _, err = cli([str(directives), "--workdir", str(workdir)], environ={"LIBOPT_DIR": str(registry_copy)})
    assert code != 0 and "solvers.lst" in err


def test_cli_parallel_output_is_ordered_and_deterministic(workdir):
    text = "newtoncg modulopt\nsdesc modulopt\nprojgrad modulopt\nauglag modulopt\n"
    _, serial, _ = cli(["--workdir", str(workdir)], text)
    _, parallel, _ = cli(["--jobs", "4", "--workdir", str(workdir)], text)

    def strip(out):
        return [l.rsplit(" ", 1)[0] for l in out.splitlines()]

    assert strip(serial) == strip(parallel) and len(serial.splitlines()) == 6


def test_cli_rejects_bad_jobs():
    assert cli(["--jobs", "0"])[0] == 2
