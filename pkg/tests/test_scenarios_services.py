import json
import math
import textwrap

import pytest

from domains.scenarios.commands import main
from domains.scenarios.models import ScenarioError, SchemaMismatchError, TaskStatus
from domains.scenarios.registry import get_handler, registered_tasks
from domains.scenarios.services import build_workspace, explain, parse_scenario, run

HEADER = 'schema = "mcfkit-scenario/1"\nseed = 0\n'

CIRCLE = HEADER + textwrap.dedent(
    """
    [domains.S]
    kind = "torus"
    dimension = 1

    [fields.f]
    domain = "S"
    expr = "cos(2*pi*x1)"

    [[tasks]]
    name = "points"
    op = "critical_points"
    field = "f"

    [[tasks]]
    name = "hm"
    op = "HM"
    field = "f"
    expect = { betti = [1, 1] }
    """
)

ISOLATION = HEADER + textwrap.dedent(
    """
    [domains.L]
    kind = "box"
    bounds = [[-2.0, 2.0]]

    [fields.w]
    domain = "L"
    expr = "x1^2"

    [flows.grad]
    domain = "L"
    gradient = "w"

    [neighborhoods.half]
    domain = "L"
    boxes = [[[0.0, 1.0]]]

    [tolerances.isolation]
    boundary_spacing = 0.05
    interior_per_axis = 11

    [[tasks]]
    name = "half-interval"
    op = "verify_isolation"
    flow = "grad"
    neighborhood = "half"

    [[tasks]]
    name = "points"
    op = "critical_points"
    field = "w"
    """
)


def _write(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestParseScenario:
    """시나리오 파싱/검증 테스트"""

    def test_toml_error_position(self):
        """TOML 문법 오류는 줄/열과 함께"""
        with pytest.raises(ScenarioError) as ei:
            parse_scenario(HEADER + "[domains.S\nkind = 1\n", source="bad.toml")
        assert ei.value.detail["line"] == 3
        assert ei.value.detail["column"] is not None
        assert ei.value.detail["source"] == "bad.toml"

    def test_schema_mismatch(self):
        """schema 버전이 다르면 거부"""
        with pytest.raises(SchemaMismatchError) as ei:
            parse_scenario('schema = "mcfkit-scenario/2"\n')
        assert ei.value.detail["expected"] == "mcfkit-scenario/1"

    def test_duplicate_task_names(self):
        """작업 이름은 유일"""
        text = HEADER + '[[tasks]]\nname = "a"\nop = "x"\n[[tasks]]\nname = "a"\nop = "y"\n'
        with pytest.raises(ScenarioError):
            parse_scenario(text)

    def test_unknown_reference(self):
        """선언되지 않은 도메인 참조"""
        text = HEADER + '[fields.f]\ndomain = "nowhere"\nexpr = "x1"\n'
        with pytest.raises(ScenarioError) as ei:
            parse_scenario(text)
        assert "nowhere" in ei.value.detail["errors"][0]["msg"]

    def test_box_needs_bounds(self):
        """box 도메인에는 bounds"""
        with pytest.raises(ScenarioError):
            parse_scenario(HEADER + '[domains.B]\nkind = "box"\n')

    def test_task_arguments_pass_through(self):
        """name, op 외의 키는 작업 인자"""
        scenario = parse_scenario(CIRCLE)
        assert scenario.tasks[1].arguments == {"field": "f", "expect": {"betti": [1, 1]}}

    def test_expression_error_located(self):
        """식 오류는 표 이름과 위치를 달고 ScenarioError"""
        text = HEADER + '[domains.S]\nkind = "torus"\ndimension = 1\n[fields.f]\ndomain = "S"\nexpr = "x1 + x2"\n'
        with pytest.raises(ScenarioError) as ei:
            build_workspace(parse_scenario(text))
        assert ei.value.detail["where"] == "fields.f"
        assert ei.value.detail["position"] == 5

    def test_bad_tolerance(self):
        """허용 범위 밖 설정값"""
        text = HEADER + "[tolerances.isolation]\nt_max = -1.0\n"
        with pytest.raises(ScenarioError):
            build_workspace(parse_scenario(text))

    def test_seed_flows_into_configs(self):
        """seed 는 섭동/고립 설정으로 전달"""
        ws = build_workspace(parse_scenario(CIRCLE), seed=11)
        assert ws.perturbation.seed == 11
        assert ws.isolation.seed == 11


class TestRegistry:
    """작업 레지스트리 테스트"""

    def test_aliases(self):
        """별칭과 대소문자/하이픈 정규화"""
        assert get_handler("HM") is get_handler("morse_homology")
        assert get_handler("local-morse-homology") is get_handler("local_hm")
        assert get_handler("PD") is get_handler("poincare_duality")

    def test_unknown_op(self):
        """등록되지 않은 작업"""
        with pytest.raises(ScenarioError) as ei:
            get_handler("floer_homology")
        assert "morse_homology" in ei.value.detail["known"]

    def test_every_operation_registered(self):
        """모든 작업 이름이 등록됨"""
        expected = {
            "critical_points",
            "morse_smale",
            "morse_homology",
            "local_morse_homology",
            "boundary_exit_homology",
            "verify_isolation",
            "mcf_homology",
            "induced_map",
            "mcf_induced_map",
            "verify_flow_map",
            "pullback",
            "continuation",
            "compose_with_flow",
            "homotopy",
            "poincare_duality",
            "count_symmetry",
            "conley_duality",
            "pd_continuation",
        }
        assert expected <= set(registered_tasks())


class TestRun:
    """실행/리포트 테스트"""

    def test_empty_scenario(self, tmp_path):
        """작업이 없으면 exit 0, 요약은 no tasks"""
        result = run(_write(tmp_path, HEADER), output=tmp_path / "out")
        assert result.exit_code == 0
        assert result.report["summary"]["total"] == 0
        assert explain(result.report_path) == "no tasks"

    def test_circle_report(self, tmp_path):
        """정보성 작업은 info, 기대값이 맞으면 passed"""
        result = run(_write(tmp_path, CIRCLE), output=tmp_path / "out")
        statuses = [t["status"] for t in result.report["tasks"]]
        assert statuses == [TaskStatus.INFO, TaskStatus.PASSED]
        assert result.exit_code == 0
        report = json.loads(result.report_path.read_text())
        assert report["schema"] == "mcfkit-report/1"
        groups = report["tasks"][1]["result"]["homology"]["groups"]
        assert [groups[k]["betti"] for k in ("0", "1")] == [1, 1]
        assert "H_0=Z, H_1=Z" in explain(result.report_path)

    def test_report_is_deterministic(self, tmp_path):
        """같은 시나리오와 seed 면 report.json 이 바이트 단위로 같음"""
        path = _write(tmp_path, CIRCLE)
        a = run(path, output=tmp_path / "a", threads=1)
        b = run(path, output=tmp_path / "b", threads=3)
        assert a.report_path.read_bytes() == b.report_path.read_bytes()
        assert "total" in json.loads(a.timings_path.read_text())

    def test_failed_verdict_exit_code(self, tmp_path):
        """반증된 고립 근방은 failed, exit 1"""
        result = run(_write(tmp_path, ISOLATION), output=tmp_path / "out")
        first = result.report["tasks"][0]
        assert first["status"] == TaskStatus.FAILED
        assert first["result"]["verdict"] == "refuted"
        assert result.report["tasks"][1]["status"] == TaskStatus.INFO
        assert result.exit_code == 1

    def test_halt_on_fail(self, tmp_path):
        """첫 실패 후 나머지는 skipped"""
        result = run(_write(tmp_path, ISOLATION), output=tmp_path / "out", halt_on_fail=True)
        assert [t["status"] for t in result.report["tasks"]] == [TaskStatus.FAILED, TaskStatus.SKIPPED]
        assert result.report["summary"]["skipped"] == 1

    def test_task_error_recorded(self, tmp_path):
        """핸들러의 도메인 오류는 작업 실패로 기록"""
        text = CIRCLE + '\n[[tasks]]\nname = "missing"\nop = "local_morse_homology"\nfield = "f"\n'
        result = run(_write(tmp_path, text), output=tmp_path / "out")
        entry = result.report["tasks"][-1]
        assert entry["status"] == TaskStatus.FAILED
        assert entry["error"]["detail"]["argument"] == "neighborhood"

    def test_continuation_reports_effective_horizon(self, tmp_path):
        """연속사상 결과에 실제 쓴 전환 구간 길이와 clamp 여부"""
        text = CIRCLE + textwrap.dedent(
            """
            [fields.g]
            domain = "S"
            expr = "cos(2*pi*(x1 - 0.1))"

            [[tasks]]
            name = "phi"
            op = "continuation"
            field_a = "f"
            field_b = "g"
            switch_horizon = 50.0
            """
        )
        result = run(_write(tmp_path, text), output=tmp_path / "out")
        entry = result.report["tasks"][-1]
        horizon = entry["result"]["horizon"]
        assert horizon["requested"] == 50.0
        assert horizon["clamped"] is True
        assert horizon["effective"] == pytest.approx(math.log(1e3) / (4 * math.pi**2), rel=1e-6)
        assert entry["result"]["isomorphism"] is True

    def test_dump_orbits(self, tmp_path):
        """--dump-orbits 는 증인 궤도 CSV 를 남김"""
        result = run(_write(tmp_path, CIRCLE), output=tmp_path / "out", dump_orbits=True)
        assert result.orbit_files
        assert all(p.is_relative_to(tmp_path / "out" / "orbits" / "hm") for p in result.orbit_files)
        assert result.orbit_files[0].read_text().startswith("t,x1")


class TestCommandLine:
    """CLI 종료 코드 테스트"""

    def test_missing_file(self, tmp_path):
        """없는 시나리오 파일은 2"""
        assert main(["run", str(tmp_path / "nope.toml")]) == 2

    def test_run_and_explain(self, tmp_path, capsys):
        """run 은 리포트 경로를 출력, explain 은 요약"""
        out = tmp_path / "out"
        assert main(["run", str(_write(tmp_path, CIRCLE)), "-o", str(out), "--seed", "3"]) == 0
        assert capsys.readouterr().out.strip() == str(out / "report.json")
        assert main(["explain", str(out / "report.json")]) == 0
        assert "(seed 3)" in capsys.readouterr().out

    def test_failing_scenario(self, tmp_path):
        """판정 실패는 1"""
        assert main(["run", str(_write(tmp_path, ISOLATION)), "-o", str(tmp_path / "out")]) == 1

    def test_negative_seed(self, tmp_path):
        """음수 seed 는 2"""
        assert main(["run", str(_write(tmp_path, HEADER)), "--seed", "-1"]) == 2

    def test_explain_wrong_schema(self, tmp_path):
        """schema 가 다른 리포트는 2"""
        path = tmp_path / "report.json"
        path.write_text(json.dumps({"schema": "other/1"}))
        with pytest.raises(SchemaMismatchError):
            explain(path)
        assert main(["explain", str(path)]) == 2
