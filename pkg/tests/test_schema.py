import textwrap

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from saddleflow import corpus
from saddleflow.errors import ConfigurationError
from saddleflow.problem import Affine, Problem, Quadratic
from saddleflow.schema import (
    OUTPUT_DIR_ENV,
    SchemaError,
    parse_problem_file,
    parse_run_config,
    problem_to_dict,
    serialize_problem,
)
from saddleflow.sets import Box, NonnegOrthant, Polyhedron, ProductSet, WholeSpace

FIG1 = textwrap.dedent("""\
    schema_version: 1
    objective: {kind: affine, a: [-1.0]}
    constraints:
      - {kind: affine, a: [1.0]}
    hard_set: {kind: whole-space, dim: 1}
    rho: 0
""")


def same_problem(a: Problem, b: Problem, tol=1e-15):
    return problem_to_dict(a) == problem_to_dict(b) or _close(problem_to_dict(a), problem_to_dict(b), tol)


def _close(a, b, tol):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k], tol) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(_close(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float):
        return a == b or abs(a - b) <= tol
    return a == b


class TestParse:
    def test_fig1(self):
        p = parse_problem_file(FIG1)
        assert (p.n, p.m, p.rho) == (1, 1, 0.0)
        assert isinstance(p.objective, Affine) and p.objective.a.tolist() == [-1.0]

    def test_indefinite_rejected(self):
        text = FIG1.replace("objective: {kind: affine, a: [-1.0]}",
                            "objective: {kind: quadratic, Q: [[-0.1]], q: [0.0]}")
        with pytest.raises(SchemaError, match="objective"):
            parse_problem_file(text)

    def test_dimension_mismatch_reports_line(self):
        text = FIG1.replace("a: [1.0]}", "a: [1.0, 2.0]}")
        with pytest.raises(SchemaError) as exc:
            parse_problem_file(text)
        assert exc.value.line == 4
        assert exc.value.path == ("constraints", 0)

    def test_syntax_error_reports_line(self):
        with pytest.raises(SchemaError) as exc:
            parse_problem_file(FIG1 + "rho: [1\n")
        assert exc.value.line is not None

    def test_missing_field(self):
        with pytest.raises(SchemaError, match="hard_set"):
            parse_problem_file(FIG1.replace("hard_set: {kind: whole-space, dim: 1}\n", ""))

    def test_unknown_kind(self):
        with pytest.raises(SchemaError, match="unknown set kind"):
            parse_problem_file(FIG1.replace("whole-space", "ball"))

    def test_bad_version(self):
        with pytest.raises(SchemaError, match="schema_version"):
            parse_problem_file(FIG1.replace("schema_version: 1", "schema_version: 2"))

    def test_unknown_field(self):
        with pytest.raises(SchemaError, match="unknown field"):
            parse_problem_file(FIG1 + "extra: 1\n")

    def test_infinite_box_bounds(self):
        text = FIG1.replace("{kind: whole-space, dim: 1}", "{kind: box, lower: [-.inf], upper: [2]}")
        p = parse_problem_file(text)
        assert p.hard_set.lower[0] == -np.inf and p.hard_set.upper[0] == 2.0

    def test_schema_error_is_configuration_error(self):
        assert issubclass(SchemaError, ConfigurationError)


class TestRoundTrip:
    @pytest.mark.parametrize("make", corpus.CORPUS + (corpus.qp_disk,))
    def test_corpus(self, make):
        p = make(0.75)
        assert same_problem(parse_problem_file(serialize_problem(p)), p, tol=0.0)

    def test_product_and_infinite_bounds(self):
        X = ProductSet([Box([-np.inf, 0.0], [1.0, np.inf]), NonnegOrthant(1),
                        Polyhedron([[1.0, 1.0]], [1.0]), WholeSpace(1)])
        p = Problem(Affine(np.arange(6.0)), [], X, tau_x=0.5, tau_mu=3.0, name="mixed")
        assert same_problem(parse_problem_file(serialize_problem(p)), p, tol=0.0)

    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=6, max_size=6),
           st.floats(0.0, 100.0))
    def test_random_coefficients(self, c, rho):
        B = np.array(c[:4]).reshape(2, 2) * 1e-3
        p = Problem(Quadratic(B @ B.T, c[4:]), [Affine(c[:2], c[2])], WholeSpace(2), rho=rho)
        back = parse_problem_file(serialize_problem(p))
        np.testing.assert_allclose(back.objective.Q, p.objective.Q, rtol=0, atol=1e-15)
        assert same_problem(back, p)


class TestRunConfig:
    def _write(self, tmp_path, body):
        (tmp_path / "p.yaml").write_text(FIG1)
        (tmp_path / "c.yaml").write_text(textwrap.dedent(body))
        return (tmp_path / "c.yaml").read_text()

    def test_minimal(self, tmp_path, monkeypatch):
        monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
        text = self._write(tmp_path, """\
            schema_version: 1
            problem: p.yaml
            initial_states: [{x: [2.0], mu: [2.5]}]
            rho_values: [0.0, 1.0]
        """)
        cfg = parse_run_config(text, tmp_path)
        assert cfg.rho_values == [0.0, 1.0]
        assert cfg.analyses == frozenset()
        assert cfg.output_dir == tmp_path / "out"

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "elsewhere"))
        text = self._write(tmp_path, """\
            schema_version: 1
            problem: p.yaml
            sampling: {count: 3}
        """)
        assert parse_run_config(text, tmp_path).output_dir == tmp_path / "elsewhere"

    def test_requires_states_or_sampling(self, tmp_path):
        text = self._write(tmp_path, "schema_version: 1\nproblem: p.yaml\n")
        with pytest.raises(SchemaError, match="initial_states"):
            parse_run_config(text, tmp_path)

    def test_infeasible_initial_state(self, tmp_path):
        text = self._write(tmp_path, """\
            schema_version: 1
            problem: p.yaml
            initial_states: [{x: [2.0], mu: [-1.0]}]
        """)
        with pytest.raises(SchemaError) as exc:
            parse_run_config(text, tmp_path)
        assert exc.value.line == 3

    def test_inline_problem(self, tmp_path):
        text = textwrap.dedent("""\
            schema_version: 1
            problem:
              objective: {kind: affine, a: [-1.0]}
              constraints: [{kind: affine, a: [1.0]}]
              hard_set: {kind: whole-space, dim: 2}
            sampling: {count: 1}
        """)
        with pytest.raises(SchemaError) as exc:
            parse_run_config(text, tmp_path)
        assert exc.value.path == ("problem", "hard_set") and exc.value.line == 5

    def test_unknown_analysis(self, tmp_path):
        text = self._write(tmp_path, """\
            schema_version: 1
            problem: p.yaml
            sampling: {count: 1}
            analyses: [kkt, spectra]
        """)
        with pytest.raises(SchemaError, match="analyses"):
            parse_run_config(text, tmp_path)

    def test_bad_integrator(self, tmp_path):
        text = self._write(tmp_path, """\
            schema_version: 1
            problem: p.yaml
            sampling: {count: 1}
            integrator: {h: -1}
        """)
        with pytest.raises(SchemaError, match="integrator"):
            parse_run_config(text, tmp_path)
