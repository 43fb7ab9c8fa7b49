import numpy as np
import pytest

from src.shared.errors import (
    EXIT_CODES,
    ConfigError,
    ConvergenceError,
    DataError,
    DomainError,
    ErrorType,
    NumericError,
    SingularSystemError,
    StorageError,
    SurrogateError,
    describe_error,
    exit_code_for,
)


class TestErrorHierarchy:
    @pytest.mark.unit
    @pytest.mark.parametrize(
        "cls, error_type",
        [
            (DomainError, ErrorType.DOMAIN),
            (ConfigError, ErrorType.CONFIG),
            (DataError, ErrorType.DATA),
            (StorageError, ErrorType.STORAGE),
            (NumericError, ErrorType.NUMERIC),
            (SingularSystemError, ErrorType.NUMERIC),
            (ConvergenceError, ErrorType.NUMERIC),
        ],
    )
    def test_error_types(self, cls, error_type):
        error = cls("boom")
        assert isinstance(error, SurrogateError)
        assert error.error_type == error_type
        assert str(error) == "boom"

    def test_numeric_error_carries_residual(self):
        error = NumericError("CG did not converge", residual=1e-3)
        assert error.residual == 1e-3

    def test_convergence_error_carries_last_iterate(self):
        theta = np.array([1.0, 0.0])
        error = ConvergenceError("stalled", last_iterate=theta, iterations=7)
        assert isinstance(error, NumericError)
        assert error.iterations == 7
        np.testing.assert_array_equal(error.last_iterate, theta)

    def test_context_defaults_to_empty_dict(self):
        first = DataError("a")
        second = DataError("b")
        first.context["x"] = 1
        assert second.context == {}

    def test_can_be_raised_and_caught_as_base(self):
        with pytest.raises(SurrogateError):
            raise ConfigError("bad config")


class TestExitCodes:
    def test_documented_codes(self):
        assert exit_code_for(ConfigError("x")) == 2
        assert exit_code_for(DomainError("x")) == 2
        assert exit_code_for(NumericError("x")) == 3
        assert exit_code_for(DataError("x")) == 3
        assert exit_code_for(StorageError("x")) == 4

    def test_os_error_is_io_failure(self):
        assert exit_code_for(FileNotFoundError("missing")) == 4

    def test_unknown_error(self):
        assert exit_code_for(RuntimeError("x")) == 1

    def test_every_type_has_a_code(self):
        assert set(EXIT_CODES) == set(ErrorType)


class TestDescribeError:
    def test_nesting_message(self):
        text = describe_error(DomainError("meshes are not nested along x"))
        assert text.startswith("Fine and coarse meshes are incompatible.")
        assert "meshes are not nested along x" in text

    def test_non_convergence_message(self):
        text = describe_error("CG did not converge in 100 iterations")
        assert "iterative solver did not converge" in text

    def test_unmapped_message_passes_through(self):
        assert describe_error("something odd") == "something odd"

    def test_empty_message(self):
        assert describe_error("") == "An unexpected error occurred."
