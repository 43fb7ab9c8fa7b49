import math

from src.shared.validation import (
    ConfigValidator,
    MeshValidator,
    RangeValidator,
    ValidationResult,
)


class TestValidationResult:
    def test_valid_result(self):
        result = ValidationResult(is_valid=True, normalized_value=123)
        assert result.is_valid is True
        assert result.error_message is None
        assert result.normalized_value == 123

    def test_invalid_result(self):
        result = ValidationResult(is_valid=False, error_message="Test error")
        assert result.is_valid is False
        assert result.error_message == "Test error"
        assert result.normalized_value is None


class TestRangeValidatorPositive:
    def test_positive_number(self):
        result = RangeValidator.positive(2.5, "length_scale")
        assert result.is_valid is True
        assert result.normalized_value == 2.5

    def test_string_number_is_normalized(self):
        result = RangeValidator.positive("3", "x")
        assert result.is_valid is True
        assert result.normalized_value == 3.0

    def test_zero(self):
        result = RangeValidator.positive(0, "lambda_lo")
        assert result.is_valid is False
        assert "lambda_lo" in result.error_message
        assert "positive" in result.error_message

    def test_nan(self):
        result = RangeValidator.positive(math.nan, "x")
        assert result.is_valid is False
        assert "finite" in result.error_message

    def test_not_a_number(self):
        result = RangeValidator.positive("abc", "x")
        assert result.is_valid is False
        assert "number" in result.error_message


class TestRangeValidatorPositiveInt:
    def test_integer(self):
        assert RangeValidator.positive_int(4, "n").normalized_value == 4

    def test_integral_float(self):
        result = RangeValidator.positive_int(4.0, "n")
        assert result.is_valid is True
        assert result.normalized_value == 4

    def test_fractional(self):
        assert RangeValidator.positive_int(2.5, "n").is_valid is False

    def test_zero(self):
        result = RangeValidator.positive_int(0, "n_train")
        assert result.is_valid is False
        assert "at least 1" in result.error_message

    def test_bool_rejected(self):
        assert RangeValidator.positive_int(True, "n").is_valid is False


class TestRangeValidatorUnitIntervals:
    def test_open_interval_excludes_endpoints(self):
        assert RangeValidator.open_unit_interval(0.0, "phi").is_valid is False
        assert RangeValidator.open_unit_interval(1.0, "phi").is_valid is False
        assert RangeValidator.open_unit_interval(0.2, "phi").is_valid is True

    def test_closed_interval_includes_endpoints(self):
        assert RangeValidator.closed_unit_interval(0.0, "phi").is_valid is True
        assert RangeValidator.closed_unit_interval(1.0, "phi").is_valid is True
        assert RangeValidator.closed_unit_interval(1.5, "phi").is_valid is False


class TestMeshValidator:
    def test_nested_returns_ratios(self):
        result = MeshValidator.nested((4, 2), (64, 32))
        assert result.is_valid is True
        assert result.normalized_value == (16, 16)

    def test_not_divisible(self):
        result = MeshValidator.nested((3, 3), (16, 16))
        assert result.is_valid is False
        assert "not nested along x" in result.error_message

    def test_non_positive(self):
        result = MeshValidator.nested((0, 2), (16, 16))
        assert result.is_valid is False


class TestConfigValidator:
    def test_all_valid(self):
        results = [RangeValidator.positive(1, "a"), RangeValidator.positive_int(2, "b")]
        assert ConfigValidator.collect(results).is_valid is True

    def test_collects_every_problem(self):
        results = [
            RangeValidator.positive(-1, "a"),
            RangeValidator.positive_int(1, "b"),
            RangeValidator.positive_int(0, "c"),
        ]
        combined = ConfigValidator.collect(results)
        assert combined.is_valid is False
        assert "a must be positive" in combined.error_message
        assert "c must be at least 1" in combined.error_message
        assert "; " in combined.error_message
