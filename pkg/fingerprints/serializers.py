# fingerprints/serializers.py

from rest_framework import serializers

MAX_SEED = 2 ** 64 - 1
SHIFT_CHOICES = (-15, -10, -5, 5, 10, 15)


def _positive(value: float, name: str) -> float:
    if not value > 0:
        raise serializers.ValidationError(f"{name} must be > 0.")
    return value


def _unit_interval(value: float, name: str) -> float:
    if not 0 < value <= 1:
        raise serializers.ValidationError(f"{name} must lie in (0, 1].")
    return value


class RunSerializer(serializers.Serializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)
    workers = serializers.IntegerField(min_value=1)


class KernelSerializer(serializers.Serializer):
    """
    Kernel smoothing parameters:

      KERNEL_LENGTH_SCALE=1.0
      KERNEL_AMPLITUDE=1.0
      KERNEL_REG=1.0
      KERNEL_PRIOR_MEAN=-110
      KERNEL_LITERAL_NORMAL_EQUATIONS=false
    """
    length_scale = serializers.FloatField()
    amplitude = serializers.FloatField()
    reg = serializers.FloatField(min_value=0.0)
    prior_mean = serializers.FloatField(min_value=-110.0, max_value=0.0)
    literal_normal_equations = serializers.BooleanField()

    def validate_length_scale(self, value: float) -> float:
        return _positive(value, "Length scale")

    def validate_amplitude(self, value: float) -> float:
        return _positive(value, "Amplitude")


class QuerySerializer(serializers.Serializer):
    scale = serializers.FloatField()

    def validate_scale(self, value: float) -> float:
        # the query radius is scale · length scale and must exceed one length scale
        if not value > 1:
            raise serializers.ValidationError("Query scale must be > 1.")
        return value


class GridSerializer(serializers.Serializer):
    spacing = serializers.FloatField()

    def validate_spacing(self, value: float) -> float:
        return _positive(value, "Grid spacing")


class PositioningSerializer(serializers.Serializer):
    k = serializers.IntegerField(min_value=1)
    dissimilarity = serializers.ChoiceField(choices=["euclidean", "cdm"])
    lambda_cdm = serializers.FloatField(min_value=0.0)
    missing_value = serializers.FloatField()
    weighted = serializers.BooleanField()


class ResampleSerializer(serializers.Serializer):
    n = serializers.IntegerField(min_value=1)
    alpha = serializers.FloatField()
    min_features = serializers.IntegerField(min_value=1)

    def validate_alpha(self, value: float) -> float:
        return _unit_interval(value, "Sampling ratio")


class CandidateSerializer(serializers.Serializer):
    lambda_mji = serializers.FloatField()
    lambda_res = serializers.FloatField(min_value=0.0)

    def validate_lambda_mji(self, value: float) -> float:
        return _unit_interval(value, "MJI threshold")


class DetectionSerializer(serializers.Serializer):
    threshold = serializers.FloatField(min_value=0.0, max_value=1.0)
    slope = serializers.FloatField()
    intercept = serializers.FloatField()
    sigma_floor = serializers.FloatField()

    def validate_sigma_floor(self, value: float) -> float:
        return _positive(value, "Sigma floor")


class ScenarioSerializer(serializers.Serializer):
    n_aps = serializers.IntegerField(min_value=1)
    width = serializers.FloatField()
    height = serializers.FloatField()
    exponent = serializers.FloatField()
    ref_power = serializers.FloatField(max_value=0.0)
    shadowing = serializers.FloatField(min_value=0.0)
    spacing = serializers.FloatField()
    sensitivity = serializers.FloatField(min_value=-110.0, max_value=0.0)
    train_fraction = serializers.FloatField()

    def validate_width(self, value: float) -> float:
        return _positive(value, "Width")

    def validate_height(self, value: float) -> float:
        return _positive(value, "Height")

    def validate_exponent(self, value: float) -> float:
        return _positive(value, "Path-loss exponent")

    def validate_spacing(self, value: float) -> float:
        return _positive(value, "Survey spacing")

    def validate_train_fraction(self, value: float) -> float:
        if not 0 < value < 1:
            raise serializers.ValidationError("Training fraction must lie in (0, 1).")
        return value


class ChangeSerializer(serializers.Serializer):
    missing_ratio = serializers.FloatField(min_value=0.0, max_value=0.5)
    shift_ratio = serializers.FloatField(min_value=0.0, max_value=0.5)
    shift_dbm = serializers.IntegerField()
    redraw_per_sample = serializers.BooleanField()

    def validate_shift_dbm(self, value: int) -> int:
        if value not in SHIFT_CHOICES:
            raise serializers.ValidationError(f"Shift must be one of {list(SHIFT_CHOICES)} dBm.")
        return value

    def validate(self, attrs):
        if attrs["missing_ratio"] + attrs["shift_ratio"] > 0.5 + 1e-12:
            raise serializers.ValidationError("Missing ratio plus shift ratio must not exceed 0.5.")
        return attrs


class SweepSerializer(serializers.Serializer):
    ratio_start = serializers.FloatField()
    ratio_stop = serializers.FloatField()
    ratio_step = serializers.FloatField()

    def validate_ratio_start(self, value: float) -> float:
        return _unit_interval(value, "First sweep ratio")

    def validate_ratio_stop(self, value: float) -> float:
        return _unit_interval(value, "Last sweep ratio")

    def validate_ratio_step(self, value: float) -> float:
        return _positive(value, "Sweep step")

    def validate(self, attrs):
        if attrs["ratio_start"] > attrs["ratio_stop"]:
            raise serializers.ValidationError("The first sweep ratio must not exceed the last one.")
        return attrs


class EvaluationSerializer(serializers.Serializer):
    radius = serializers.FloatField(min_value=0.0)
    ellipse_scale = serializers.FloatField()

    def validate_ellipse_scale(self, value: float) -> float:
        return _positive(value, "Ellipse scale")


SECTION_SERIALIZERS = {
    "KERNEL": KernelSerializer,
    "QUERY": QuerySerializer,
    "GRID": GridSerializer,
    "POSITIONING": PositioningSerializer,
    "RESAMPLE": ResampleSerializer,
    "CANDIDATE": CandidateSerializer,
    "DETECTION": DetectionSerializer,
    "SCENARIO": ScenarioSerializer,
    "CHANGE": ChangeSerializer,
    "SWEEP": SweepSerializer,
    "EVALUATION": EvaluationSerializer,
}
