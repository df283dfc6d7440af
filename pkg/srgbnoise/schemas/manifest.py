"""Manifest row schema."""
from marshmallow import Schema, ValidationError, fields, validates

MANIFEST_COLUMNS = ("clean_path", "noisy_path", "camera_name", "iso_value", "scene_id")
NO_NOISY = "-"


class ManifestRowSchema(Schema):
    """One tab-separated manifest record."""

    clean_path = fields.Str(required=True, validate=lambda x: len(x) > 0)
    noisy_path = fields.Str(required=True, validate=lambda x: len(x) > 0)
    camera_name = fields.Str(required=True, validate=lambda x: len(x) > 0)
    iso_value = fields.Int(required=True, strict=False)
    scene_id = fields.Str(required=True, validate=lambda x: len(x) > 0)

    @validates("iso_value")
    def validate_iso(self, value, **kwargs):
        """ISO values are positive integers."""
        if value <= 0:
            raise ValidationError("ISO value must be a positive integer")

    @validates("camera_name")
    def validate_camera(self, value, **kwargs):
        """Camera names may not contain whitespace."""
        if any(ch.isspace() for ch in value):
            raise ValidationError("Camera name may not contain whitespace")
