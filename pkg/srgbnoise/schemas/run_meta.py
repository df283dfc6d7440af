"""`run.meta` sidecar schema."""
from marshmallow import Schema, fields


class RunMetaSchema(Schema):
    """Resolved configuration, seed and artifact versions of one CLI run."""

    command = fields.Str(required=True)
    config = fields.Dict(required=True)
    seed = fields.Int(required=True)
    inputs = fields.Dict(keys=fields.Str(), values=fields.Str(allow_none=True), required=True)
    versions = fields.Dict(keys=fields.Str(), values=fields.Str(), required=True)
