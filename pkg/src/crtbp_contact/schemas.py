"""JSON schemas for the documents written by the command-line interface."""

HEADER = {
    "type": "object",
    "required": ["tool", "version", "command", "mu", "seed", "tolerances"],
    "properties": {
        "tool": {"const": "crtbp_contact"},
        "version": {"type": "string"},
        "command": {"enum": ["lagrange", "hill", "certify", "integrate", "continue"]},
        "mu": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "c": {"type": ["number", "null"]},
        "seed": {"type": ["integer", "null"]},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
    },
}

_VEC = {"type": "array", "items": {"type": "number"}}

LAGRANGE = {
    "type": "object",
    "required": ["header", "c1", "points"],
    "properties": {
        "header": HEADER,
        "c1": {"type": "number"},
        "points": {
            "type": "array",
            "minItems": 5,
            "maxItems": 5,
            "items": {
                "type": "object",
                "required": ["index", "q", "phase_point", "critical_value"],
                "properties": {
                    "index": {"type": "integer", "minimum": 1, "maximum": 5},
                    "q": _VEC,
                    "phase_point": _VEC,
                    "critical_value": {"type": "number"},
                },
            },
        },
    },
}

CERTIFICATE = {
    "type": "object",
    "required": ["mu", "c", "component", "n_samples", "min_margin", "argmin_state", "grid_spec", "pass"],
    "properties": {
        "mu": {"type": "number"},
        "c": {"type": "number"},
        "component": {"enum": ["moon", "earth", "moon_earth"]},
        "n_samples": {"type": "integer", "minimum": 1},
        "min_margin": {"type": "number"},
        "argmin_state": {"type": "array", "items": {"type": ["number", "null"]}},
        "grid_spec": {"type": "object"},
        "pass": {"type": "boolean"},
    },
}

CERTIFY = {
    "type": "object",
    "required": ["header", "regime", "certificates", "pass"],
    "properties": {
        "header": HEADER,
        "regime": {"enum": ["regularized", "glued"]},
        "certificates": {"type": "array", "minItems": 1, "items": CERTIFICATE},
        "pass": {"type": "boolean"},
    },
}

CONTINUE = {
    "type": "object",
    "required": ["header", "summary"],
    "properties": {
        "header": HEADER,
        "summary": {
            "type": "object",
            "required": ["k", "bound_check", "n_members", "blue_sky", "c_start", "c_end"],
            "properties": {
                "k": {"type": "number", "minimum": 0},
                "bound_check": {"type": "boolean"},
                "n_members": {"type": "integer", "minimum": 2},
                "blue_sky": {"type": "object", "required": ["flagged"]},
            },
        },
    },
}

SCHEMAS = {"header": HEADER, "lagrange": LAGRANGE, "certify": CERTIFY, "continue": CONTINUE}
