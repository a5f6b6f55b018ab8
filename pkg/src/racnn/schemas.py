"""JSON Schemas (draft 2020-12) for every machine-readable CLI output."""

_num = {"type": "number"}
_int = {"type": "integer"}
_frac = {"type": "number", "minimum": 0, "maximum": 1}
_pct = {"type": "number", "minimum": 0, "maximum": 100}

_timing = {
    "type": "object",
    "required": ["median_ms", "min_ms", "mean_ms"],
    "properties": {"median_ms": _num, "min_ms": _num, "mean_ms": _num},
}

BENCH = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "racnn bench report",
    "type": "object",
    "required": ["h", "c", "d", "f", "reps", "warmup", "tau", "timings", "speedup",
                 "ratio_sparse", "ratio_dense", "fraction_alpha_zero", "target_alpha_zero",
                 "predicted_factor", "macs_standard", "macs_sparse", "mac_ratio",
                 "threads", "scalar_bits", "backend", "seed"],
    "properties": {
        "h": _int, "c": _int, "d": _int, "f": _int,
        "reps": {"type": "integer", "minimum": 3},
        "warmup": {"type": "integer", "minimum": 3},
        "tau": _frac,
        "timings": {
            "type": "object",
            "required": ["standard", "racnn_sparse", "racnn_dense"],
            "properties": {"standard": _timing, "racnn_sparse": _timing, "racnn_dense": _timing},
        },
        "speedup": _num, "ratio_sparse": _num, "ratio_dense": _num,
        "fraction_alpha_zero": _frac, "target_alpha_zero": _frac,
        "predicted_factor": _frac,
        "macs_standard": _int, "macs_sparse": _int, "mac_ratio": _num,
        "threads": {"type": "integer", "minimum": 1},
        "scalar_bits": {"enum": [32, 64]},
        "backend": {"enum": ["native", "numpy"]},
        "seed": _int,
        "samples_ms": {"type": "object"},
    },
}

_layer_stats = {
    "type": "object",
    "required": ["layer", "index", "percent", "skip_fraction", "active_pixels",
                 "total_pixels", "revert_candidate"],
    "properties": {
        "layer": {"type": "string"},
        "index": _int,
        "percent": {
            "type": "object",
            "required": ["alpha_zero", "alpha_mid", "alpha_one"],
            "properties": {"alpha_zero": _pct, "alpha_mid": _pct, "alpha_one": _pct},
        },
        "skip_fraction": _frac,
        "active_pixels": _int,
        "total_pixels": _int,
        "revert_candidate": {"type": "boolean"},
    },
}

STATS = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "racnn alpha statistics",
    "type": "object",
    "required": ["images", "tau", "threshold_percent", "layers"],
    "properties": {
        "model": {"type": ["string", "null"]},
        "images": _int,
        "tau": _frac,
        "threshold_percent": _pct,
        "layers": {"type": "array", "items": _layer_stats},
        "message": {"type": "string"},
    },
}

_history_entry = {
    "type": "object",
    "required": ["iteration", "loss", "train_acc", "val_acc", "alpha"],
    "properties": {
        "iteration": _int,
        "loss": {"type": ["number", "null"]},
        "train_acc": _frac,
        "val_acc": _frac,
        "alpha": {"type": "object"},
    },
}

TRAIN = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "racnn training history",
    "type": "object",
    "required": ["seed", "epochs", "learning_rate", "dataset", "runs"],
    "properties": {
        "seed": _int,
        "epochs": _int,
        "learning_rate": _num,
        "alpha_bias": {"enum": ["on", "off"]},
        "dataset": {"type": "object"},
        "runs": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["history", "final_val_acc", "num_params"],
                "properties": {
                    "history": {"type": "array", "items": _history_entry},
                    "final_val_acc": _frac,
                    "num_params": _int,
                },
            },
        },
        "parity": {
            "type": "object",
            "required": ["standard_val_acc", "racnn_val_acc", "diff_points", "within_3_points"],
            "properties": {
                "standard_val_acc": _frac,
                "racnn_val_acc": _frac,
                "diff_points": _num,
                "within_3_points": {"type": "boolean"},
            },
        },
    },
}

EVAL = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "racnn evaluation",
    "type": "object",
    "required": ["model", "accuracy", "images", "path", "tau"],
    "properties": {
        "model": {"type": "string"},
        "accuracy": _frac,
        "images": _int,
        "path": {"enum": ["dense", "sparse"]},
        "tau": _frac,
    },
}

SELFCHECK = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "racnn selfcheck",
    "type": "object",
    "required": ["ok", "suites"],
    "properties": {
        "ok": {"type": "boolean"},
        "suites": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["suite", "ok", "detail", "seconds"],
                "properties": {"suite": {"type": "string"}, "ok": {"type": "boolean"},
                               "detail": {"type": "string"}, "seconds": _num},
            },
        },
    },
}

ALL = {"bench": BENCH, "stats": STATS, "train": TRAIN, "eval": EVAL, "selfcheck": SELFCHECK}
