from ._qamatch import (
    Dataset,
    EpochLog,
    Error,
    Model,
    RunConfig,
    TrainResult,
    UserError,
    acc_at_k,
    evaluate,
    generate_synthetic,
    gradcheck,
    load_dataset,
    load_model,
    margin_loss,
    run_cli,
    save_dataset,
    train,
)


def config(**settings):
    """RunConfig with the given keys set (values go through the text parser)."""
    cfg = RunConfig()
    for key, value in settings.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        cfg.set(key, str(value))
    return cfg


__all__ = [
    "Dataset",
    "EpochLog",
    "Error",
    "Model",
    "RunConfig",
    "TrainResult",
    "UserError",
    "acc_at_k",
    "config",
    "evaluate",
    "generate_synthetic",
    "gradcheck",
    "load_dataset",
    "load_model",
    "margin_loss",
    "run_cli",
    "save_dataset",
    "train",
]
