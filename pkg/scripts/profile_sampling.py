"""
Script to measure denoiser and sampling speed on CPU.

For each model we time a single forward pass and estimate the time it takes to
complete one scan with a DDIM sampler of the given number of steps.
"""
import time
from pathlib import Path

import click
import pandas as pd
import tensorflow as tf

import cascade_volcomp


def time_forward(model, nb_batches: int) -> float:
    """Average seconds per forward pass, after one warm-up pass."""
    inputs = model.dummy_inputs
    model(inputs)
    start = time.time()
    for _ in range(nb_batches):
        model(inputs)
    return (time.time() - start) / nb_batches


@click.command()
@click.option("--results-file", help="Where to save results")
@click.option("--name-filter", type=str, default="", help="Regex to include models")
@click.option(
    "--stage",
    type=click.Choice(["", "generate", "sr"]),
    default="",
    help="Only profile models of this stage",
)
@click.option("--exclude-filters", type=str, default="", help="Regex to exclude models")
@click.option("--steps", type=int, default=50, help="DDIM steps per completion")
@click.option("--nb-batches", type=int, default=5, help="Forward passes to average")
@click.option("--ignore-results/--no-ignore-results", default=False)
def main(
    results_file,
    name_filter,
    stage,
    exclude_filters,
    steps,
    nb_batches,
    ignore_results,
):
    """
    The parameters `name_filter`, `stage` and `exclude_filters` are passed directly to
    `cascade_volcomp.list_models` to find which models to profile.

    If `--ignore-results` is set, we rerun profiling for all models. Otherwise
    (default) we only profile models not already in the results file.
    """
    model_names = cascade_volcomp.list_models(
        name_filter=name_filter, stage=stage, exclude_filters=exclude_filters
    )

    results_file = Path(results_file)
    if results_file.exists() and not ignore_results:
        results_df = pd.read_csv(results_file, index_col=0)
    else:
        results_df = pd.DataFrame(
            columns=["forward_time", "completion_time", "nb_parameters"]
        )
        results_df.index.name = "model"

    model_names = [name for name in model_names if name not in results_df.index]

    for model_name in model_names:
        print(f"Model: {model_name}. ", end="")

        model = cascade_volcomp.create_model(model_name)
        try:
            duration = time_forward(model, nb_batches)
        except tf.errors.ResourceExhaustedError:
            duration = float("nan")

        results_df.loc[model_name, "forward_time"] = duration
        results_df.loc[model_name, "completion_time"] = duration * steps
        results_df.loc[model_name, "nb_parameters"] = model.count_params()
        print(f"Time: {duration:.3f}, completion: {duration * steps:.1f}.")

        results_df.to_csv(results_file)
        tf.keras.backend.clear_session()

    results_df.sort_index(inplace=True)
    results_df.to_csv(results_file)


if __name__ == "__main__":
    main()
