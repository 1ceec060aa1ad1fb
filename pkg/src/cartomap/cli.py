"""Command-line entry points: one command per pipeline stage plus run-all,
synth corpus generation, and the map server."""

from __future__ import annotations

import json
import sys
import traceback
from pathlib import Path

import click

from .corpus import CorpusError, synth_corpus, write_corpus_csv
from .embed import EmbedError
from .facets import FacetError
from .idset import IdSetError
from .landmarks import ClusterError
from .neighbors import NeighborError
from .pipeline import (
    Pipeline,
    PipelineConfig,
    PipelineError,
    StageResult,
    load_config,
    timing_table,
)
from .project2d import ProjectionError
from .raster import RasterError
from .score_export import ExportError
from .vectorize import VectorizeError

USER_ERRORS = (
    PipelineError,
    CorpusError,
    VectorizeError,
    EmbedError,
    NeighborError,
    ProjectionError,
    ClusterError,
    ExportError,
    RasterError,
    FacetError,
    IdSetError,
)


def _pipeline(ctx: click.Context, **overrides) -> Pipeline:
    merged = dict(ctx.obj["overrides"])
    mapping_file = overrides.pop("mapping_file", None)
    if mapping_file:
        merged["mapping"] = json.loads(Path(mapping_file).read_text(encoding="utf-8"))
    merged.update(overrides)
    cfg = load_config(ctx.obj["config_path"], merged)
    return Pipeline(cfg)


def _report(results: list[StageResult]) -> None:
    for r in results:
        status = "skipped (up to date)" if r.skipped else f"done in {r.elapsed_s:.2f}s"
        click.echo(f"[{r.stage}] {status}")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config file; command-line flags override it.")
@click.option("--out-dir", default=None, help="Pipeline output directory.")
@click.pass_context
def cli(ctx, config_path, out_dir):
    """Corpus-to-map pipeline: vectorize, embed, project, cluster, serve."""
    ctx.obj = {"config_path": config_path, "overrides": {"out_dir": out_dir}}


@cli.command()
@click.option("--input", "input_csv", type=click.Path(exists=True), default=None)
@click.option("--mapping-file", type=click.Path(exists=True), default=None,
              help="JSON file mapping record fields to CSV column names.")
@click.option("--min-docs", type=int, default=None)
@click.pass_context
def ingest(ctx, input_csv, mapping_file, min_docs):
    """Read the corpus CSV; write normalized records and the entity catalog."""
    p = _pipeline(ctx, input_csv=input_csv, mapping_file=mapping_file, min_docs=min_docs)
    _report([p.ingest()])


@cli.command()
@click.option("--language", default=None)
@click.option("--m-min", type=int, default=None)
@click.option("--n-max", type=int, default=None)
@click.option("--v-cap", type=int, default=None)
@click.pass_context
def vectorize(ctx, language, m_min, n_max, v_cap):
    """Extract n-gram terms; write the tf-idf and incidence matrices."""
    p = _pipeline(ctx, language=language, m_min=m_min, n_max=n_max, v_cap=v_cap)
    _report([p.vectorize()])


@cli.command()
@click.option("--d", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def embed(ctx, d, seed):
    """Fit the latent model; write per-type embeddings."""
    p = _pipeline(ctx, d=d, seed=seed)
    _report([p.embed()])


@cli.command()
@click.option("--k", type=int, default=None)
@click.option("--approx/--exact", "approx_knn", default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def knn(ctx, k, approx_knn, seed):
    """Nearest neighbors for every (query type, target type) pair."""
    p = _pipeline(ctx, k=k, approx_knn=approx_knn, seed=seed)
    _report([p.knn()])


@cli.command()
@click.option("--epochs", type=int, default=None)
@click.option("--subset-fraction", type=float, default=None)
@click.option("--min-dist", type=float, default=None)
@click.option("--spread", type=float, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def project(ctx, epochs, subset_fraction, min_dist, spread, learning_rate, seed):
    """Lay out all entities in the unit square."""
    p = _pipeline(
        ctx,
        epochs=epochs,
        subset_fraction=subset_fraction,
        min_dist=min_dist,
        spread=spread,
        learning_rate=learning_rate,
        seed=seed,
    )
    _report([p.project()])


@cli.command()
@click.option("--ks", default=None, help="Comma-separated cluster counts, e.g. 8,24,72,216")
@click.option("--seed", type=int, default=None)
@click.pass_context
def cluster(ctx, ks, seed):
    """Multi-level landmark clustering with named clusters."""
    p = _pipeline(ctx, ks=ks, seed=seed)
    _report([p.cluster()])


@cli.command()
@click.pass_context
def export(ctx):
    """Assemble and write the map snapshot."""
    p = _pipeline(ctx)
    _report([p.export()])


@cli.command()
@click.option("--zmax", type=int, default=None)
@click.option("--sigma", type=float, default=None)
@click.option("--layers", default=None, help="Comma-separated entity types, e.g. article,author")
@click.pass_context
def raster(ctx, zmax, sigma, layers):
    """Render the density tile pyramid for each configured layer."""
    p = _pipeline(ctx, zmax=zmax, sigma=sigma, layers=layers)
    _report([p.raster()])


@cli.command()
@click.option("--facets", default=None, help="Comma-separated facet names, e.g. lab,year,type")
@click.option("--zmax", type=int, default=None)
@click.pass_context
def index(ctx, facets, zmax):
    """Build the compressed facet and tile id indices."""
    p = _pipeline(ctx, facets=facets, zmax=zmax)
    _report([p.index()])


@cli.command()
@click.option("--port", type=int, default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--cache-tiles", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.pass_context
def serve(ctx, port, host, cache_tiles, workers):
    """Serve the map over HTTP from the pipeline output directory."""
    import uvicorn

    from .server import ServerConfig, create_app_from_dir

    p = _pipeline(ctx, port=port, cache_tiles=cache_tiles, workers=workers)
    out = Path(p.cfg.out_dir)
    for rel, stage in (("snapshot", "export"), ("layers.json", "raster"), ("index", "index")):
        if not (out / rel).exists():
            raise PipelineError(f"missing artifact {rel}; run stage '{stage}' first")
    app = create_app_from_dir(
        out,
        ServerConfig(
            port=p.cfg.port,
            cache_tiles=p.cfg.cache_tiles,
            workers=p.cfg.workers,
            zoom_bands=tuple(p.cfg.zoom_bands),
            sigma=p.cfg.sigma,
        ),
    )
    uvicorn.run(app, host=host, port=p.cfg.port)


@cli.command()
@click.option("--topics", type=int, default=3)
@click.option("--docs-per-topic", type=int, default=500)
@click.option("--topic-vocab", type=int, default=50)
@click.option("--shared-vocab", type=int, default=100)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Directory for corpus.csv, mapping.json and truth.json.")
def synth(topics, docs_per_topic, topic_vocab, shared_vocab, seed, out_path):
    """Generate a synthetic topic-structured corpus for testing."""
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    records, truth = synth_corpus(topics, docs_per_topic, topic_vocab, shared_vocab, seed)
    mapping = write_corpus_csv(records, out / "corpus.csv")
    (out / "mapping.json").write_text(
        json.dumps(mapping, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    (out / "truth.json").write_text(
        json.dumps(
            {
                "topics": topics,
                "docs_per_topic": docs_per_topic,
                "topic_vocab": topic_vocab,
                "shared_vocab": shared_vocab,
                "seed": seed,
                "topic_of_doc": truth,
            },
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    click.echo(f"wrote {len(records)} records to {out / 'corpus.csv'}")


@cli.command("run-all")
@click.option("--input", "input_csv", type=click.Path(exists=True), default=None)
@click.option("--mapping-file", type=click.Path(exists=True), default=None)
@click.pass_context
def run_all(ctx, input_csv, mapping_file):
    """Run every pipeline stage in order and print the timing table."""
    p = _pipeline(ctx, input_csv=input_csv, mapping_file=mapping_file)
    results = p.run_all()
    _report(results)
    click.echo(timing_table(results))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, prog_name="cartomap")
        return 0
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except USER_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
