"""cartomap: build and serve 2D document maps from a corpus.

The pipeline goes corpus -> tf-idf -> latent embedding -> nearest
neighbors -> 2D layout -> named cluster levels -> snapshot + density
tile pyramid + compressed facet indices -> HTTP map server.
"""

from .corpus import (
    CorpusError,
    CorpusRecord,
    EntityCatalog,
    build_catalog,
    load_corpus,
    synth_corpus,
    write_corpus_csv,
)
from .embed import (
    EmbedError,
    LatentEmbedding,
    LatentModel,
    embed_aggregates,
    embed_articles,
    embed_terms,
    fit_lsa,
    load_embedding,
    save_embedding,
)
from .facets import (
    FacetError,
    FacetIndex,
    TileIndex,
    build_facet_index,
    build_tile_index,
    canonical_filter,
    eval_filter,
    parse_filter,
)
from .idset import IdSet, IdSetError, set_difference, set_intersect, set_union
from .landmarks import (
    ClusterError,
    ClusterLevel,
    adjacent_pairs,
    build_levels,
    kmeans,
    name_clusters,
)
from .neighbors import (
    HnswIndex,
    NeighborError,
    NeighborLists,
    knn_approx,
    knn_exact,
    knn_typed,
    recall_at_k,
)
from .pipeline import Pipeline, PipelineConfig, PipelineError, load_config
from .project2d import (
    FuzzyGraph,
    Projection2D,
    ProjectionError,
    fit_layout,
    fuzzy_graph,
    layout_init,
    normalize_coords,
    transform,
)
from .raster import (
    RasterError,
    TilePyramid,
    blur,
    build_pyramid,
    histogram2d,
    png_bytes,
    render_tile_subset,
    subset_scale,
    tonemap,
    write_pyramid,
)
from .score_export import (
    EntityTable,
    ExportError,
    MapSnapshot,
    export_map,
    load_map,
    score_entities,
    validate_snapshot,
)
from .server import LayerInfo, ServerConfig, create_app, create_app_from_dir
from .vectorize import (
    VectorizeError,
    Vocabulary,
    build_vocab,
    extract_ngrams,
    incidence_matrix,
    ngram_docs,
    tfidf_matrix,
    tokenize,
)

__version__ = "0.1.0"
