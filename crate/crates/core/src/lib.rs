//! Tooling for STEP (ISO 10303-21) files as sequence-model training data and
//! for scoring generated CAD geometry.
//!
//! - [`step`]: Part-21 lexer, parser and writer.
//! - [`graph`]: entity reference DAG, roots, cycles, canonical form.
//! - [`reserialize`]: DFS reserialization with renumbering, float
//!   normalization and branch annotations.
//! - [`geometry`]: STL loading, surface sampling, Chamfer distance, three-stage
//!   registration, scaled Chamfer distance and the piecewise reward.
//! - [`eval`]: batch metrics (completion, renderability, median scaled
//!   Chamfer distance, entity counts).
//! - [`retrieval`]: caption embedding, exact cosine index, prompt assembly.
//! - [`synth`]: seeded generator of synthetic STEP files.

mod fnv;

pub mod eval;
pub mod geometry;
pub mod graph;
pub mod reserialize;
pub mod retrieval;
pub mod step;
pub mod synth;

pub use graph::{build_graph, canonical_form, detect_cycles, entity_count, find_roots, GraphError, RefGraph};
pub use reserialize::{
    normalize_floats, reserialize_dfs, strip_annotations, verify_equivalence, ReserializeError, ReserializeOptions,
};
pub use step::{check_completion, parse_step, serialize_step, EntityInstance, ParamValue, StepError, StepFile};
pub use geometry::{
    chamfer, geometric_reward, load_stl, sample_points, scale_factor, scaled_chamfer, GeometryConfig, GeometryError,
    PointCloud, RewardThresholds, RigidTransform, ScaledChamfer, TriMesh,
};
pub use eval::{batch_evaluate, completion_rate, entity_stats, BatchConfig, EvalError, EvalReport, ExternalCheckerSpec};
pub use retrieval::{assemble_prompt, build_index, query_nearest, Embedder, Index, PromptTemplate, RetrievalError, RetrievalHit};
