//! WASI-NN style inference interface over the toy engine.
//!
//! Call order per context: `set_input` (repeatable until computed), then
//! `compute` once, then any number of `get_output` reads.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, DecodeParams, EngineError, Model, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorType {
    U8,
    F32,
    F64,
}

impl TensorType {
    pub fn size_of(self) -> usize {
        match self {
            TensorType::U8 => 1,
            TensorType::F32 => 4,
            TensorType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub ttype: TensorType,
    pub data: Vec<u8>,
}

impl Tensor {
    /// A checked tensor: `product(dims) * size_of(ttype) == data.len()`.
    pub fn new(dims: Vec<u32>, ttype: TensorType, data: Vec<u8>) -> Result<Self, NnError> {
        let t = Tensor { dims, ttype, data };
        t.validate()?;
        Ok(t)
    }

    /// A text prompt: one U8 sequence of any length with `dims = [1]`, the
    /// shape WASI-NN text backends take.
    pub fn text(data: impl Into<Vec<u8>>) -> Self {
        Tensor { dims: vec![1], ttype: TensorType::U8, data: data.into() }
    }

    fn is_text(&self) -> bool {
        self.ttype == TensorType::U8 && self.dims == [1]
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(NnError::InvalidTensor("dims must be non-empty and positive".into()));
        }
        if self.is_text() {
            return Ok(());
        }
        let elems = self.dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        match elems.and_then(|n| n.checked_mul(self.ttype.size_of())) {
            Some(n) if n == self.data.len() => Ok(()),
            _ => Err(NnError::InvalidTensor(format!(
                "dims {:?} of {:?} do not match {} data bytes",
                self.dims,
                self.ttype,
                self.data.len()
            ))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid model id {0:?}")]
    InvalidModelId(String),
    #[error("model {0:?} not found in cache")]
    ModelNotFound(String),
    #[error("model {model_id:?} is corrupt: {source}")]
    ModelCorrupt { model_id: String, source: ModelError },
    #[error("cache read failed for {model_id:?}: {reason}")]
    CacheIo { model_id: String, reason: String },
    #[error("unknown graph {0}")]
    UnknownGraph(u64),
    #[error("unknown execution context {0}")]
    UnknownContext(u64),
    #[error("{op} not allowed in state {state:?}")]
    InvalidState { op: &'static str, state: ContextState },
    #[error("invalid tensor index {0}")]
    InvalidIndex(u32),
    #[error("unsupported tensor type {0:?}")]
    UnsupportedTensorType(TensorType),
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("engine failure: {0}")]
    EngineFailure(#[from] EngineError),
}

/// Host-ABI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(i32)]
pub enum NnStatus {
    Ok = 0,
    InvalidState = 1,
    InvalidIndex = 2,
    ModelNotFound = 3,
    EngineFailure = 4,
}

impl NnStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_code(code: i32) -> Option<Self> {
        Some(match code {
            0 => NnStatus::Ok,
            1 => NnStatus::InvalidState,
            2 => NnStatus::InvalidIndex,
            3 => NnStatus::ModelNotFound,
            4 => NnStatus::EngineFailure,
            _ => return None,
        })
    }
}

impl NnError {
    pub fn status(&self) -> NnStatus {
        match self {
            NnError::InvalidState { .. } | NnError::UnknownGraph(_) | NnError::UnknownContext(_) => {
                NnStatus::InvalidState
            }
            NnError::InvalidIndex(_) => NnStatus::InvalidIndex,
            NnError::ModelNotFound(_) | NnError::InvalidModelId(_) => NnStatus::ModelNotFound,
            NnError::ModelCorrupt { .. }
            | NnError::CacheIo { .. }
            | NnError::UnsupportedTensorType(_)
            | NnError::InvalidTensor(_)
            | NnError::EngineFailure(_) => NnStatus::EngineFailure,
        }
    }
}

/// `[A-Za-z0-9._-]{1,64}`
pub fn is_valid_model_id(id: &str) -> bool {
    (1..=64).contains(&id.len())
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

/// Source of raw model files keyed by model id.
pub trait ModelCache: Send + Sync {
    /// Returns `Ok(None)` when no entry exists.
    fn fetch(&self, model_id: &str) -> Result<Option<Vec<u8>>, NnError>;
}

/// `<root>/<model_id>.wicm`
#[derive(Debug, Clone)]
pub struct DirCache {
    root: PathBuf,
}

impl DirCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirCache { root: root.into() }
    }

    pub fn path_for(&self, model_id: &str) -> PathBuf {
        self.root.join(format!("{model_id}.wicm"))
    }
}

impl ModelCache for DirCache {
    fn fetch(&self, model_id: &str) -> Result<Option<Vec<u8>>, NnError> {
        match std::fs::read(self.path_for(model_id)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(NnError::CacheIo { model_id: model_id.into(), reason: e.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryCache {
    entries: BTreeMap<String, Arc<Vec<u8>>>,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model_id: impl Into<String>, bytes: Vec<u8>) {
        self.entries.insert(model_id.into(), Arc::new(bytes));
    }

    pub fn with(mut self, model_id: impl Into<String>, bytes: Vec<u8>) -> Self {
        self.insert(model_id, bytes);
        self
    }
}

impl ModelCache for MemoryCache {
    fn fetch(&self, model_id: &str) -> Result<Option<Vec<u8>>, NnError> {
        Ok(self.entries.get(model_id).map(|b| b.as_ref().clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphHandle {
    pub id: u64,
    pub model_id: String,
    pub model_size_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ContextId(pub u64);

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ctx#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContextState {
    Created,
    InputSet,
    Computed,
}

#[derive(Debug, Clone)]
struct Graph {
    handle: GraphHandle,
    model: Arc<Model>,
}

#[derive(Debug, Clone)]
struct Context {
    graph: u64,
    state: ContextState,
    seed: u64,
    params: DecodeParams,
    input: Vec<u8>,
    output: Vec<u8>,
    tokens_generated: u32,
}

/// Summary of a computed context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputeSummary {
    pub model_size_bytes: u64,
    pub tokens_generated: u32,
    pub output_len: usize,
}

/// One facade per validator. Loaded models are shared between graphs built
/// from the same id.
pub struct NnFacade {
    cache: Arc<dyn ModelCache>,
    loaded: HashMap<String, Arc<Model>>,
    graphs: BTreeMap<u64, Graph>,
    contexts: BTreeMap<u64, Context>,
    next_graph: u64,
    next_context: u64,
    output_mask: Option<u8>,
}

impl fmt::Debug for NnFacade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NnFacade")
            .field("graphs", &self.graphs.len())
            .field("contexts", &self.contexts.len())
            .field("output_mask", &self.output_mask)
            .finish()
    }
}

impl NnFacade {
    pub fn new(cache: Arc<dyn ModelCache>) -> Self {
        NnFacade {
            cache,
            loaded: HashMap::new(),
            graphs: BTreeMap::new(),
            contexts: BTreeMap::new(),
            next_graph: 0,
            next_context: 0,
            output_mask: None,
        }
    }

    /// XORs every computed output byte with `mask`, simulating a node whose
    /// hardware disagrees with everyone else.
    pub fn with_output_mask(mut self, mask: Option<u8>) -> Self {
        self.output_mask = mask.filter(|&m| m != 0);
        self
    }

    pub fn build_from_cache(&mut self, model_id: &str) -> Result<GraphHandle, NnError> {
        if !is_valid_model_id(model_id) {
            return Err(NnError::InvalidModelId(model_id.into()));
        }
        let model = match self.loaded.get(model_id) {
            Some(m) => Arc::clone(m),
            None => {
                let bytes = self
                    .cache
                    .fetch(model_id)?
                    .ok_or_else(|| NnError::ModelNotFound(model_id.into()))?;
                let model = Model::load(&bytes).map_err(|source| NnError::ModelCorrupt {
                    model_id: model_id.into(),
                    source,
                })?;
                let model = Arc::new(model);
                self.loaded.insert(model_id.into(), Arc::clone(&model));
                model
            }
        };
        let id = self.next_graph;
        self.next_graph += 1;
        let handle = GraphHandle {
            id,
            model_id: model_id.into(),
            model_size_bytes: model.size_bytes(),
        };
        self.graphs.insert(id, Graph { handle: handle.clone(), model });
        Ok(handle)
    }

    /// The loaded model behind a graph.
    pub fn model(&self, graph: u64) -> Option<&Arc<Model>> {
        self.graphs.get(&graph).map(|g| &g.model)
    }

    pub fn init_execution_context(
        &mut self,
        graph: u64,
        seed: u64,
        params: DecodeParams,
    ) -> Result<ContextId, NnError> {
        if !self.graphs.contains_key(&graph) {
            return Err(NnError::UnknownGraph(graph));
        }
        let id = self.next_context;
        self.next_context += 1;
        self.contexts.insert(
            id,
            Context {
                graph,
                state: ContextState::Created,
                seed,
                params,
                input: Vec::new(),
                output: Vec::new(),
                tokens_generated: 0,
            },
        );
        Ok(ContextId(id))
    }

    fn context_mut(&mut self, ctx: ContextId) -> Result<&mut Context, NnError> {
        self.contexts.get_mut(&ctx.0).ok_or(NnError::UnknownContext(ctx.0))
    }

    pub fn state(&self, ctx: ContextId) -> Result<ContextState, NnError> {
        self.contexts.get(&ctx.0).map(|c| c.state).ok_or(NnError::UnknownContext(ctx.0))
    }

    pub fn set_input(&mut self, ctx: ContextId, index: u32, tensor: Tensor) -> Result<(), NnError> {
        let c = self.context_mut(ctx)?;
        if c.state == ContextState::Computed {
            return Err(NnError::InvalidState { op: "set_input", state: c.state });
        }
        if index != 0 {
            return Err(NnError::InvalidIndex(index));
        }
        if tensor.ttype != TensorType::U8 {
            return Err(NnError::UnsupportedTensorType(tensor.ttype));
        }
        tensor.validate()?;
        c.input = tensor.data;
        c.state = ContextState::InputSet;
        Ok(())
    }

    pub fn compute(&mut self, ctx: ContextId) -> Result<ComputeSummary, NnError> {
        let mask = self.output_mask;
        let c = self.contexts.get(&ctx.0).ok_or(NnError::UnknownContext(ctx.0))?;
        if c.state != ContextState::InputSet {
            return Err(NnError::InvalidState { op: "compute", state: c.state });
        }
        let graph = self.graphs.get(&c.graph).ok_or(NnError::UnknownGraph(c.graph))?;
        let result = engine::decode(&graph.model, &c.input, &c.params, c.seed)?;
        let model_size_bytes = graph.handle.model_size_bytes;

        let c = self.context_mut(ctx)?;
        c.output = result.output;
        if let Some(mask) = mask {
            c.output.iter_mut().for_each(|b| *b ^= mask);
        }
        c.tokens_generated = result.tokens_generated;
        c.state = ContextState::Computed;
        Ok(ComputeSummary {
            model_size_bytes,
            tokens_generated: result.tokens_generated,
            output_len: c.output.len(),
        })
    }

    /// Copies at most `capacity` output bytes; truncation is silent and the
    /// returned length is the `written` count.
    pub fn get_output(&self, ctx: ContextId, index: u32, capacity: usize) -> Result<Vec<u8>, NnError> {
        let c = self.contexts.get(&ctx.0).ok_or(NnError::UnknownContext(ctx.0))?;
        if c.state != ContextState::Computed {
            return Err(NnError::InvalidState { op: "get_output", state: c.state });
        }
        if index != 0 {
            return Err(NnError::InvalidIndex(index));
        }
        Ok(c.output[..capacity.min(c.output.len())].to_vec())
    }

    /// Tokens generated by a computed context (EOS included).
    pub fn tokens_generated(&self, ctx: ContextId) -> Result<u32, NnError> {
        let c = self.contexts.get(&ctx.0).ok_or(NnError::UnknownContext(ctx.0))?;
        match c.state {
            ContextState::Computed => Ok(c.tokens_generated),
            state => Err(NnError::InvalidState { op: "tokens_generated", state }),
        }
    }

    /// Drops graphs and contexts and restarts handle numbering, so every
    /// transaction sees the same handle values. Loaded models are kept.
    pub fn reset_session(&mut self) {
        self.graphs.clear();
        self.contexts.clear();
        self.next_graph = 0;
        self.next_context = 0;
    }
}
