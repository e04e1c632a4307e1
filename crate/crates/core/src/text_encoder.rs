//! Caption-side encoder.
//!
//! A caption arrives as a role graph: one event node, verb nodes tied to the
//! event, entity nodes tied to verbs, with typed relations on the edges. The
//! encoder seeds each node from word vectors and runs a residual graph
//! convolution whose per-edge weight is the shared transform modulated
//! row-wise by a relation embedding, with attention over each node's
//! neighborhood deciding the mixing weights.

use crate::error::{Result, SrxError};
use crate::rng;
use crate::tensor::{Tape, Tensor, TensorId};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Event,
    Action,
    Entity,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Event => "event",
            Role::Action => "action",
            Role::Entity => "entity",
        }
    }

    pub fn parse(s: &str) -> Result<Role> {
        match s {
            "event" => Ok(Role::Event),
            "action" => Ok(Role::Action),
            "entity" => Ok(Role::Entity),
            other => Err(SrxError::validation(format!("unknown role '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub role: Role,
    /// Word-vector table row ids; at least one per node.
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub n_relations: usize,
}

impl RoleGraph {
    /// Structural rules every ingested graph must satisfy. Kept separate
    /// from the math so tests can build degenerate graphs on purpose.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.tokens.is_empty() {
                return Err(SrxError::validation(format!("node {i} has no tokens")));
            }
        }
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(SrxError::validation(format!(
                    "edge {}->{} references a missing node",
                    e.src, e.dst
                )));
            }
            if e.relation >= self.n_relations {
                return Err(SrxError::validation(format!(
                    "relation id {} outside vocabulary of {}",
                    e.relation, self.n_relations
                )));
            }
        }
        let events: Vec<usize> = self.role_indices(Role::Event);
        if events.len() != 1 {
            return Err(SrxError::validation(format!(
                "expected exactly one event node, found {}",
                events.len()
            )));
        }
        let event = events[0];
        let actions = self.role_indices(Role::Action);
        if actions.is_empty() {
            return Err(SrxError::validation("graph has no action node"));
        }
        let entities = self.role_indices(Role::Entity);
        if entities.is_empty() {
            return Err(SrxError::validation("graph has no entity node"));
        }
        for &a in &actions {
            if !self.edges.iter().any(|e| touches(e, a, event)) {
                return Err(SrxError::validation(format!(
                    "action node {a} is not connected to the event node"
                )));
            }
        }
        for &ent in &entities {
            let linked = self
                .edges
                .iter()
                .any(|e| actions.iter().any(|&a| touches(e, ent, a)));
            if !linked {
                return Err(SrxError::validation(format!(
                    "entity node {ent} is not connected to any action node"
                )));
            }
        }
        Ok(())
    }

    pub fn role_indices(&self, role: Role) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    /// Undirected neighbor lists with the edge's relation id, in edge-list
    /// order. Direction is dropped: a message flows both ways over an edge.
    pub fn neighborhoods(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.src].push((e.dst, e.relation));
            if e.src != e.dst {
                out[e.dst].push((e.src, e.relation));
            }
        }
        out
    }
}

fn touches(e: &GraphEdge, a: usize, b: usize) -> bool {
    (e.src == a && e.dst == b) || (e.src == b && e.dst == a)
}

/// Dense word-vector table; token ids index rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTable {
    vectors: Tensor,
}

impl WordTable {
    pub fn new(vectors: Tensor) -> Result<Self> {
        vectors.dims2()?;
        Ok(WordTable { vectors })
    }

    /// Reproducible stand-in table for tests and synthetic data.
    pub fn seeded_random(vocab: usize, dim: usize, seed: u64) -> Self {
        let mut r = rng::labeled_stream(seed, "word-table");
        WordTable { vectors: Tensor::uniform(&[vocab, dim], -0.5, 0.5, &mut r) }
    }

    pub fn dim(&self) -> usize {
        self.vectors.shape()[1]
    }

    pub fn vocab(&self) -> usize {
        self.vectors.shape()[0]
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn get(&self, id: u32) -> Result<&[f64]> {
        if (id as usize) < self.vocab() {
            Ok(self.vectors.row(id as usize))
        } else {
            Err(SrxError::validation(format!(
                "token id {id} outside word table of {}",
                self.vocab()
            )))
        }
    }
}

/// Graph-convolution parameters: an input affine map from word-vector space,
/// a relation embedding table and attention scorer shared by all layers, and
/// one transform matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub init_w: Tensor,
    pub init_b: Tensor,
    pub w_r: Tensor,
    pub u: Tensor,
    pub w_t: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct GcnIds {
    pub init_w: TensorId,
    pub init_b: TensorId,
    pub w_r: TensorId,
    pub u: TensorId,
    pub w_t: Vec<TensorId>,
}

impl GcnParams {
    pub fn init(
        word_dim: usize,
        d_model: usize,
        n_relations: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        GcnParams {
            init_w: Tensor::fan_in_uniform(word_dim, d_model, rng),
            init_b: Tensor::zeros(&[d_model]),
            w_r: Tensor::uniform(&[n_relations, d_model], -0.5, 0.5, rng),
            u: Tensor::fan_in_uniform(d_model, d_model, rng),
            w_t: (0..layers)
                .map(|_| Tensor::fan_in_uniform(d_model, d_model, rng))
                .collect(),
        }
    }

    pub fn d_model(&self) -> usize {
        self.init_w.shape()[1]
    }

    pub fn word_dim(&self) -> usize {
        self.init_w.shape()[0]
    }

    pub fn n_relations(&self) -> usize {
        self.w_r.shape()[0]
    }

    pub fn layers(&self) -> usize {
        self.w_t.len()
    }

    pub fn bind(&self, tape: &mut Tape) -> GcnIds {
        GcnIds {
            init_w: tape.input(self.init_w.clone()),
            init_b: tape.input(self.init_b.clone()),
            w_r: tape.input(self.w_r.clone()),
            u: tape.input(self.u.clone()),
            w_t: self.w_t.iter().map(|t| tape.input(t.clone())).collect(),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(format!("{prefix}.init_w"), &self.init_w);
        f(format!("{prefix}.init_b"), &self.init_b);
        f(format!("{prefix}.w_r"), &self.w_r);
        f(format!("{prefix}.u"), &self.u);
        for (l, t) in self.w_t.iter().enumerate() {
            f(format!("{prefix}.w_t{l}"), t);
        }
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.init_w"), &mut self.init_w);
        f(format!("{prefix}.init_b"), &mut self.init_b);
        f(format!("{prefix}.w_r"), &mut self.w_r);
        f(format!("{prefix}.u"), &mut self.u);
        for (l, t) in self.w_t.iter_mut().enumerate() {
            f(format!("{prefix}.w_t{l}"), t);
        }
    }
}

impl GcnIds {
    pub fn for_each(&self, f: &mut dyn FnMut(TensorId)) {
        f(self.init_w);
        f(self.init_b);
        f(self.w_r);
        f(self.u);
        for t in &self.w_t {
            f(*t);
        }
    }
}

/// Per-role caption embeddings, as nodes on the calling tape. All vectors
/// are unit-normalized `[d_model]` rows.
#[derive(Debug, Clone)]
pub struct TextEmbeddings {
    pub event: TensorId,
    pub actions: Vec<TensorId>,
    pub entities: Vec<TensorId>,
}

/// Seed node states: mean of each node's token vectors pushed through the
/// input affine map. The word vectors themselves are data, not parameters.
pub fn init_node_embeddings(
    tape: &mut Tape,
    graph: &RoleGraph,
    words: &WordTable,
    params: &GcnIds,
) -> Result<TensorId> {
    let dim = words.dim();
    let mut rows = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let mut mean = vec![0.0; dim];
        for id in &node.tokens {
            for (m, v) in mean.iter_mut().zip(words.get(*id)?) {
                *m += v;
            }
        }
        let k = node.tokens.len() as f64;
        for m in &mut mean {
            *m /= k;
        }
        rows.push(mean);
    }
    let x = tape.constant(Tensor::from_rows(&rows)?);
    let projected = tape.matmul(x, params.init_w)?;
    tape.add_bias(projected, params.init_b)
}

/// One residual graph-convolution pass.
///
/// For node i with neighbors j: score = <U g_i, U g_j> / sqrt(d), mixing
/// weights are the softmax of the scores over the neighborhood, and each
/// message is the relation embedding gating W_t g_j elementwise. Nodes
/// without neighbors pass through unchanged.
pub fn gcn_layer(
    tape: &mut Tape,
    g: TensorId,
    graph: &RoleGraph,
    params: &GcnIds,
    layer: usize,
) -> Result<TensorId> {
    let (n, d) = tape.value(g).dims2()?;
    if n != graph.nodes.len() {
        return Err(SrxError::shape(format!(
            "{n} embedding rows for {} nodes",
            graph.nodes.len()
        )));
    }
    let w_t = *params
        .w_t
        .get(layer)
        .ok_or_else(|| SrxError::contract(format!("layer {layer} beyond configured depth")))?;
    for e in &graph.edges {
        if e.src >= n || e.dst >= n {
            return Err(SrxError::validation(format!(
                "edge {}->{} references a missing node",
                e.src, e.dst
            )));
        }
    }

    let w_t_t = tape.transpose(w_t)?;
    let transformed = tape.matmul(g, w_t_t)?;
    let u_t = tape.transpose(params.u)?;
    let scored = tape.matmul(g, u_t)?;
    let scale = 1.0 / (d as f64).sqrt();

    let hoods = graph.neighborhoods();
    let mut new_rows = Vec::with_capacity(n);
    for (i, hood) in hoods.iter().enumerate() {
        let own = tape.select_row(g, i)?;
        if hood.is_empty() {
            new_rows.push(own);
            continue;
        }
        let p_i = tape.select_row(scored, i)?;
        let mut scores = Vec::with_capacity(hood.len());
        let mut messages = Vec::with_capacity(hood.len());
        for &(j, rel) in hood {
            let p_j = tape.select_row(scored, j)?;
            let prod = tape.mul(p_i, p_j)?;
            let s = tape.sum(prod);
            scores.push(tape.scale(s, scale));

            let t_j = tape.select_row(transformed, j)?;
            let gate = tape.select_row(params.w_r, rel)?;
            messages.push(tape.mul(gate, t_j)?);
        }
        let score_vec = tape.stack(&scores)?;
        let beta = tape.softmax(score_vec, 0)?;
        let msg_mat = tape.stack(&messages)?;
        let msg_mat_t = tape.transpose(msg_mat)?;
        let mixed = tape.matvec(msg_mat_t, beta)?;
        new_rows.push(tape.add(own, mixed)?);
    }
    tape.stack(&new_rows)
}

/// Validate, seed, convolve, normalize, and split by role.
pub fn encode_text(
    tape: &mut Tape,
    graph: &RoleGraph,
    words: &WordTable,
    params: &GcnIds,
) -> Result<TextEmbeddings> {
    graph.validate()?;
    let mut g = init_node_embeddings(tape, graph, words, params)?;
    for layer in 0..params.w_t.len() {
        g = gcn_layer(tape, g, graph, params, layer)?;
    }
    let normalized = tape.l2_normalize(g)?;
    let pick = |tape: &mut Tape, idxs: Vec<usize>| -> Result<Vec<TensorId>> {
        idxs.into_iter().map(|i| tape.select_row(normalized, i)).collect()
    };
    let event = pick(tape, graph.role_indices(Role::Event))?[0];
    let actions = pick(tape, graph.role_indices(Role::Action))?;
    let entities = pick(tape, graph.role_indices(Role::Entity))?;
    Ok(TextEmbeddings { event, actions, entities })
}
