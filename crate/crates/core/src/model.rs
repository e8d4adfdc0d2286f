//! FSM app models: activities (nodes), guarded widget transitions and the
//! JSON document format they are stored in.
//!
//! A node's transitions are ordered; the position of a transition in that
//! list is its widget slot. Destinations name another node or the reserved
//! [`EXTERNAL`] marker for screens outside the app under test.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guard::{self, Assignment, Declarations, GuardError, GuardExpr, Value, VarStore};

/// Destination marker for activities that belong to another package.
pub const EXTERNAL: &str = "__external__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Button,
    LongButton,
    TextField,
    Scroll,
    System,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalVar {
    pub name: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub transition_id: u32,
    pub kind: TransitionKind,
    pub active: bool,
    pub guard: Option<GuardExpr>,
    pub set: Option<Vec<Assignment>>,
    pub destination: String,
    /// Second destination: scroll direction 1, or the long-press variant of a
    /// button.
    pub alt_destination: Option<String>,
    pub crash: bool,
}

impl Transition {
    pub fn assignments(&self) -> &[Assignment] {
        self.set.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub node_id: String,
    pub transitions: Vec<Transition>,
    pub external: bool,
    pub crash_node: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppModel {
    pub global_vars: Vec<GlobalVar>,
    pub nodes: Vec<Node>,
    pub initial_node: String,
    pub string_pool: Vec<String>,
    pub max_widget_slots: usize,
    decls: Arc<Declarations>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("empty model")]
    Empty,
    #[error("node `{node}` transition {transition}: unknown destination `{destination}`")]
    UnknownDestination {
        node: String,
        transition: u32,
        destination: String,
    },
    #[error("duplicate identifier: {0}")]
    Duplicate(String),
    #[error("node `{node}` transition {transition}: cannot parse `{text}`: {source}")]
    Guard {
        node: String,
        transition: u32,
        text: String,
        #[source]
        source: GuardError,
    },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

impl AppModel {
    /// Assembles a model from already-parsed parts. Structural problems are
    /// left for [`validate_model`].
    pub fn new(
        global_vars: Vec<GlobalVar>,
        nodes: Vec<Node>,
        initial_node: impl Into<String>,
        string_pool: Vec<String>,
        max_widget_slots: usize,
    ) -> Result<Self, ModelError> {
        let decls = Declarations::new(
            global_vars
                .iter()
                .map(|g| (g.name.clone(), g.value.clone())),
        )
        .map_err(|e| match e {
            GuardError::DuplicateVariable(n) => {
                ModelError::Duplicate(format!("global variable `{n}`"))
            }
            other => ModelError::Invalid(other.to_string()),
        })?;
        Ok(AppModel {
            global_vars,
            nodes,
            initial_node: initial_node.into(),
            string_pool,
            max_widget_slots,
            decls: Arc::new(decls),
        })
    }

    pub fn declarations(&self) -> &Arc<Declarations> {
        &self.decls
    }

    pub fn initial_vars(&self) -> VarStore {
        VarStore::initial(self.decls.clone())
    }

    pub fn node_index(&self, node_id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.node_id == node_id)
    }

    pub fn node(&self, node_id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    /// Whether entering `destination` leaves the app under test.
    pub fn is_external(&self, destination: &str) -> bool {
        destination == EXTERNAL || self.node(destination).is_some_and(|n| n.external)
    }

    /// Number of nodes that count towards activity coverage.
    pub fn app_node_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.external).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&RawModel::from(self)).expect("model serializes");
        s.push('\n');
        s
    }
}

// ---------------------------------------------------------------------------
// JSON document

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    global_vars: Vec<RawVar>,
    nodes: Vec<RawNode>,
    initial_node: String,
    string_pool: Vec<String>,
    max_widget_slots: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVar {
    name: String,
    value: Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    node_id: String,
    #[serde(default, skip_serializing_if = "is_false")]
    external: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    crash_node: bool,
    transitions: Vec<RawTransition>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    transition_id: u32,
    #[serde(rename = "type")]
    kind: TransitionKind,
    active: bool,
    guard: Option<String>,
    set: Option<Vec<String>>,
    destination: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alt_destination: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    crash: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl From<&AppModel> for RawModel {
    fn from(m: &AppModel) -> Self {
        RawModel {
            global_vars: m
                .global_vars
                .iter()
                .map(|g| RawVar {
                    name: g.name.clone(),
                    value: g.value.clone(),
                })
                .collect(),
            nodes: m
                .nodes
                .iter()
                .map(|n| RawNode {
                    node_id: n.node_id.clone(),
                    external: n.external,
                    crash_node: n.crash_node,
                    transitions: n
                        .transitions
                        .iter()
                        .map(|t| RawTransition {
                            transition_id: t.transition_id,
                            kind: t.kind,
                            active: t.active,
                            guard: t.guard.as_ref().map(ToString::to_string),
                            set: t
                                .set
                                .as_ref()
                                .map(|s| s.iter().map(ToString::to_string).collect()),
                            destination: t.destination.clone(),
                            alt_destination: t.alt_destination.clone(),
                            crash: t.crash,
                        })
                        .collect(),
                })
                .collect(),
            initial_node: m.initial_node.clone(),
            string_pool: m.string_pool.clone(),
            max_widget_slots: m.max_widget_slots,
        }
    }
}

/// Parses a model document, resolving every guard and assignment, and
/// rejects it if any error-level diagnostic applies.
pub fn parse_model(document: &str) -> Result<AppModel, ModelError> {
    let raw: RawModel = serde_json::from_str(document).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    if raw.nodes.is_empty() {
        return Err(ModelError::Empty);
    }
    let global_vars: Vec<GlobalVar> = raw
        .global_vars
        .into_iter()
        .map(|v| GlobalVar {
            name: v.name,
            value: v.value,
        })
        .collect();
    let mut model = AppModel::new(
        global_vars,
        Vec::new(),
        raw.initial_node,
        raw.string_pool,
        raw.max_widget_slots,
    )?;
    let decls = model.decls.clone();

    for rn in raw.nodes {
        let mut transitions = Vec::with_capacity(rn.transitions.len());
        for rt in rn.transitions {
            let wrap = |text: &str, source| ModelError::Guard {
                node: rn.node_id.clone(),
                transition: rt.transition_id,
                text: text.to_string(),
                source,
            };
            let guard = match &rt.guard {
                Some(text) => Some(guard::parse_guard(text, &decls).map_err(|e| wrap(text, e))?),
                None => None,
            };
            let set = match &rt.set {
                Some(items) => Some(
                    items
                        .iter()
                        .map(|text| {
                            guard::parse_assignment(text, &decls).map_err(|e| wrap(text, e))
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                None => None,
            };
            transitions.push(Transition {
                transition_id: rt.transition_id,
                kind: rt.kind,
                active: rt.active,
                guard,
                set,
                destination: rt.destination,
                alt_destination: rt.alt_destination,
                crash: rt.crash,
            });
        }
        model.nodes.push(Node {
            node_id: rn.node_id,
            transitions,
            external: rn.external,
            crash_node: rn.crash_node,
        });
    }

    if let Some(first) = validate_model(&model)
        .into_iter()
        .find(|d| d.severity == Severity::Error)
    {
        return Err(match first.kind {
            DiagnosticKind::UnknownDestination {
                node,
                transition,
                destination,
            } => ModelError::UnknownDestination {
                node,
                transition,
                destination,
            },
            DiagnosticKind::DuplicateNode(id) => ModelError::Duplicate(format!("node `{id}`")),
            DiagnosticKind::DuplicateTransition { node, transition } => {
                ModelError::Duplicate(format!("transition {transition} in node `{node}`"))
            }
            _ => ModelError::Invalid(first.message),
        });
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagnosticKind {
    EmptyModel,
    MissingInitialNode(String),
    UnknownDestination {
        node: String,
        transition: u32,
        destination: String,
    },
    DuplicateNode(String),
    DuplicateTransition {
        node: String,
        transition: u32,
    },
    EmptyStringPool,
    TooFewWidgetSlots {
        needed: usize,
        declared: usize,
    },
    ExternalCrashNode(String),
    TextFieldWithoutInput {
        node: String,
        transition: u32,
    },
    ScrollWithoutAltDestination {
        node: String,
        transition: u32,
    },
    Unreachable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: {}", self.message)
    }
}

fn diag(severity: Severity, kind: DiagnosticKind, message: String) -> Diagnostic {
    Diagnostic {
        severity,
        kind,
        message,
    }
}

/// Checks every structural invariant of `model`. Unreachable nodes (ignoring
/// guards) are warnings; everything else is an error.
pub fn validate_model(model: &AppModel) -> Vec<Diagnostic> {
    use DiagnosticKind as K;
    use Severity::{Error, Warning};

    let mut out = Vec::new();
    if model.nodes.is_empty() {
        out.push(diag(Error, K::EmptyModel, "empty model".into()));
        return out;
    }

    let mut seen = HashSet::new();
    for n in &model.nodes {
        if !seen.insert(n.node_id.as_str()) {
            out.push(diag(
                Error,
                K::DuplicateNode(n.node_id.clone()),
                format!("duplicate node id `{}`", n.node_id),
            ));
        }
    }
    let known: HashSet<&str> = seen;

    if !known.contains(model.initial_node.as_str()) {
        out.push(diag(
            Error,
            K::MissingInitialNode(model.initial_node.clone()),
            format!("initial node `{}` does not exist", model.initial_node),
        ));
    }
    if model.string_pool.is_empty() {
        out.push(diag(
            Error,
            K::EmptyStringPool,
            "string pool is empty".into(),
        ));
    }
    let needed = model
        .nodes
        .iter()
        .map(|n| n.transitions.len())
        .max()
        .unwrap_or(0);
    if model.max_widget_slots == 0 || model.max_widget_slots < needed {
        out.push(diag(
            Error,
            K::TooFewWidgetSlots {
                needed: needed.max(1),
                declared: model.max_widget_slots,
            },
            format!(
                "max_widget_slots = {} but a node has {} transitions",
                model.max_widget_slots, needed
            ),
        ));
    }

    for n in &model.nodes {
        if n.external && n.crash_node {
            out.push(diag(
                Error,
                K::ExternalCrashNode(n.node_id.clone()),
                format!("node `{}` is both external and a crash node", n.node_id),
            ));
        }
        let mut ids = HashSet::new();
        for t in &n.transitions {
            if !ids.insert(t.transition_id) {
                out.push(diag(
                    Error,
                    K::DuplicateTransition {
                        node: n.node_id.clone(),
                        transition: t.transition_id,
                    },
                    format!(
                        "node `{}` has duplicate transition id {}",
                        n.node_id, t.transition_id
                    ),
                ));
            }
            for dest in std::iter::once(&t.destination).chain(t.alt_destination.iter()) {
                if dest != EXTERNAL && !known.contains(dest.as_str()) {
                    out.push(diag(
                        Error,
                        K::UnknownDestination {
                            node: n.node_id.clone(),
                            transition: t.transition_id,
                            destination: dest.clone(),
                        },
                        format!(
                            "node `{}` transition {} targets missing node `{}`",
                            n.node_id, t.transition_id, dest
                        ),
                    ));
                }
            }
            if t.kind == TransitionKind::TextField
                && !t.assignments().iter().any(Assignment::references_input)
            {
                out.push(diag(
                    Error,
                    K::TextFieldWithoutInput {
                        node: n.node_id.clone(),
                        transition: t.transition_id,
                    },
                    format!(
                        "text field {} in node `{}` never assigns {}",
                        t.transition_id,
                        n.node_id,
                        guard::INPUT_SYMBOL
                    ),
                ));
            }
            if t.kind == TransitionKind::Scroll && t.alt_destination.is_none() {
                out.push(diag(
                    Error,
                    K::ScrollWithoutAltDestination {
                        node: n.node_id.clone(),
                        transition: t.transition_id,
                    },
                    format!(
                        "scroll {} in node `{}` needs an alt_destination for the second direction",
                        t.transition_id, n.node_id
                    ),
                ));
            }
        }
    }

    if known.contains(model.initial_node.as_str()) {
        for id in unreachable_nodes(model) {
            out.push(diag(
                Warning,
                K::Unreachable(id.clone()),
                format!("node `{id}` is unreachable from `{}`", model.initial_node),
            ));
        }
    }
    out
}

/// Nodes that no sequence of active transitions reaches from the initial
/// node, guards ignored. Results are in model order.
fn unreachable_nodes(model: &AppModel) -> Vec<String> {
    let index: HashMap<&str, usize> = model
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.node_id.as_str(), i))
        .collect();
    let mut reached = BTreeSet::new();
    let mut queue = VecDeque::new();
    if let Some(&start) = index.get(model.initial_node.as_str()) {
        reached.insert(start);
        queue.push_back(start);
    }
    while let Some(i) = queue.pop_front() {
        for t in model.nodes[i].transitions.iter().filter(|t| t.active) {
            for dest in std::iter::once(&t.destination).chain(t.alt_destination.iter()) {
                if let Some(&j) = index.get(dest.as_str()) {
                    if reached.insert(j) {
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    model
        .nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| !reached.contains(i))
        .map(|(_, n)| n.node_id.clone())
        .collect()
}

/// Transitions of `node` that are active and whose guard holds under `vars`,
/// in model order.
pub fn enabled_transitions<'m>(
    model: &'m AppModel,
    node: &str,
    vars: &VarStore,
) -> Result<Vec<&'m Transition>, ModelError> {
    let n = model
        .node(node)
        .ok_or_else(|| ModelError::UnknownNode(node.to_string()))?;
    let mut out = Vec::new();
    for t in &n.transitions {
        if transition_enabled(t, vars).map_err(|source| ModelError::Guard {
            node: node.to_string(),
            transition: t.transition_id,
            text: t
                .guard
                .as_ref()
                .map(ToString::to_string)
                .unwrap_or_default(),
            source,
        })? {
            out.push(t);
        }
    }
    Ok(out)
}

pub(crate) fn transition_enabled(t: &Transition, vars: &VarStore) -> Result<bool, GuardError> {
    if !t.active {
        return Ok(false);
    }
    match &t.guard {
        None => Ok(true),
        Some(g) => g.holds(vars, None),
    }
}
