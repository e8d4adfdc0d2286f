//! Generators for the four benchmark apps and their complexity presets.
//!
//! Player is an unguarded navigation tree. Social, Bank and Market put most
//! of their activities behind a password-guarded login; Bank adds a second
//! PIN-guarded layer and Market a cart and order flow.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::model::{parse_model, AppModel, ModelError, EXTERNAL};

pub const SOCIAL_USER: &str = "alice";
pub const SOCIAL_PASSWORD: &str = "s3cret";
pub const BANK_USER: &str = "bob";
pub const BANK_PASSWORD: &str = "b4nkpass";
pub const BANK_PIN: &str = "7391";
pub const MARKET_USER: &str = "carol";
pub const MARKET_PASSWORD: &str = "m4rket";

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown app `{0}` (expected player, social, bank or market)")]
    UnknownApp(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid suite configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum App {
    Player,
    Social,
    Bank,
    Market,
}

impl App {
    pub const ALL: [App; 4] = [App::Player, App::Social, App::Bank, App::Market];

    pub fn name(self) -> &'static str {
        match self {
            App::Player => "player",
            App::Social => "social",
            App::Bank => "bank",
            App::Market => "market",
        }
    }

    /// Strings the pool must contain for every activity to be reachable.
    pub fn credentials(self) -> &'static [&'static str] {
        match self {
            App::Player => &[],
            App::Social => &[SOCIAL_USER, SOCIAL_PASSWORD],
            App::Bank => &[BANK_USER, BANK_PASSWORD, BANK_PIN],
            App::Market => &[MARKET_USER, MARKET_PASSWORD],
        }
    }
}

impl std::str::FromStr for App {
    type Err = SuiteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        App::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| SuiteError::UnknownApp(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub app: App,
    pub string_pool_size: usize,
    pub dummy_buttons: usize,
    pub seed: u64,
    pub player_depth: usize,
    pub player_branching: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            app: App::Social,
            string_pool_size: 20,
            dummy_buttons: 0,
            seed: 0,
            player_depth: 3,
            player_branching: 4,
        }
    }
}

impl SuiteConfig {
    pub fn new(app: App) -> Self {
        SuiteConfig {
            app,
            ..SuiteConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        if self.string_pool_size < self.app.credentials().len().max(1) {
            return Err(SuiteError::Invalid(format!(
                "string pool of {} cannot hold the {} credential strings",
                self.string_pool_size,
                self.app.credentials().len()
            )));
        }
        if self.app == App::Player && (self.player_depth == 0 || self.player_branching == 0) {
            return Err(SuiteError::Invalid(
                "player depth and branching must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The preset matrix: Player at 20 strings, the other apps at 20/40/80
/// strings and with 5 or 10 dummy buttons on their login activities.
pub fn list_presets() -> Vec<(String, SuiteConfig)> {
    let mut out = vec![("player/20_str".to_string(), SuiteConfig::new(App::Player))];
    for app in [App::Social, App::Bank, App::Market] {
        for pool in [20, 40, 80] {
            out.push((
                format!("{}/{pool}_str", app.name()),
                SuiteConfig {
                    string_pool_size: pool,
                    ..SuiteConfig::new(app)
                },
            ));
        }
        for dummies in [5, 10] {
            out.push((
                format!("{}/aug_{dummies}", app.name()),
                SuiteConfig {
                    dummy_buttons: dummies,
                    ..SuiteConfig::new(app)
                },
            ));
        }
    }
    out
}

pub fn preset(name: &str) -> Result<SuiteConfig, SuiteError> {
    list_presets()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, c)| c)
        .ok_or_else(|| SuiteError::UnknownPreset(name.to_string()))
}

pub fn generate(config: &SuiteConfig) -> Result<AppModel, SuiteError> {
    config.validate()?;
    let mut b = Builder::default();
    match config.app {
        App::Player => player(&mut b, config.player_depth, config.player_branching),
        App::Social => social(&mut b),
        App::Bank => bank(&mut b),
        App::Market => market(&mut b),
    }
    for login in b.login_nodes.clone() {
        for _ in 0..config.dummy_buttons {
            b.add(&login, tr("button", &login));
        }
    }
    let pool = string_pool(config.app, config.string_pool_size, config.seed);
    Ok(parse_model(&b.finish(&pool).to_string())?)
}

/// Credentials at seeded positions among distinct seeded filler words.
pub fn string_pool(app: App, size: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9001);
    let creds = app.credentials();
    let mut seen: BTreeSet<String> = creds.iter().map(|s| s.to_string()).collect();
    let mut pool = Vec::with_capacity(size);
    while pool.len() + creds.len() < size {
        let len = rng.random_range(4..=8);
        let word: String = (0..len)
            .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
            .collect();
        if seen.insert(word.clone()) {
            pool.push(word);
        }
    }
    for c in creds {
        let at = rng.random_range(0..=pool.len());
        pool.insert(at, c.to_string());
    }
    pool
}

struct Tr {
    kind: &'static str,
    dest: String,
    guard: Option<String>,
    set: Vec<String>,
    alt: Option<String>,
}

fn tr(kind: &'static str, dest: &str) -> Tr {
    Tr {
        kind,
        dest: dest.to_string(),
        guard: None,
        set: Vec::new(),
        alt: None,
    }
}

impl Tr {
    fn guard(mut self, g: &str) -> Self {
        self.guard = Some(g.to_string());
        self
    }

    fn set(mut self, a: &str) -> Self {
        self.set.push(a.to_string());
        self
    }

    fn alt(mut self, d: &str) -> Self {
        self.alt = Some(d.to_string());
        self
    }
}

fn text(dest: &str, var: &str) -> Tr {
    tr("text_field", dest).set(&format!("{var} = __input__"))
}

#[derive(Default)]
struct Builder {
    vars: Vec<(String, Json)>,
    nodes: Vec<(String, Vec<Tr>)>,
    initial: Option<String>,
    login_nodes: Vec<String>,
}

impl Builder {
    fn var(&mut self, name: &str, value: Json) {
        self.vars.push((name.to_string(), value));
    }

    fn node(&mut self, id: &str, transitions: Vec<Tr>) {
        if self.initial.is_none() {
            self.initial = Some(id.to_string());
        }
        self.nodes.push((id.to_string(), transitions));
    }

    fn add(&mut self, id: &str, t: Tr) {
        let node = self
            .nodes
            .iter_mut()
            .find(|(n, _)| n == id)
            .expect("node exists");
        node.1.push(t);
    }

    fn finish(self, pool: &[String]) -> Json {
        let slots = self
            .nodes
            .iter()
            .map(|(_, ts)| ts.len())
            .max()
            .unwrap_or(0)
            .max(1);
        let nodes: Vec<Json> = self
            .nodes
            .iter()
            .map(|(id, ts)| {
                let transitions: Vec<Json> = ts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let mut o = json!({
                            "transition_id": i,
                            "type": t.kind,
                            "active": true,
                            "guard": t.guard,
                            "set": if t.set.is_empty() { Json::Null } else { json!(t.set) },
                            "destination": t.dest,
                        });
                        if let Some(a) = &t.alt {
                            o["alt_destination"] = json!(a);
                        }
                        o
                    })
                    .collect();
                json!({"node_id": id, "transitions": transitions})
            })
            .collect();
        json!({
            "global_vars": self.vars.iter().map(|(n, v)| json!({"name": n, "value": v})).collect::<Vec<_>>(),
            "nodes": nodes,
            "initial_node": self.initial.expect("at least one node"),
            "string_pool": pool,
            "max_widget_slots": slots,
        })
    }
}

fn system_vars(b: &mut Builder) {
    b.var("internet_on", json!(1));
    b.var("rotated", json!(0));
}

fn player(b: &mut Builder, depth: usize, branching: usize) {
    system_vars(b);
    b.node("splash", vec![tr("button", "home")]);
    // breadth-first tree: level 1 is `home`, each level multiplies by `branching`
    let mut level = vec!["home".to_string()];
    let mut parents: Vec<(String, Option<String>)> = vec![("home".to_string(), None)];
    for _ in 1..depth {
        let mut next = Vec::new();
        for p in &level {
            for k in 0..branching {
                let child = format!("{p}_{k}");
                parents.push((child.clone(), Some(p.clone())));
                next.push(child);
            }
        }
        level = next;
    }
    for (id, parent) in &parents {
        let mut ts: Vec<Tr> = parents
            .iter()
            .filter(|(_, p)| p.as_deref() == Some(id.as_str()))
            .map(|(c, _)| tr("button", c))
            .collect();
        match parent {
            Some(p) => ts.push(tr("button", p)),
            None => ts.push(tr("button", EXTERNAL)),
        }
        if ts.len() == 1 {
            // leaf: a media control that stays put
            ts.insert(0, tr("long_button", id));
        }
        b.node(id, ts);
    }
}

fn login_node(b: &mut Builder, id: &str, dest: &str, on_success: Option<&str>, back: Option<&str>) {
    let mut login = tr("button", dest).guard("user_pass == real_pass");
    if let Some(s) = on_success {
        login = login.set(s);
    }
    let mut ts = vec![
        text(id, "user_name"),
        text(id, "user_pass"),
        login,
        tr("button", EXTERNAL),
    ];
    if let Some(back) = back {
        ts.push(tr("button", back));
    }
    b.node(id, ts);
    b.login_nodes.push(id.to_string());
}

fn social(b: &mut Builder) {
    b.var("real_pass", json!(SOCIAL_PASSWORD));
    b.var("user_pass", json!(""));
    b.var("user_name", json!(""));
    b.var("count_messages", json!(0));
    b.var("draft", json!(""));
    b.var("query", json!(""));
    b.var("display_name", json!(""));
    system_vars(b);
    login_node(b, "login", "main_act", None, None);
    b.node(
        "main_act",
        vec![
            tr("button", "profile"),
            tr("button", "friends"),
            tr("button", "messages"),
            tr("button", "search"),
            tr("button", "settings"),
            tr("button", "login"),
        ],
    );
    b.node(
        "profile",
        vec![
            tr("button", "edit_profile"),
            tr("button", "photos"),
            tr("button", "main_act"),
        ],
    );
    b.node(
        "edit_profile",
        vec![
            text("edit_profile", "display_name"),
            tr("button", "profile"),
        ],
    );
    b.node(
        "photos",
        vec![
            tr("button", EXTERNAL),
            tr("scroll", "photos").alt("profile"),
        ],
    );
    b.node(
        "friends",
        vec![
            tr("button", "friend_profile"),
            tr("button", "search"),
            tr("button", "main_act"),
        ],
    );
    b.node(
        "friend_profile",
        vec![tr("button", "compose"), tr("button", "friends")],
    );
    b.node(
        "search",
        vec![
            text("search", "query"),
            tr("button", "search_results").guard("internet_on == 1"),
            tr("button", "main_act"),
        ],
    );
    b.node(
        "search_results",
        vec![tr("button", "friend_profile"), tr("button", "search")],
    );
    b.node(
        "messages",
        vec![
            tr("button", "chat").guard("count_messages >= 1"),
            tr("button", "compose"),
            tr("button", "main_act"),
        ],
    );
    b.node(
        "compose",
        vec![
            text("compose", "draft"),
            tr("button", "messages").set("count_messages = count_messages + 1"),
            tr("button", "messages"),
        ],
    );
    b.node(
        "chat",
        vec![
            text("chat", "draft"),
            tr("button", "chat").set("count_messages = count_messages + 1"),
            tr("button", "messages"),
        ],
    );
    b.node(
        "settings",
        vec![
            tr("button", "privacy"),
            tr("button", "notifications"),
            tr("button", "about"),
            tr("button", "main_act"),
        ],
    );
    b.node(
        "privacy",
        vec![tr("button", "privacy"), tr("button", "settings")],
    );
    b.node(
        "notifications",
        vec![tr("long_button", "notifications"), tr("button", "settings")],
    );
    b.node(
        "about",
        vec![tr("button", EXTERNAL), tr("button", "settings")],
    );
}

fn bank(b: &mut Builder) {
    b.var("real_pass", json!(BANK_PASSWORD));
    b.var("real_pin", json!(BANK_PIN));
    b.var("user_pass", json!(""));
    b.var("user_name", json!(""));
    b.var("entered_pin", json!(""));
    b.var("recipient", json!(""));
    b.var("bill", json!(""));
    system_vars(b);
    login_node(b, "login", "main_act", None, None);
    b.node(
        "main_act",
        vec![
            tr("button", "accounts"),
            tr("button", "transfer"),
            tr("button", "payments"),
            tr("button", "cards"),
            tr("button", "settings"),
            tr("button", "login"),
        ],
    );
    b.node(
        "accounts",
        vec![tr("button", "account_detail"), tr("button", "main_act")],
    );
    b.node(
        "account_detail",
        vec![
            tr("button", "statements"),
            tr("scroll", "account_detail").alt("accounts"),
            tr("button", "accounts"),
        ],
    );
    b.node(
        "statements",
        vec![tr("button", EXTERNAL), tr("button", "account_detail")],
    );
    b.node(
        "transfer",
        vec![
            text("transfer", "recipient"),
            text("transfer", "entered_pin"),
            tr("button", "transfer_done").guard("entered_pin == real_pin"),
            tr("button", "main_act"),
        ],
    );
    b.node("transfer_done", vec![tr("button", "main_act")]);
    b.node(
        "payments",
        vec![
            text("payments", "bill"),
            text("payments", "entered_pin"),
            tr("button", "payment_done").guard("entered_pin == real_pin"),
            tr("button", "main_act"),
        ],
    );
    b.node("payment_done", vec![tr("button", "main_act")]);
    b.node(
        "cards",
        vec![tr("button", "card_detail"), tr("button", "main_act")],
    );
    b.node(
        "card_detail",
        vec![
            tr("long_button", "card_detail").alt("card_blocked"),
            tr("button", "cards"),
        ],
    );
    b.node("card_blocked", vec![tr("button", "cards")]);
    b.node(
        "settings",
        vec![tr("button", "security"), tr("button", "main_act")],
    );
    b.node(
        "security",
        vec![text("security", "entered_pin"), tr("button", "settings")],
    );
}

fn market(b: &mut Builder) {
    b.var("real_pass", json!(MARKET_PASSWORD));
    b.var("user_pass", json!(""));
    b.var("user_name", json!(""));
    b.var("query", json!(""));
    b.var("card", json!(""));
    b.var("cart_count", json!(0));
    b.var("logged_in", json!(0));
    b.var("order_count", json!(0));
    system_vars(b);
    b.node(
        "home",
        vec![
            tr("button", "search"),
            tr("button", "categories"),
            tr("button", "cart"),
            tr("button", "login").guard("logged_in == 0"),
            tr("button", "account").guard("logged_in == 1"),
            tr("button", EXTERNAL),
        ],
    );
    b.node(
        "search",
        vec![
            text("search", "query"),
            tr("button", "results").guard("internet_on == 1"),
            tr("button", "home"),
        ],
    );
    b.node(
        "results",
        vec![
            tr("button", "product"),
            tr("scroll", "results").alt("search"),
            tr("button", "search"),
        ],
    );
    b.node(
        "categories",
        vec![tr("button", "category"), tr("button", "home")],
    );
    b.node(
        "category",
        vec![tr("button", "product"), tr("button", "categories")],
    );
    b.node(
        "product",
        vec![
            tr("button", "product").set("cart_count = cart_count + 1"),
            tr("button", "reviews"),
            tr("button", "cart"),
            tr("button", "home"),
        ],
    );
    b.node("reviews", vec![tr("scroll", "reviews").alt("product")]);
    b.node(
        "cart",
        vec![
            tr("button", "checkout").guard("cart_count >= 1"),
            tr("button", "home"),
        ],
    );
    b.node(
        "checkout",
        vec![
            tr("button", "payment").guard("logged_in == 1"),
            tr("button", "login").guard("logged_in == 0"),
            tr("button", "cart"),
        ],
    );
    login_node(b, "login", "account", Some("logged_in = 1"), Some("home"));
    b.node(
        "account",
        vec![
            tr("button", "orders"),
            tr("button", "home").set("logged_in = 0"),
            tr("button", "home"),
        ],
    );
    b.node(
        "payment",
        vec![
            text("payment", "card"),
            tr("button", "order_done")
                .set("order_count = order_count + 1")
                .set("cart_count = 0"),
            tr("button", "checkout"),
        ],
    );
    b.node(
        "order_done",
        vec![tr("button", "orders"), tr("button", "home")],
    );
    b.node(
        "orders",
        vec![
            tr("button", "order_detail").guard("order_count >= 1"),
            tr("button", "account"),
        ],
    );
    b.node(
        "order_detail",
        vec![tr("button", EXTERNAL), tr("button", "orders")],
    );
}
