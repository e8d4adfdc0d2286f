//! Breadth-first search over the simulator with every pool string except
//! the password: nothing behind a login may appear.

use std::collections::BTreeSet;
use std::sync::Arc;

use fatesim_core::env::RewardParams;
use fatesim_core::oracle::AppMdp;
use fatesim_core::suite::{self, App, SuiteConfig};
use fatesim_core::AppModel;

const MAX_STATES: usize = 40_000;

fn reachable(model: &Arc<AppModel>, strings: &[usize]) -> (BTreeSet<String>, bool) {
    let mdp = AppMdp::explore_bounded(
        Arc::clone(model),
        RewardParams::default(),
        strings,
        MAX_STATES,
    )
    .unwrap();
    let names = mdp
        .reachable_nodes()
        .into_iter()
        .map(|i| model.nodes[i].node_id.clone())
        .collect();
    (names, mdp.truncated)
}

fn check(app: App, password: &str, gated: &[&str], open: &[&str]) {
    let model = Arc::new(suite::generate(&SuiteConfig::new(app)).unwrap());
    let pw = model
        .string_pool
        .iter()
        .position(|s| s == password)
        .unwrap();
    let wrong: Vec<usize> = (0..model.string_pool.len()).filter(|&i| i != pw).collect();
    let (seen, truncated) = reachable(&model, &wrong);
    for node in gated {
        assert!(
            !seen.contains(*node),
            "{}: `{node}` reached without the password",
            app.name()
        );
    }
    for node in open {
        assert!(
            seen.contains(*node),
            "{}: `{node}` should be reachable",
            app.name()
        );
    }
    // apps without unbounded counters ahead of the login are searched exhaustively
    if app != App::Market {
        assert!(!truncated, "{}: search hit the state bound", app.name());
    }

    // with the password available the first gated node does show up
    let user = app.credentials()[0];
    let user = model.string_pool.iter().position(|s| s == user).unwrap();
    let (with_pw, _) = reachable(&model, &[user, pw]);
    assert!(
        with_pw.contains(gated[0]),
        "{}: `{}` unreachable even with the password",
        app.name(),
        gated[0]
    );
}

#[test]
fn social_login_blocks_everything() {
    check(
        App::Social,
        suite::SOCIAL_PASSWORD,
        &["main_act", "friends", "messages", "settings"],
        &["login"],
    );
}

#[test]
fn bank_login_blocks_everything() {
    check(
        App::Bank,
        suite::BANK_PASSWORD,
        &["main_act", "accounts", "cards"],
        &["login"],
    );
}

#[test]
fn market_login_blocks_account_and_orders() {
    check(
        App::Market,
        suite::MARKET_PASSWORD,
        &["account", "orders", "payment", "order_done"],
        &["home", "search", "product", "cart", "checkout", "login"],
    );
}
