#![allow(dead_code)]

use audience_core::{BehavioralLog, PurchaseEvent};
use proptest::prelude::*;

pub const CATEGORIES: [&str; 3] = ["a", "b", "c"];

pub fn event(user: &str, cat: &str, t: f64, promo: bool) -> PurchaseEvent {
    PurchaseEvent {
        user_id: user.into(),
        item_id: None,
        category_id: cat.into(),
        timestamp_days: t,
        price: None,
        promo_flag: promo,
    }
}

/// Small random logs: up to 6 users, 3 categories, timestamps on a 1/8-day
/// lattice so ties occur.
pub fn arb_events(max: usize, horizon: u32) -> impl Strategy<Value = Vec<PurchaseEvent>> {
    prop::collection::vec(
        (0..6usize, 0..3usize, 0..horizon * 8, prop::bool::weighted(0.2)),
        1..max,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .map(|(u, c, t, p)| event(&format!("u{u}"), CATEGORIES[c], t as f64 / 8.0, p))
            .collect()
    })
}

pub fn log_of(events: Vec<PurchaseEvent>) -> BehavioralLog {
    BehavioralLog::from_events(events, None, None).unwrap()
}
