//! Descriptive statistics of a behavioral log: volume skew across users and
//! categories, regular/occasional users and head/tail categories.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::BehavioralLog;

/// Length of a "month" bucket in days, counted from the window start.
pub const MONTH_DAYS: f64 = 30.0;
pub const DEFAULT_REGULAR_MONTHS: usize = 5;
pub const DEFAULT_HEAD_PURCHASES: u64 = 350_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularitySplit {
    pub threshold_months: usize,
    pub regular_users: usize,
    pub occasional_users: usize,
    pub regular_user_share: Option<f64>,
    pub occasional_user_share: Option<f64>,
    pub regular_purchase_share: Option<f64>,
    pub occasional_purchase_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadTailSplit {
    pub threshold_purchases: u64,
    pub head_categories: Vec<String>,
    pub tail_categories: Vec<String>,
    pub head_purchase_share: Option<f64>,
    pub tail_purchase_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub users: usize,
    pub categories: usize,
    pub purchases: u64,
    pub window_days: f64,
    /// purchases per user → number of users
    pub purchases_per_user: BTreeMap<usize, usize>,
    /// category id → purchases
    pub purchases_per_category: BTreeMap<String, u64>,
    /// distinct categories per user → number of users
    pub unique_categories_per_user: BTreeMap<usize, usize>,
    pub regularity: RegularitySplit,
    pub head_tail: HeadTailSplit,
}

fn share(part: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| part as f64 / total as f64)
}

/// Summarizes `log`. A user is regular when they purchased in at least
/// `regular_threshold` distinct 30-day buckets; a category is head when it
/// has strictly more than `head_threshold` purchases.
pub fn log_stats(log: &BehavioralLog, regular_threshold: usize, head_threshold: u64) -> StatsReport {
    let mut purchases_per_user = BTreeMap::new();
    let mut unique_categories_per_user = BTreeMap::new();
    let (mut regular_users, mut regular_purchases) = (0usize, 0u64);
    let mut active_users = 0usize;
    for u in log.users() {
        let n = u.events.len();
        *purchases_per_user.entry(n).or_insert(0) += 1;
        let cats: BTreeSet<usize> = u.events.iter().map(|e| e.category).collect();
        *unique_categories_per_user.entry(cats.len()).or_insert(0) += 1;
        if n == 0 {
            continue;
        }
        active_users += 1;
        let months: BTreeSet<u64> = u
            .events
            .iter()
            .map(|e| (e.timestamp / MONTH_DAYS).floor() as u64)
            .collect();
        if months.len() >= regular_threshold {
            regular_users += 1;
            regular_purchases += n as u64;
        }
    }
    let totals = log.category_totals();
    let purchases: u64 = totals.iter().sum();
    let occasional_users = active_users - regular_users;

    let mut head_categories = Vec::new();
    let mut tail_categories = Vec::new();
    let mut head_purchases = 0u64;
    let mut purchases_per_category = BTreeMap::new();
    for (c, &n) in totals.iter().enumerate() {
        let id = log.categories().id(c).to_string();
        purchases_per_category.insert(id.clone(), n);
        if n > head_threshold {
            head_categories.push(id);
            head_purchases += n;
        } else {
            tail_categories.push(id);
        }
    }

    StatsReport {
        users: log.num_users(),
        categories: log.num_categories(),
        purchases,
        window_days: log.window(),
        purchases_per_user,
        purchases_per_category,
        unique_categories_per_user,
        regularity: RegularitySplit {
            threshold_months: regular_threshold,
            regular_users,
            occasional_users,
            regular_user_share: share(regular_users as u64, active_users as u64),
            occasional_user_share: share(occasional_users as u64, active_users as u64),
            regular_purchase_share: share(regular_purchases, purchases),
            occasional_purchase_share: share(purchases - regular_purchases, purchases),
        },
        head_tail: HeadTailSplit {
            threshold_purchases: head_threshold,
            head_categories,
            tail_categories,
            head_purchase_share: share(head_purchases, purchases),
            tail_purchase_share: share(purchases - head_purchases, purchases),
        },
    }
}
