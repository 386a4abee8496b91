//! Panel quadrature over the input biphoton's rotated support box.
//!
//! The box is `m in [m0, m1]`, `d in [d0, d1]` with `m = (t_s + t_i)/2` and
//! `d = t_s - t_i`. It is integrated as an iterated integral in `(t_s, t_i)`
//! so that the signal and idler factors separate; every kink of the inner
//! limits and every discontinuity of the entry response becomes a panel edge.

use std::collections::HashMap;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 8;
const MIN_PANEL_NODES: usize = 4;
const EDGE_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    GaussLegendre,
    Trapezoid,
}

/// Node budget for the box integral. `nodes_mean` are spread over the signal
/// entry time, which spans the mean-time extent; `nodes_diff` over the idler
/// entry time at fixed signal time, which spans the difference-time extent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes_mean: usize,
    pub nodes_diff: usize,
    pub rule: QuadratureRule,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_mean: 200,
            nodes_diff: 50,
            rule: QuadratureRule::GaussLegendre,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_mean < MIN_NODES || self.nodes_diff < MIN_NODES {
            return Err(Error::invalid(
                "quadrature",
                format!(
                    "need at least {MIN_NODES} nodes per axis, got {} x {}",
                    self.nodes_mean, self.nodes_diff
                ),
            ));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        Self {
            nodes_mean: 2 * self.nodes_mean,
            nodes_diff: 2 * self.nodes_diff,
            rule: self.rule,
        }
    }
}

/// Caches reference rules on `[-1, 1]` by node count.
#[derive(Default)]
pub struct RuleCache {
    gauss: HashMap<usize, Vec<(f64, f64)>>,
}

impl RuleCache {
    fn reference(&mut self, n: usize) -> &[(f64, f64)] {
        self.gauss.entry(n).or_insert_with(|| {
            let degree = NonZeroUsize::new(n).expect("node count is positive");
            GaussLegendre::new(degree).as_node_weight_pairs().to_vec()
        })
    }

    /// Appends `n` nodes of `rule` on `[a, b]` to `out`.
    pub fn push_panel(&mut self, rule: QuadratureRule, a: f64, b: f64, n: usize, out: &mut Vec<(f64, f64)>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        match rule {
            QuadratureRule::GaussLegendre => {
                for &(x, w) in self.reference(n) {
                    out.push((mid + half * x, half * w));
                }
            }
            QuadratureRule::Trapezoid => {
                let n = n.max(2);
                let h = (b - a) / (n - 1) as f64;
                for k in 0..n {
                    let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
                    out.push((a + k as f64 * h, w));
                }
            }
        }
    }

    /// Nodes over `[edges[0], edges.last()]` with a panel between consecutive
    /// edges; `total` nodes are shared in proportion to panel length.
    pub fn panels(&mut self, rule: QuadratureRule, edges: &[f64], total: usize, out: &mut Vec<(f64, f64)>) {
        let Some((&first, &last)) = edges.first().zip(edges.last()) else {
            return;
        };
        let length = last - first;
        if length <= 0.0 {
            return;
        }
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a <= EDGE_TOL {
                continue;
            }
            let share = ((total as f64) * (b - a) / length).ceil() as usize;
            self.push_panel(rule, a, b, share.max(MIN_PANEL_NODES), out);
        }
    }
}

/// Sorted, deduplicated panel edges of `[lo, hi]` including the interior `cuts`.
pub fn panel_edges(lo: f64, hi: f64, cuts: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut edges = vec![lo, hi];
    edges.extend(cuts.into_iter().filter(|&c| c > lo + EDGE_TOL && c < hi - EDGE_TOL));
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() <= EDGE_TOL);
    edges
}

#[derive(Clone, Debug)]
pub struct OuterNode {
    pub t: f64,
    pub weight: f64,
    pub inner: std::ops::Range<usize>,
}

/// Iterated node set for `int dt_s int dt_i` over box ∩ window.
#[derive(Clone, Debug, Default)]
pub struct BoxNodes {
    pub outer: Vec<OuterNode>,
    pub inner: Vec<(f64, f64)>,
}

/// Rotated box plus the entry window and the entry-time discontinuities.
#[derive(Clone, Debug)]
pub struct BoxRegion {
    pub mean: (f64, f64),
    pub diff: (f64, f64),
    pub window: (f64, f64),
    pub breakpoints: Vec<f64>,
}

impl BoxRegion {
    fn inner_limits(&self, ts: f64) -> (f64, f64) {
        let (m0, m1) = self.mean;
        let (d0, d1) = self.diff;
        let lo = (2.0 * m0 - ts).max(ts - d1).max(self.window.0);
        let hi = (2.0 * m1 - ts).min(ts - d0).min(self.window.1);
        (lo, hi)
    }

    fn outer_range(&self) -> (f64, f64) {
        let (m0, m1) = self.mean;
        let (d0, d1) = self.diff;
        let lo = (m0 + 0.5 * d0).max(self.window.0);
        let hi = (m1 + 0.5 * d1).min(self.window.1);
        (lo, hi)
    }

    pub fn is_empty(&self) -> bool {
        let (lo, hi) = self.outer_range();
        self.mean.1 <= self.mean.0 || self.diff.1 <= self.diff.0 || hi <= lo
    }

    pub fn nodes(&self, spec: &QuadratureSpec, rules: &mut RuleCache) -> BoxNodes {
        let mut out = BoxNodes::default();
        if self.is_empty() {
            return out;
        }
        let (lo, hi) = self.outer_range();
        let (m0, m1) = self.mean;
        let (d0, d1) = self.diff;

        let mut cuts = vec![m0 + 0.5 * d0, m0 + 0.5 * d1, m1 + 0.5 * d0, m1 + 0.5 * d1];
        let mut inner_breaks = self.breakpoints.clone();
        inner_breaks.push(self.window.0);
        inner_breaks.push(self.window.1);
        for &b in inner_breaks.iter().filter(|b| b.is_finite()) {
            cuts.extend_from_slice(&[b, 2.0 * m0 - b, b + d1, 2.0 * m1 - b, b + d0]);
        }
        let edges = panel_edges(lo, hi, cuts);

        let mut outer = Vec::new();
        rules.panels(spec.rule, &edges, spec.nodes_mean, &mut outer);

        for (t, weight) in outer {
            let (a, b) = self.inner_limits(t);
            if b <= a {
                continue;
            }
            let start = out.inner.len();
            let inner_edges = panel_edges(a, b, self.breakpoints.iter().copied());
            rules.panels(spec.rule, &inner_edges, spec.nodes_diff, &mut out.inner);
            out.outer.push(OuterNode {
                t,
                weight,
                inner: start..out.inner.len(),
            });
        }
        out
    }
}

impl BoxNodes {
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.outer
            .iter()
            .map(|o| o.weight * self.inner[o.inner.clone()].iter().map(|&(t, w)| w * f(o.t, t)).sum::<f64>())
            .sum()
    }

    pub fn node_count(&self) -> usize {
        self.inner.len()
    }
}
