//! Analytic parameter and FLOP accounting for an operation graph, and the
//! 30M-parameter / 4T-FLOP gate for one 768x1536 RGB output.
//!
//! Cost formulas (`m` = FLOPs per multiply-add, 2 by default):
//!
//! | kind        | FLOPs                                    |
//! |-------------|------------------------------------------|
//! | conv2d      | m * K^2 * Cin * Cout * H * W             |
//! | pointwise   | m * Cin * Cout * H * W                   |
//! | resample    | m * taps * C * H * W                     |
//! | blockmatch  | 3 * (2r+1)^2 * B^2 * tiles               |
//! | lk_iter     | iters * tiles * (67 * B^2 + 70)          |
//! | elementwise | c * C * H * W                            |
//! | reduce      | c * C * H * W                            |
//! | fft         | round(5 * N * log2 N) per transform      |
//!
//! Block matching costs a subtract, an absolute value and an accumulate per
//! pixel and candidate. The pipeline graph repeats it twice per search start
//! (brightness-ratio pass, then the scaled difference pass) for up to six
//! starts per tile. One Lucas-Kanade iteration per pixel costs bilinear
//! samples of target and mask (16), an interpolated slope (10), the weight,
//! Jacobian and residual (5), and accumulating the 3x3 normal equations and
//! right-hand side (36); the damped 3x3 Cramer solve and update per tile
//! cost 70. Every node is multiplied by its `repeat` count.

use serde::{Deserialize, Serialize};

use crate::align::MAX_SEARCH_STARTS;
use crate::error::{Error, Result};
use crate::isp::RestoreConfig;

pub const PARAM_LIMIT: u64 = 30_000_000;
pub const FLOP_LIMIT: u64 = 4_000_000_000_000;
/// Output size the limits refer to.
pub const BUDGET_HEIGHT: usize = 768;
pub const BUDGET_WIDTH: usize = 1536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpKind {
    Conv2d { k: usize, cin: usize, cout: usize, h: usize, w: usize },
    Pointwise { cin: usize, cout: usize, h: usize, w: usize },
    Resample { taps: usize, channels: usize, h: usize, w: usize },
    Blockmatch { radius: usize, block: usize, tiles: usize },
    LkIter { iters: usize, tiles: usize, block: usize },
    Elementwise { ops: usize, channels: usize, h: usize, w: usize },
    Reduce { ops: usize, channels: usize, h: usize, w: usize },
    Fft { n: usize, transforms: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpNode {
    pub name: String,
    #[serde(flatten)]
    pub op: OpKind,
    #[serde(default)]
    pub params: u64,
    #[serde(default = "one")]
    pub repeat: u64,
}

fn one() -> u64 {
    1
}

impl OpNode {
    pub fn new(name: impl Into<String>, op: OpKind) -> Self {
        Self {
            name: name.into(),
            op,
            params: 0,
            repeat: 1,
        }
    }

    pub fn times(mut self, repeat: u64) -> Self {
        self.repeat = repeat;
        self
    }

    pub fn with_params(mut self, params: u64) -> Self {
        self.params = params;
        self
    }
}

/// FLOPs charged per multiply-add.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MacConvention {
    One,
    #[default]
    Two,
}

impl MacConvention {
    pub fn from_flops(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            _ => Err(Error::Validation(format!("--mac-flops must be 1 or 2, got {n}"))),
        }
    }

    fn factor(self) -> u64 {
        match self {
            Self::One => 1,
            Self::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub params: u64,
    pub flops: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            params: PARAM_LIMIT,
            flops: FLOP_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCost {
    pub name: String,
    pub flops: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub nodes: Vec<NodeCost>,
    pub total_params: u64,
    pub total_flops: u64,
    pub limits: Limits,
    pub pass: bool,
}

impl BudgetReport {
    /// A report carrying only totals, e.g. numbers published for another method.
    pub fn from_totals(total_params: u64, total_flops: u64) -> Self {
        let limits = Limits::default();
        Self {
            nodes: Vec::new(),
            total_params,
            total_flops,
            pass: total_params <= limits.params && total_flops <= limits.flops,
            limits,
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<28} {:>18} {:>10}\n", "node", "FLOPs", "params");
        for n in &self.nodes {
            s += &format!("{:<28} {:>18} {:>10}\n", n.name, n.flops, n.params);
        }
        s += &format!("{:<28} {:>18} {:>10}\n", "total", self.total_flops, self.total_params);
        s += &format!(
            "limits: {} params, {} FLOPs -> {}\n",
            self.limits.params,
            self.limits.flops,
            if self.pass { "PASS" } else { "FAIL" }
        );
        s
    }
}

fn dims_ok(dims: &[usize]) -> bool {
    dims.iter().all(|&d| d > 0)
}

fn node_flops(node: &OpNode, input: (usize, usize), mac: MacConvention) -> Result<u64> {
    let (ih, iw) = input;
    let bad = |why: &str| Err(Error::Validation(format!("node {:?}: {why}", node.name)));
    let spatial = |h: usize, w: usize| h <= ih && w <= iw;
    let m = mac.factor();
    let u = |v: usize| v as u64;
    let flops = match node.op {
        OpKind::Conv2d { k, cin, cout, h, w } => {
            if !dims_ok(&[k, cin, cout, h, w]) || !spatial(h, w) {
                return bad("conv2d needs positive sizes within the input");
            }
            m * u(k * k) * u(cin) * u(cout) * u(h) * u(w)
        }
        OpKind::Pointwise { cin, cout, h, w } => {
            if !dims_ok(&[cin, cout, h, w]) || !spatial(h, w) {
                return bad("pointwise needs positive sizes within the input");
            }
            m * u(cin) * u(cout) * u(h) * u(w)
        }
        OpKind::Resample { taps, channels, h, w } => {
            if !dims_ok(&[taps, channels, h, w]) || !spatial(h, w) {
                return bad("resample needs positive sizes within the input");
            }
            m * u(taps) * u(channels) * u(h) * u(w)
        }
        OpKind::Blockmatch { radius, block, tiles } => {
            if !dims_ok(&[block, tiles]) {
                return bad("blockmatch needs positive block and tile count");
            }
            let cand = u(2 * radius + 1);
            3 * cand * cand * u(block * block) * u(tiles)
        }
        OpKind::LkIter { iters, tiles, block } => {
            if !dims_ok(&[tiles, block]) {
                return bad("lk_iter needs positive block and tile count");
            }
            u(iters) * u(tiles) * (67 * u(block * block) + 70)
        }
        OpKind::Elementwise { ops, channels, h, w } | OpKind::Reduce { ops, channels, h, w } => {
            if !dims_ok(&[channels, h, w]) || !spatial(h, w) {
                return bad("needs positive sizes within the input");
            }
            u(ops) * u(channels) * u(h) * u(w)
        }
        OpKind::Fft { n, transforms } => {
            if n == 0 {
                return bad("fft length must be positive");
            }
            let nf = n as f64;
            (5.0 * nf * nf.log2()).round() as u64 * u(transforms)
        }
    };
    Ok(flops * node.repeat)
}

/// Total parameters and FLOPs of `graph` for an input of `input = (H, W)`.
pub fn count_flops(graph: &[OpNode], input: (usize, usize), mac: MacConvention) -> Result<BudgetReport> {
    if input.0 == 0 || input.1 == 0 {
        return Err(Error::Validation("input dimensions must be positive".into()));
    }
    let nodes = graph
        .iter()
        .map(|n| {
            Ok(NodeCost {
                name: n.name.clone(),
                flops: node_flops(n, input, mac)?,
                params: n.params,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total_params = nodes.iter().map(|n| n.params).sum();
    let total_flops = nodes.iter().map(|n| n.flops).sum();
    let mut r = BudgetReport::from_totals(total_params, total_flops);
    r.nodes = nodes;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub limit: String,
    pub value: u64,
    pub max: u64,
    /// `value / max`.
    pub overshoot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCheck {
    pub pass: bool,
    /// Unused share of each limit, in percent (negative when exceeded).
    pub param_margin_pct: f64,
    pub flop_margin_pct: f64,
    pub violations: Vec<Violation>,
}

/// Inclusive comparison against both limits.
pub fn check_budget(report: &BudgetReport) -> BudgetCheck {
    let l = report.limits;
    let margin = |v: u64, max: u64| (max as f64 - v as f64) / max as f64 * 100.0;
    let mut violations = Vec::new();
    for (name, v, max) in [("params", report.total_params, l.params), ("flops", report.total_flops, l.flops)] {
        if v > max {
            violations.push(Violation {
                limit: name.into(),
                value: v,
                max,
                overshoot: v as f64 / max as f64,
            });
        }
    }
    BudgetCheck {
        pass: violations.is_empty(),
        param_margin_pct: margin(report.total_params, l.params),
        flop_margin_pct: margin(report.total_flops, l.flops),
        violations,
    }
}

/// Operation graph of the classical restore pipeline at `h x w`.
pub fn pipeline_graph(cfg: &RestoreConfig, h: usize, w: usize) -> Result<Vec<OpNode>> {
    crate::cfa::check_even(w, h)?;
    let (ph, pw) = (h / 2, w / 2);
    let others = 8u64;
    let all = 9u64;
    let fc = cfg.align.flow;
    let mut g = vec![
        OpNode::new("gain_ratio", OpKind::Elementwise { ops: 5, channels: 4, h: ph, w: pw }).times(others),
        OpNode::new("gain_median", OpKind::Reduce { ops: 3, channels: 4, h: ph, w: pw }).times(others),
        OpNode::new("normalize", OpKind::Elementwise { ops: 1, channels: 4, h: ph, w: pw }).times(all),
        OpNode::new("validity_mask", OpKind::Elementwise { ops: 4, channels: 4, h: ph, w: pw }).times(all),
    ];
    if cfg.align.estimate_flow {
        fc.validate_dims(pw, ph)?;
        g.push(OpNode::new("luminance", OpKind::Elementwise { ops: 4, channels: 1, h: ph, w: pw }).times(all));
        g.push(OpNode::new("mask_min", OpKind::Reduce { ops: 3, channels: 1, h: ph, w: pw }).times(all));
        for l in 0..fc.levels {
            let (lh, lw) = (ph >> l, pw >> l);
            let tiles = lh.div_ceil(fc.block) * lw.div_ceil(fc.block);
            if l > 0 {
                g.push(
                    OpNode::new(format!("pyramid_l{l}"), OpKind::Resample { taps: 4, channels: 2, h: lh, w: lw })
                        .times(all),
                );
            }
            g.push(
                OpNode::new(format!("gradients_l{l}"), OpKind::Elementwise { ops: 4, channels: 1, h: lh, w: lw })
                    .times(others),
            );
            g.push(
                OpNode::new(
                    format!("blockmatch_l{l}"),
                    OpKind::Blockmatch { radius: fc.radius, block: fc.block, tiles },
                )
                .times(others * 2 * MAX_SEARCH_STARTS as u64),
            );
            if fc.lk_iters > 0 {
                g.push(
                    OpNode::new(
                        format!("lk_l{l}"),
                        OpKind::LkIter { iters: fc.lk_iters, tiles, block: fc.block },
                    )
                    .times(others),
                );
            }
            g.push(
                OpNode::new(format!("densify_l{l}"), OpKind::Resample { taps: 4, channels: 2, h: lh, w: lw })
                    .times(others),
            );
        }
    }
    g.extend([
        OpNode::new("warp", OpKind::Resample { taps: 4, channels: 5, h: ph, w: pw }).times(others),
        OpNode::new("warp_mask", OpKind::Reduce { ops: 4, channels: 4, h: ph, w: pw }).times(others),
        OpNode::new("unpad_scale", OpKind::Elementwise { ops: 2, channels: 4, h: ph, w: pw }).times(others),
        OpNode::new("merge_median", OpKind::Reduce { ops: 25, channels: 4, h: ph, w: pw }),
        OpNode::new("merge_variance", OpKind::Elementwise { ops: 8, channels: 4, h: ph, w: pw }).times(all),
        OpNode::new("merge_accumulate", OpKind::Elementwise { ops: 6, channels: 4, h: ph, w: pw }).times(all),
        OpNode::new("demosaic", OpKind::Resample { taps: 9, channels: 3, h, w }),
        OpNode::new("tone_map", OpKind::Elementwise { ops: 4, channels: 3, h, w }),
        OpNode::new("quantize", OpKind::Elementwise { ops: 2, channels: 3, h, w }),
    ]);
    Ok(g)
}

/// Either an explicit graph or a restore configuration whose pipeline graph
/// is costed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetInput {
    Graph { nodes: Vec<OpNode> },
    Pipeline(RestoreConfig),
}

impl BudgetInput {
    pub fn graph(&self, h: usize, w: usize) -> Result<Vec<OpNode>> {
        match self {
            BudgetInput::Graph { nodes } => Ok(nodes.clone()),
            BudgetInput::Pipeline(cfg) => pipeline_graph(cfg, h, w),
        }
    }
}
