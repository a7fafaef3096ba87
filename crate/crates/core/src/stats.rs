//! Excess risk, training traces and Spearman rank correlation.

use std::fmt;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::kv::fmt_f64;
use crate::{Error, Result};

/// Below this length p-values come from the exact permutation
/// distribution, from the t approximation at or above it.
pub const EXACT_LIMIT: usize = 20;

/// Largest number of live partial-sum counts the exact p-value may hold
/// before it falls back to the t approximation.
pub const EXACT_STATE_BUDGET: usize = 1 << 22;

pub const TRACE_HEADER: &str = "epoch,train_loss,train_acc,test_acc,excess_risk,sn_product,r_a,layer_norms";

/// `train_acc - test_acc`; equals the test error when training error is
/// zero.
pub fn excess_risk(train_acc: f64, test_acc: f64) -> Result<f64> {
    for (name, v) in [("train_acc", train_acc), ("test_acc", test_acc)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(train_acc - test_acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub excess_risk: f64,
    pub sn_product: f64,
    pub r_a: Option<f64>,
    pub layer_norms: Vec<f64>,
}

impl EpochRecord {
    /// One CSV line, newline included.
    pub fn csv_line(&self) -> String {
        let norms: Vec<String> = self.layer_norms.iter().map(|&s| fmt_f64(s)).collect();
        format!(
            "{},{},{},{},{},{},{},{}\n",
            self.epoch,
            fmt_f64(self.train_loss),
            fmt_f64(self.train_acc),
            fmt_f64(self.test_acc),
            fmt_f64(self.excess_risk),
            fmt_f64(self.sn_product),
            self.r_a.map(fmt_f64).unwrap_or_default(),
            norms.join(";")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    records: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, rec: EpochRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.epoch <= last.epoch {
                return Err(Error::InvalidInput(format!(
                    "epoch {} does not follow epoch {}",
                    rec.epoch, last.epoch
                )));
            }
        }
        for (name, v) in [("train_acc", rec.train_acc), ("test_acc", rec.test_acc)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("epoch {}: {name} = {v} outside [0, 1]", rec.epoch)));
            }
        }
        if !(rec.sn_product >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "epoch {}: negative sn_product {}",
                rec.epoch, rec.sn_product
            )));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn sn_products(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sn_product).collect()
    }

    pub fn excess_risks(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.excess_risk).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRACE_HEADER}\n");
        for r in &self.records {
            out.push_str(&r.csv_line());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::MalformedReport(format!("trace line {line}: {msg}"));
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(1, e.to_string()))?;
        if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
            return Err(bad(1, format!("expected header `{TRACE_HEADER}`")));
        }
        let mut trace = TrainingTrace::new();
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| bad(line, e.to_string()))?;
            let float = |k: usize| -> Result<f64> {
                row[k]
                    .parse::<f64>()
                    .map_err(|_| bad(line, format!("field {} is not a number: `{}`", k + 1, &row[k])))
            };
            let r_a = if row[6].is_empty() { None } else { Some(float(6)?) };
            let layer_norms = if row[7].is_empty() {
                Vec::new()
            } else {
                row[7]
                    .split(';')
                    .map(|s| s.parse::<f64>().map_err(|_| bad(line, format!("bad layer norm `{s}`"))))
                    .collect::<Result<_>>()?
            };
            let rec = EpochRecord {
                epoch: row[0].parse().map_err(|_| bad(line, format!("bad epoch `{}`", &row[0])))?,
                train_loss: float(1)?,
                train_acc: float(2)?,
                test_acc: float(3)?,
                excess_risk: float(4)?,
                sn_product: float(5)?,
                r_a,
                layer_norms,
            };
            trace.push(rec).map_err(|e| bad(line, e.to_string()))?;
        }
        Ok(trace)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    /// Exact permutation distribution.
    Exact,
    /// Student t with `n - 2` degrees of freedom.
    TApprox,
}

impl fmt::Display for PMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PMethod::Exact => "exact",
            PMethod::TApprox => "t",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub scc: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub method: PMethod,
}

/// Average ranks, starting at 1; tied values share the mean of their
/// positions.
pub fn midranks(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("rank input"));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    Ok(ranks)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with a two-sided p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} observations", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InvalidInput("spearman needs at least 3 observations".into()));
    }
    let rx = midranks(x)?;
    let ry = midranks(y)?;
    let scc = pearson(&rx, &ry).ok_or(Error::UndefinedCorrelation("a sequence has constant ranks"))?;
    if x.len() < EXACT_LIMIT {
        if let Some(p) = exact_p(&rx, &ry, EXACT_STATE_BUDGET) {
            return Ok(Correlation {
                scc,
                p,
                method: PMethod::Exact,
            });
        }
    }
    Ok(Correlation {
        scc,
        p: t_approx_p(scc, x.len()),
        method: PMethod::TApprox,
    })
}

/// Two-sided p from `t = r sqrt((n-2)/(1-r^2))`; zero at `|r| = 1`.
pub fn t_approx_p(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Counts of undecided partial sums for one set of placed values, held in
/// at most two disjoint windows.
struct Windows {
    spans: Vec<(i64, Vec<u64>)>,
}

fn pair_sum(a: &[i64], b: impl Iterator<Item = i64>) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact two-sided permutation p-value of the rank correlation: the share
/// of the `n!` re-pairings of `ry` with `rx` whose correlation is at least
/// as extreme as observed. The correlation is an increasing affine function
/// of `T = sum a_i b_pi(i)`, so the count runs over integer partial sums of
/// doubled ranks, one placed position per layer and one state per set of
/// used values. Sums whose outcome the rearrangement bounds already settle
/// are folded into the total, so only undecided windows are stored.
/// Returns `None` if a layer would exceed `budget` stored counts.
pub fn exact_p(rx: &[f64], ry: &[f64], budget: usize) -> Option<f64> {
    let n = rx.len();
    assert!(n <= 20, "exact p-values are limited to n <= 20");
    let to_int = |r: &[f64]| -> Vec<i64> {
        let v: Vec<i64> = r.iter().map(|&x| (2.0 * x).round() as i64).collect();
        let g = v.iter().fold(0, |g, &x| gcd(g, x));
        v.into_iter().map(|x| x / g.max(1)).collect()
    };
    let mut a = to_int(rx);
    let mut b = to_int(ry);
    let t_obs: i64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let (sa, sb): (i64, i64) = (a.iter().sum(), b.iter().sum());
    let center = (sa as i128) * (sb as i128);
    let nn = n as i128;
    let dev = (nn * t_obs as i128 - center).abs();
    if dev == 0 {
        return Some(1.0);
    }
    // Extreme iff T >= high or T <= low.
    let high = (center + dev + nn - 1).div_euclid(nn) as i64;
    let low = (center - dev).div_euclid(nn) as i64;

    a.sort_unstable();
    b.sort_unstable();
    let fact: Vec<u128> = (0..=n as u128).scan(1u128, |f, k| {
        *f *= k.max(1);
        Some(*f)
    })
    .collect();

    // For `mask` placed on the first `k` positions: the range of the placed
    // sum and of the remaining contribution.
    let ranges = |mask: u32, k: usize| -> ((i64, i64), (i64, i64)) {
        let used: Vec<i64> = (0..n).filter(|j| mask & (1 << j) != 0).map(|j| b[j]).collect();
        let rest: Vec<i64> = (0..n).filter(|j| mask & (1 << j) == 0).map(|j| b[j]).collect();
        let (ap, ar) = a.split_at(k);
        let placed = (pair_sum(ap, used.iter().rev().copied()), pair_sum(ap, used.iter().copied()));
        let remain = (pair_sum(ar, rest.iter().rev().copied()), pair_sum(ar, rest.iter().copied()));
        (placed, remain)
    };
    // Children of `mask`: the lowest free index of each tie run, weighted by
    // how many members of the run are free.
    let children = |mask: u32| -> Vec<(usize, u64)> {
        let mut out = Vec::new();
        let mut j = 0;
        while j < n {
            let mut end = j;
            let mut free = 0u64;
            let mut first = None;
            while end < n && b[end] == b[j] {
                if mask & (1 << end) == 0 {
                    free += 1;
                    first.get_or_insert(end);
                }
                end += 1;
            }
            if let Some(f) = first {
                out.push((f, free));
            }
            j = end;
        }
        out
    };

    let mut extreme: u128 = 0;
    let mut index = vec![u32::MAX; 1usize << n];
    let mut layer: Vec<(u32, Windows)> = vec![(
        0,
        Windows {
            spans: vec![(0, vec![1])],
        },
    )];
    for k in 0..n {
        // Size the next layer before filling it.
        let mut next: Vec<(u32, Windows)> = Vec::new();
        let mut bounds: Vec<(i64, i64)> = Vec::new();
        let mut stored = 0usize;
        for (mask, _) in &layer {
            for (j, _) in children(*mask) {
                let m = mask | (1 << j);
                if index[m as usize] != u32::MAX {
                    continue;
                }
                let ((pmin, pmax), (rmin, rmax)) = ranges(m, k + 1);
                let mut spans: Vec<(i64, i64)> = Vec::new();
                for (lo_s, hi_s) in [(high - rmax, high - rmin - 1), (low - rmax + 1, low - rmin)] {
                    let (lo_s, hi_s) = (lo_s.max(pmin), hi_s.min(pmax));
                    if lo_s <= hi_s {
                        spans.push((lo_s, hi_s));
                    }
                }
                if spans.len() == 2 && spans[1].0 <= spans[0].1 + 1 && spans[0].0 <= spans[1].1 + 1 {
                    spans = vec![(spans[0].0.min(spans[1].0), spans[0].1.max(spans[1].1))];
                }
                stored += spans.iter().map(|(l, h)| (h - l + 1) as usize).sum::<usize>();
                if stored > budget {
                    return None;
                }
                index[m as usize] = next.len() as u32;
                bounds.push((rmin, rmax));
                next.push((
                    m,
                    Windows {
                        spans: spans.into_iter().map(|(l, h)| (l, vec![0; (h - l + 1) as usize])).collect(),
                    },
                ));
            }
        }
        let completions = fact[n - k - 1];
        for (mask, dist) in &layer {
            for (j, weight) in children(*mask) {
                let slot = index[(mask | (1 << j)) as usize] as usize;
                let (rmin, rmax) = bounds[slot];
                let step = a[k] * b[j];
                let target = &mut next[slot].1;
                for (off, counts) in &dist.spans {
                    let base = off + step;
                    let len = counts.len() as i64;
                    // Sums at or above `high - rmin` are extreme whatever
                    // follows, as are those at or below `low - rmax`.
                    let top = (high - rmin - base).clamp(0, len) as usize;
                    let bottom = (low - rmax - base + 1).clamp(0, len) as usize;
                    let settled: u128 = counts[top..].iter().chain(&counts[..bottom]).map(|&c| c as u128).sum();
                    extreme += settled * weight as u128 * completions;
                    for (toff, tcounts) in target.spans.iter_mut() {
                        let from = base.max(*toff);
                        let to = (base + len).min(*toff + tcounts.len() as i64);
                        if from >= to {
                            continue;
                        }
                        let src = &counts[(from - base) as usize..(to - base) as usize];
                        let dst = &mut tcounts[(from - *toff) as usize..(to - *toff) as usize];
                        for (d, &c) in dst.iter_mut().zip(src) {
                            *d += c * weight;
                        }
                    }
                }
            }
        }
        for (m, _) in &next {
            index[*m as usize] = u32::MAX;
        }
        layer = next;
    }
    Some((extreme as f64 / fact[n] as f64).min(1.0))
}

/// Spearman correlation of the SN-product series against excess risk.
pub fn correlate_trace(trace: &TrainingTrace) -> Result<Correlation> {
    if trace.len() < 3 {
        return Err(Error::InvalidInput("correlation needs at least 3 epochs".into()));
    }
    spearman(&trace.sn_products(), &trace.excess_risks())
}
