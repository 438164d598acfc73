//! Censoring-aware evaluation metrics.
//!
//! All functions are pure. Times may be raw or normalized as long as they
//! are consistent within a call; the pipeline uses normalized times so that
//! Brier scores line up with the model's bins.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{predict_survival, Pmf};

fn check_lengths(n: usize, others: &[(usize, &str)]) -> Result<()> {
    for (len, name) in others {
        if *len != n {
            return Err(Error::Shape(format!("{name} has length {len}, expected {n}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmTarget {
    /// Survival of the event of interest.
    Event,
    /// Survival of the censoring process (censorings are the "events").
    Censoring,
}

/// Product-limit step function.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    /// Distinct times at which the target occurred, ascending.
    pub times: Vec<f64>,
    /// `S(t)` at and after each knot (right-continuous).
    pub survival: Vec<f64>,
    pub n_at_risk: Vec<usize>,
    pub n_events: Vec<usize>,
}

impl KmCurve {
    /// `S(t)`: value of the last knot `≤ t`, 1 before the first knot.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&k| k <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    /// `S(t⁻)`: value of the last knot strictly before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&k| k < t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }
}

pub fn kaplan_meier(times: &[f64], events: &[bool], target: KmTarget) -> Result<KmCurve> {
    if times.is_empty() {
        return Err(Error::Empty("kaplan_meier needs at least one observation".into()));
    }
    check_lengths(times.len(), &[(events.len(), "events")])?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let hit = |i: usize| match target {
        KmTarget::Event => events[i],
        KmTarget::Censoring => !events[i],
    };

    let mut curve = KmCurve {
        times: vec![],
        survival: vec![],
        n_at_risk: vec![],
        n_events: vec![],
    };
    let mut s = 1.0;
    let mut at_risk = times.len();
    let mut pos = 0;
    while pos < order.len() {
        let t = times[order[pos]];
        let end = pos + order[pos..].partition_point(|&i| times[i] == t);
        let d = order[pos..end].iter().filter(|&&i| hit(i)).count();
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.n_at_risk.push(at_risk);
            curve.n_events.push(d);
        }
        at_risk -= end - pos;
        pos = end;
    }
    Ok(curve)
}

/// Fenwick tree of counts over score ranks.
struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut acc = 0;
        while i > 0 {
            acc += self.0[i];
            i -= i & i.wrapping_neg();
        }
        acc
    }
}

/// Integer tallies behind Harrell's C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConcordanceCounts {
    pub concordant: u64,
    pub tied: u64,
    pub comparable: u64,
}

impl ConcordanceCounts {
    pub fn c_index(&self) -> Result<f64> {
        if self.comparable == 0 {
            return Err(Error::UndefinedMetric("no comparable pairs".into()));
        }
        Ok((self.concordant as f64 + 0.5 * self.tied as f64) / self.comparable as f64)
    }
}

/// Pair tallies for Harrell's C in `O(n log n)`: sweep times from the
/// latest down and keep the scores of everyone strictly later in a Fenwick
/// tree keyed by score rank.
pub fn concordance_counts(scores: &[f64], times: &[f64], events: &[bool]) -> Result<ConcordanceCounts> {
    let n = scores.len();
    check_lengths(n, &[(times.len(), "times"), (events.len(), "events")])?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("risk score".into()));
    }
    let mut sorted_scores = scores.to_vec();
    sorted_scores.sort_by(f64::total_cmp);
    sorted_scores.dedup();
    let rank = |s: f64| sorted_scores.partition_point(|&x| x < s);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut tree = Fenwick::new(sorted_scores.len());
    let mut inserted = 0u64;
    let mut counts = ConcordanceCounts::default();
    let mut pos = 0;
    while pos < n {
        let t = times[order[pos]];
        let end = pos + order[pos..].partition_point(|&i| times[i] == t);
        for &i in &order[pos..end] {
            if events[i] {
                let r = rank(scores[i]);
                let below = tree.below(r);
                let not_above = tree.below(r + 1);
                counts.concordant += below;
                counts.tied += not_above - below;
                counts.comparable += inserted;
            }
        }
        for &i in &order[pos..end] {
            tree.add(rank(scores[i]));
            inserted += 1;
        }
        pos = end;
    }
    Ok(counts)
}

/// Harrell's concordance index. Higher scores mean higher risk.
pub fn c_index(scores: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    concordance_counts(scores, times, events)?.c_index()
}

/// Number of bins fully elapsed by time `t` on a `K`-bin grid, snapping to
/// the boundary when `t` is within `1e-9` of it. Inside a bin this is the
/// bin containing `t`.
pub fn bins_elapsed(t: f64, k_bins: usize) -> usize {
    let x = t * k_bins as f64 - 1e-9;
    if x <= 0.0 {
        0
    } else {
        (x.ceil() as usize).min(k_bins)
    }
}

/// Predicted survival probability at normalized time `t`.
pub fn survival_at(pmf: &Pmf, t: f64) -> f64 {
    predict_survival(pmf, bins_elapsed(t, pmf.k_bins()))
}

/// IPCW Brier score at `t_star`, with the count of samples dropped because
/// their censoring weight was zero.
pub fn brier_score_t_detailed(
    pmfs: &[Pmf],
    times: &[f64],
    events: &[bool],
    t_star: f64,
    censor_km: &KmCurve,
) -> Result<(f64, usize)> {
    let n = pmfs.len();
    check_lengths(n, &[(times.len(), "times"), (events.len(), "events")])?;
    if n == 0 {
        return Err(Error::Empty("brier score of an empty set".into()));
    }
    let g_star = censor_km.eval_left(t_star);
    let mut total = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for ((pmf, &t), &e) in pmfs.iter().zip(times).zip(events) {
        let s = survival_at(pmf, t_star);
        if t <= t_star && e {
            let g = censor_km.eval_left(t);
            if g > 0.0 {
                total += s * s / g;
                used += 1;
            } else {
                excluded += 1;
            }
        } else if t > t_star {
            if g_star > 0.0 {
                total += (1.0 - s) * (1.0 - s) / g_star;
                used += 1;
            } else {
                excluded += 1;
            }
        } else {
            // censored before t*: weight zero
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::UndefinedMetric(format!(
            "every sample lost its censoring weight at t = {t_star}"
        )));
    }
    Ok((total / used as f64, excluded))
}

pub fn brier_score_t(
    pmfs: &[Pmf],
    times: &[f64],
    events: &[bool],
    t_star: f64,
    censor_km: &KmCurve,
) -> Result<f64> {
    brier_score_t_detailed(pmfs, times, events, t_star, censor_km).map(|(v, _)| v)
}

/// Trapezoidal time-average of `values` over `grid`, divided by the span of
/// the grid. With the grid starting at 0 this is `(1/T*)∫₀^{T*}`. A single
/// point returns its value.
///
/// Computed as `Σ wᵢ vᵢ / Σ wᵢ` with trapezoid weights `wᵢ`, so a constant
/// curve averages to itself.
pub fn time_average(grid: &[f64], values: &[f64]) -> Result<f64> {
    check_lengths(grid.len(), &[(values.len(), "values")])?;
    match grid.len() {
        0 => Err(Error::Empty("empty time grid".into())),
        1 => Ok(values[0]),
        n => {
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("time grid must be strictly increasing".into()));
            }
            let width = |i: usize| if i + 1 < n { grid[i + 1] - grid[i] } else { 0.0 };
            let weight = |i: usize| 0.5 * (width(i) + if i > 0 { width(i - 1) } else { 0.0 });
            let (num, den) = (0..n).fold((0.0, 0.0), |(num, den), i| {
                let w = weight(i);
                (num + w * values[i], den + w)
            });
            Ok(num / den)
        }
    }
}

/// Brier score at every grid point.
pub fn brier_curve(
    pmfs: &[Pmf],
    times: &[f64],
    events: &[bool],
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let km = kaplan_meier(times, events, KmTarget::Censoring)?;
    t_grid
        .iter()
        .map(|&t| brier_score_t(pmfs, times, events, t, &km).map(|b| (t, b)))
        .collect()
}

/// Integrated Brier score over `t_grid`.
pub fn ibs(pmfs: &[Pmf], times: &[f64], events: &[bool], t_grid: &[f64]) -> Result<f64> {
    let curve = brier_curve(pmfs, times, events, t_grid)?;
    let (g, v): (Vec<f64>, Vec<f64>) = curve.into_iter().unzip();
    time_average(&g, &v)
}

/// Cumulative/dynamic AUC at `t`: cases are events by `t`, controls are
/// still at risk after `t`. `None` when either group is empty.
pub fn tdauc(scores: &[f64], times: &[f64], events: &[bool], t: f64) -> Result<Option<f64>> {
    check_lengths(scores.len(), &[(times.len(), "times"), (events.len(), "events")])?;
    let mut controls: Vec<f64> = scores
        .iter()
        .zip(times)
        .filter(|(_, &ti)| ti > t)
        .map(|(&s, _)| s)
        .collect();
    controls.sort_by(f64::total_cmp);
    let mut n_cases = 0u64;
    let mut wins = 0u64;
    let mut ties = 0u64;
    for ((&s, &ti), &e) in scores.iter().zip(times).zip(events) {
        if e && ti <= t {
            n_cases += 1;
            let below = controls.partition_point(|&c| c < s) as u64;
            let not_above = controls.partition_point(|&c| c <= s) as u64;
            wins += below;
            ties += not_above - below;
        }
    }
    if n_cases == 0 || controls.is_empty() {
        return Ok(None);
    }
    Ok(Some(
        (wins as f64 + 0.5 * ties as f64) / (n_cases as f64 * controls.len() as f64),
    ))
}

/// `(t, AUC(t))` for every evaluable grid point.
pub fn tdauc_curve(
    scores: &[f64],
    times: &[f64],
    events: &[bool],
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for &t in t_grid {
        if let Some(a) = tdauc(scores, times, events, t)? {
            out.push((t, a));
        }
    }
    Ok(out)
}

/// Mean TDAUC over evaluable grid points.
pub fn m_tdauc(scores: &[f64], times: &[f64], events: &[bool], t_grid: &[f64]) -> Result<f64> {
    if t_grid.is_empty() {
        return Err(Error::Empty("empty time grid".into()));
    }
    let curve = tdauc_curve(scores, times, events, t_grid)?;
    if curve.is_empty() {
        return Err(Error::UndefinedMetric("no evaluable TDAUC time point".into()));
    }
    Ok(curve.iter().map(|(_, a)| a).sum::<f64>() / curve.len() as f64)
}

/// Observed and log-rank expected events per group, plus the variance of
/// `O_a - E_a`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogRankTable {
    pub observed_a: f64,
    pub expected_a: f64,
    pub observed_b: f64,
    pub expected_b: f64,
    pub variance: f64,
}

impl LogRankTable {
    pub fn statistic(&self) -> f64 {
        if self.variance > 0.0 {
            let d = self.observed_a - self.expected_a;
            d * d / self.variance
        } else {
            0.0
        }
    }
}

/// Log-rank tallies for a group split given by `in_a`, where `order` sorts
/// samples by ascending time.
fn log_rank_sorted(order: &[usize], times: &[f64], events: &[bool], in_a: &[bool]) -> LogRankTable {
    let mut table = LogRankTable::default();
    let mut n = order.len() as f64;
    let mut n_a = order.iter().filter(|&&i| in_a[i]).count() as f64;
    let mut pos = 0;
    while pos < order.len() {
        let t = times[order[pos]];
        let end = pos + order[pos..].partition_point(|&i| times[i] == t);
        let (mut d, mut d_a, mut leave_a) = (0.0, 0.0, 0.0);
        for &i in &order[pos..end] {
            if events[i] {
                d += 1.0;
                if in_a[i] {
                    d_a += 1.0;
                }
            }
            if in_a[i] {
                leave_a += 1.0;
            }
        }
        if d > 0.0 {
            let e_a = d * n_a / n;
            table.observed_a += d_a;
            table.expected_a += e_a;
            table.observed_b += d - d_a;
            table.expected_b += d - e_a;
            if n > 1.0 {
                table.variance += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1.0);
            }
        }
        n -= (end - pos) as f64;
        n_a -= leave_a;
        pos = end;
    }
    table
}

fn time_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    order
}

fn pooled(
    times_a: &[f64],
    events_a: &[bool],
    times_b: &[f64],
    events_b: &[bool],
) -> Result<(Vec<f64>, Vec<bool>, Vec<bool>)> {
    check_lengths(times_a.len(), &[(events_a.len(), "events_a")])?;
    check_lengths(times_b.len(), &[(events_b.len(), "events_b")])?;
    if times_a.is_empty() || times_b.is_empty() {
        return Err(Error::Empty("log-rank needs two non-empty groups".into()));
    }
    let times = [times_a, times_b].concat();
    let events = [events_a, events_b].concat();
    let in_a = (0..times.len()).map(|i| i < times_a.len()).collect();
    Ok((times, events, in_a))
}

pub fn log_rank_table(
    times_a: &[f64],
    events_a: &[bool],
    times_b: &[f64],
    events_b: &[bool],
) -> Result<LogRankTable> {
    let (times, events, in_a) = pooled(times_a, events_a, times_b, events_b)?;
    Ok(log_rank_sorted(&time_order(&times), &times, &events, &in_a))
}

/// Two-group log-rank chi-square statistic `(O - E)² / V`; 0 when there
/// are no events.
pub fn log_rank(times_a: &[f64], events_a: &[bool], times_b: &[f64], events_b: &[bool]) -> Result<f64> {
    Ok(log_rank_table(times_a, events_a, times_b, events_b)?.statistic())
}

/// Minimum share of samples each side of a cutoff must keep.
pub const MIN_GROUP_FRACTION: f64 = 0.1;

/// Score cutoff maximizing the log-rank statistic between `score > c` and
/// `score ≤ c`. Candidates are midpoints of consecutive distinct scores;
/// ties go to the smaller cutoff.
pub fn select_cutoff(scores: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    let n = scores.len();
    check_lengths(n, &[(times.len(), "times"), (events.len(), "events")])?;
    let mut distinct = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    let sorted_all = distinct.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::UndefinedMetric("need at least two distinct scores for a cutoff".into()));
    }
    let order = time_order(times);
    let min_group = MIN_GROUP_FRACTION * n as f64;
    let mut best: Option<(f64, f64)> = None;
    for w in distinct.windows(2) {
        let cut = 0.5 * (w[0] + w[1]);
        let n_low = sorted_all.partition_point(|&s| s <= cut) as f64;
        if n_low < min_group || (n as f64 - n_low) < min_group {
            continue;
        }
        let high: Vec<bool> = scores.iter().map(|&s| s > cut).collect();
        let stat = log_rank_sorted(&order, times, events, &high).statistic();
        if best.is_none_or(|(_, b)| stat > b) {
            best = Some((cut, stat));
        }
    }
    best.map(|(c, _)| c).ok_or_else(|| {
        Error::UndefinedMetric("no cutoff leaves both groups with 10% of samples".into())
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardRatio {
    pub value: f64,
    /// Set when a group had zero observed or expected events, so the ratio
    /// was forced to `0` or `+∞`.
    pub degenerate: bool,
}

/// Mantel–Haenszel hazard ratio `(O_a/E_a) / (O_b/E_b)`.
pub fn hazard_ratio_groups(
    times_a: &[f64],
    events_a: &[bool],
    times_b: &[f64],
    events_b: &[bool],
) -> Result<HazardRatio> {
    let t = log_rank_table(times_a, events_a, times_b, events_b)?;
    Ok(ratio_of_rates(&t))
}

fn ratio_of_rates(t: &LogRankTable) -> HazardRatio {
    let rate = |o: f64, e: f64| if e > 0.0 { Some(o / e) } else { None };
    match (rate(t.observed_a, t.expected_a), rate(t.observed_b, t.expected_b)) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => HazardRatio {
            value: a / b,
            degenerate: false,
        },
        (Some(a), Some(_)) if a > 0.0 => HazardRatio {
            value: f64::INFINITY,
            degenerate: true,
        },
        (None, _) => HazardRatio {
            value: f64::INFINITY,
            degenerate: true,
        },
        _ => HazardRatio {
            value: 0.0,
            degenerate: true,
        },
    }
}

/// Hazard ratio of the high-risk group (`score > cutoff`) against the rest.
pub fn hazard_ratio(scores: &[f64], times: &[f64], events: &[bool], cutoff: f64) -> Result<HazardRatio> {
    check_lengths(scores.len(), &[(times.len(), "times"), (events.len(), "events")])?;
    let high: Vec<bool> = scores.iter().map(|&s| s > cutoff).collect();
    let n_high = high.iter().filter(|&&h| h).count();
    if n_high == 0 || n_high == scores.len() {
        return Err(Error::UndefinedMetric(format!(
            "cutoff {cutoff} leaves one group empty"
        )));
    }
    let t = log_rank_sorted(&time_order(times), times, events, &high);
    Ok(ratio_of_rates(&t))
}

/// Default evaluation grid on normalized time: 0, the interior bin
/// boundaries `k/K` up to `t_star`, and `t_star` itself.
pub fn default_time_grid(k_bins: usize, t_star: f64) -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(
        (1..k_bins)
            .map(|k| k as f64 / k_bins as f64)
            .filter(|&b| b < t_star),
    );
    if t_star > 0.0 {
        g.push(t_star);
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub c_index: f64,
    pub ibs: f64,
    pub tdauc_curve: Vec<(f64, f64)>,
    pub m_tdauc: f64,
    pub hr: f64,
    pub hr_degenerate: bool,
    pub cutoff: f64,
    pub brier_curve: Vec<(f64, f64)>,
}

/// Evaluate predictions on `(times, events)` (normalized times).
///
/// `cutoff` is the training-set risk cutoff; when absent it is selected on
/// the evaluation data itself.
pub fn evaluate(
    pmfs: &[Pmf],
    scores: &[f64],
    times: &[f64],
    events: &[bool],
    t_grid: &[f64],
    cutoff: Option<f64>,
) -> Result<EvalReport> {
    let c = c_index(scores, times, events)?;
    let brier = brier_curve(pmfs, times, events, t_grid)?;
    let (g, v): (Vec<f64>, Vec<f64>) = brier.iter().copied().unzip();
    let ibs = time_average(&g, &v)?;
    let curve = tdauc_curve(scores, times, events, t_grid)?;
    if curve.is_empty() {
        return Err(Error::UndefinedMetric("no evaluable TDAUC time point".into()));
    }
    let m = curve.iter().map(|(_, a)| a).sum::<f64>() / curve.len() as f64;
    let cutoff = match cutoff {
        Some(c) => c,
        None => select_cutoff(scores, times, events)?,
    };
    let hr = hazard_ratio(scores, times, events, cutoff)?;
    Ok(EvalReport {
        c_index: c,
        ibs,
        tdauc_curve: curve,
        m_tdauc: m,
        hr: hr.value,
        hr_degenerate: hr.degenerate,
        cutoff,
        brier_curve: brier,
    })
}

pub const REPORT_HEADER: &str = "model,c_index,m_tdauc,ibs,hr,hr_degenerate,cutoff";

impl EvalReport {
    /// One CSV row matching [`REPORT_HEADER`].
    pub fn csv_row(&self, model: &str) -> String {
        format!(
            "{model},{},{},{},{},{},{}",
            self.c_index, self.m_tdauc, self.ibs, self.hr, self.hr_degenerate as u8, self.cutoff
        )
    }

    pub fn report_csv(&self, model: &str) -> String {
        format!("{REPORT_HEADER}\n{}\n", self.csv_row(model))
    }

    pub fn tdauc_csv(&self) -> String {
        curve_csv("time,tdauc", &self.tdauc_curve)
    }

    pub fn brier_csv(&self) -> String {
        curve_csv("time,brier", &self.brier_curve)
    }
}

fn curve_csv(header: &str, points: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (t, v) in points {
        let _ = writeln!(s, "{t},{v}");
    }
    s
}
