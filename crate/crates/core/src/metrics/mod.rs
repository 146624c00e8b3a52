//! Per-episode reward, HJB-loss and Bellman-loss curves with trailing-window
//! smoothing, CSV export and SVG charts.

mod svg;

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossReport;

pub use svg::{export_svg, ChartSeries, ChartSpec};

pub const SMOOTHING_WINDOW: usize = 50;

pub const EPISODE_COLUMNS: [&str; 10] = [
    "episode",
    "timestep",
    "reward",
    "reward_mean50",
    "reward_std50",
    "hjb_loss",
    "hjb_mean50",
    "bellman_loss",
    "bellman_mean50",
    "episode_length",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    /// Global environment step at which the episode ended.
    pub timestep: u64,
    pub reward: f64,
    pub length: u64,
    /// Mean squared HJB residual over the episode's interior transitions.
    pub hjb_loss: f64,
    /// Mean squared one-step Bellman error over the episode.
    pub bellman_loss: f64,
}

/// Trailing-window mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedSeries {
    window: usize,
    recent: VecDeque<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl SmoothedSeries {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "smoothing window must be positive");
        SmoothedSeries {
            window,
            recent: VecDeque::with_capacity(window),
            means: Vec::new(),
            stds: Vec::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Append `x` and the statistics of the window ending at it.
    pub fn push(&mut self, x: f64) {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(x);
        let (mean, std) = window_stats(self.recent.iter().copied());
        self.means.push(mean);
        self.stds.push(std);
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        Some((*self.means.last()?, *self.stds.last()?))
    }
}

/// Mean and population standard deviation, summed in iteration order.
pub fn window_stats(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates of one training iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub timesteps: u64,
    pub episodes: u64,
    pub losses: LossReport,
    pub mean_log_std: f64,
}

pub const ITERATION_COLUMNS: [&str; 10] = [
    "iteration",
    "timesteps",
    "episodes",
    "policy_surrogate",
    "mse_u",
    "mse_f",
    "combined_value_loss",
    "lambda_hjb",
    "clip_fraction",
    "mean_log_std",
];

/// Single-writer metrics store for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSink {
    pub episodes: Vec<EpisodeRecord>,
    pub iterations: Vec<IterationRecord>,
    pub reward: SmoothedSeries,
    pub hjb: SmoothedSeries,
    pub bellman: SmoothedSeries,
}

impl Default for MetricsSink {
    fn default() -> Self {
        Self::new()
    }
}

impl MetricsSink {
    pub fn new() -> Self {
        MetricsSink {
            episodes: Vec::new(),
            iterations: Vec::new(),
            reward: SmoothedSeries::new(SMOOTHING_WINDOW),
            hjb: SmoothedSeries::new(SMOOTHING_WINDOW),
            bellman: SmoothedSeries::new(SMOOTHING_WINDOW),
        }
    }

    /// Rebuild a sink (including smoothed series) from stored records.
    pub fn from_records(episodes: Vec<EpisodeRecord>, iterations: Vec<IterationRecord>) -> Result<Self> {
        let mut sink = MetricsSink::new();
        for e in episodes {
            sink.record_episode(e)?;
        }
        sink.iterations = iterations;
        Ok(sink)
    }

    pub fn record_episode(&mut self, rec: EpisodeRecord) -> Result<()> {
        if let Some(last) = self.episodes.last() {
            if rec.episode <= last.episode {
                return Err(Error::OutOfOrderEpisode {
                    last: last.episode,
                    got: rec.episode,
                });
            }
        }
        self.reward.push(rec.reward);
        self.hjb.push(rec.hjb_loss);
        self.bellman.push(rec.bellman_loss);
        self.episodes.push(rec);
        Ok(())
    }

    pub fn record_iteration(&mut self, rec: IterationRecord) {
        self.iterations.push(rec);
    }

    /// Mean of `field` over the last `n` episodes.
    pub fn final_window_mean(&self, n: usize, field: impl Fn(&EpisodeRecord) -> f64) -> Option<f64> {
        let k = self.episodes.len().min(n);
        if k == 0 {
            return None;
        }
        let tail = &self.episodes[self.episodes.len() - k..];
        Some(window_stats(tail.iter().map(&field)).0)
    }

    pub fn final_window_stats(&self, n: usize, field: impl Fn(&EpisodeRecord) -> f64) -> Option<(f64, f64)> {
        let k = self.episodes.len().min(n);
        if k == 0 {
            return None;
        }
        let tail = &self.episodes[self.episodes.len() - k..];
        Some(window_stats(tail.iter().map(&field)))
    }

    pub fn episodes_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(EPISODE_COLUMNS)?;
        for (i, e) in self.episodes.iter().enumerate() {
            w.write_record([
                e.episode.to_string(),
                e.timestep.to_string(),
                e.reward.to_string(),
                self.reward.means[i].to_string(),
                self.reward.stds[i].to_string(),
                e.hjb_loss.to_string(),
                self.hjb.means[i].to_string(),
                e.bellman_loss.to_string(),
                self.bellman.means[i].to_string(),
                e.length.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn iterations_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(ITERATION_COLUMNS)?;
        for r in &self.iterations {
            let l = &r.losses;
            w.write_record([
                r.iteration.to_string(),
                r.timesteps.to_string(),
                r.episodes.to_string(),
                l.policy_surrogate.to_string(),
                l.mse_u.to_string(),
                l.mse_f.to_string(),
                l.combined_value_loss.to_string(),
                l.lambda_hjb.to_string(),
                l.clip_fraction.to_string(),
                r.mean_log_std.to_string(),
            ])?;
        }
        finish(w)
    }

    /// One row per episode under [`EPISODE_COLUMNS`]. Floats are written in
    /// shortest round-trip form.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        if self.episodes.is_empty() {
            return Err(Error::Empty("episode metrics"));
        }
        write_file(path, self.episodes_csv()?)
    }

    pub fn export_iterations_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.iterations_csv()?)
    }

    /// Chart series for one metric family.
    pub fn series(&self, family: Family, label: &str) -> ChartSeries {
        let smooth = match family {
            Family::Reward => &self.reward,
            Family::HjbLoss => &self.hjb,
            Family::BellmanLoss => &self.bellman,
        };
        ChartSeries {
            label: label.to_owned(),
            x: self.episodes.iter().map(|e| e.timestep as f64).collect(),
            mean: smooth.means.clone(),
            std: smooth.stds.clone(),
        }
    }

    /// Write `reward.svg`, `hjb_loss.svg` and `bellman_loss.svg` into `dir`.
    pub fn export_charts(&self, dir: &Path, label: &str) -> Result<()> {
        for family in Family::ALL {
            let series = [self.series(family, label)];
            export_svg(&dir.join(family.file_name()), &family.chart(), &series)?;
        }
        Ok(())
    }
}

/// The three curve families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Reward,
    HjbLoss,
    BellmanLoss,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Reward, Family::HjbLoss, Family::BellmanLoss];

    pub fn file_name(self) -> &'static str {
        match self {
            Family::Reward => "reward.svg",
            Family::HjbLoss => "hjb_loss.svg",
            Family::BellmanLoss => "bellman_loss.svg",
        }
    }

    pub fn chart(self) -> ChartSpec {
        let (title, y_label, log_scale) = match self {
            Family::Reward => ("Episode reward", "reward", false),
            Family::HjbLoss => ("HJB loss", "mean squared HJB residual", true),
            Family::BellmanLoss => ("Bellman loss", "mean squared Bellman error", true),
        };
        ChartSpec {
            title: title.into(),
            x_label: "timestep".into(),
            y_label: y_label.into(),
            log_scale,
        }
    }
}

/// Parse a file written by [`MetricsSink::export_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_episodes_csv(&text)
}

pub fn parse_episodes_csv(text: &str) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if headers.iter().ne(EPISODE_COLUMNS) {
        return Err(Error::InvalidExpression(format!(
            "unexpected metrics header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| Error::InvalidExpression(format!("bad number `{}`", &row[i])))
        };
        let u = |i: usize| -> Result<u64> {
            row[i]
                .parse()
                .map_err(|_| Error::InvalidExpression(format!("bad integer `{}`", &row[i])))
        };
        out.push(EpisodeRecord {
            episode: u(0)?,
            timestep: u(1)?,
            reward: f(2)?,
            hjb_loss: f(5)?,
            bellman_loss: f(7)?,
            length: u(9)?,
        });
    }
    Ok(out)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidExpression(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(i: u64, reward: f64) -> EpisodeRecord {
        EpisodeRecord {
            episode: i,
            timestep: 200 * (i + 1),
            reward,
            length: 200,
            hjb_loss: reward.abs() * 3.0,
            bellman_loss: reward.abs() / 7.0,
        }
    }

    #[test]
    fn first_record_and_constant_window() {
        let mut s = MetricsSink::new();
        s.record_episode(rec(0, -4.0)).unwrap();
        assert_eq!(s.reward.last(), Some((-4.0, 0.0)));
        let mut s = MetricsSink::new();
        for i in 0..50 {
            s.record_episode(rec(i, 2.5)).unwrap();
        }
        assert_eq!(s.reward.last(), Some((2.5, 0.0)));
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut s = MetricsSink::new();
        s.record_episode(rec(3, 1.0)).unwrap();
        assert!(matches!(
            s.record_episode(rec(3, 1.0)),
            Err(Error::OutOfOrderEpisode { last: 3, got: 3 })
        ));
        assert!(s.record_episode(rec(1, 1.0)).is_err());
        assert_eq!(s.episodes.len(), 1);
    }

    #[test]
    fn window_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = MetricsSink::new();
        let raw: Vec<f64> = (0..60).map(|_| rng.random_range(-100.0..100.0)).collect();
        for (i, &r) in raw.iter().enumerate() {
            s.record_episode(rec(i as u64, r)).unwrap();
        }
        for i in 0..60usize {
            let lo = i.saturating_sub(49);
            let w = &raw[lo..=i];
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
            assert!((s.reward.means[i] - mean).abs() < 1e-10);
            assert!((s.reward.stds[i] - std).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_shape_roundtrip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut s = MetricsSink::new();
        assert!(s.export_csv(&path).is_err());
        for (i, r) in [0.1, -1.0 / 3.0, 1e-300].into_iter().enumerate() {
            s.record_episode(rec(i as u64, r)).unwrap();
        }
        s.export_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("episode,timestep,reward,reward_mean50,reward_std50,hjb_loss,hjb_mean50,bellman_loss,bellman_mean50"));
        assert_eq!(read_csv(&path).unwrap(), s.episodes);
        let first = fs::read(&path).unwrap();
        s.export_csv(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        assert!(s.export_csv(&dir.path().join("missing/m.csv")).is_err());
    }

    #[test]
    fn final_window() {
        let mut s = MetricsSink::new();
        for i in 0..10 {
            s.record_episode(rec(i, i as f64)).unwrap();
        }
        assert_eq!(s.final_window_mean(4, |e| e.reward), Some(7.5));
        assert_eq!(s.final_window_mean(100, |e| e.reward), Some(4.5));
        assert_eq!(MetricsSink::new().final_window_mean(4, |e| e.reward), None);
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_exact(rewards in prop::collection::vec(-1e6f64..1e6, 1..80)) {
            let mut s = MetricsSink::new();
            for (i, &r) in rewards.iter().enumerate() {
                s.record_episode(rec(i as u64, r)).unwrap();
            }
            let parsed = parse_episodes_csv(&s.episodes_csv().unwrap()).unwrap();
            prop_assert_eq!(&parsed, &s.episodes);
            let rebuilt = MetricsSink::from_records(parsed, Vec::new()).unwrap();
            prop_assert_eq!(rebuilt, s);
        }
    }
}
