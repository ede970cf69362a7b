//! Time-varying link telemetry: seeded bounded noise around the configured
//! base metrics, with a history ring per link.
//!
//! The scheduler never sees instantaneous values; it consumes the average
//! over the retained window, mirroring a monitoring system that predicts
//! from past measurements. Transfer durations use the latest sample.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{LinkMap, LinkMetrics};

#[derive(Debug, Clone)]
pub struct TelemetryFeed {
    base: LinkMap,
    window: usize,
    noise_frac: f64,
    rng: ChaCha8Rng,
    history: Vec<VecDeque<LinkMetrics>>,
    keys: Vec<(crate::model::SiteId, crate::model::SiteId)>,
    current: LinkMap,
    averaged: LinkMap,
    epoch: u64,
}

impl TelemetryFeed {
    pub fn new(base: LinkMap, window: usize, noise_frac: f64, seed: u64) -> Self {
        let keys: Vec<_> = base.keys().cloned().collect();
        let mut feed = Self {
            history: vec![VecDeque::with_capacity(window.max(1)); keys.len()],
            keys,
            base,
            window: window.max(1),
            noise_frac,
            rng: ChaCha8Rng::seed_from_u64(seed),
            current: LinkMap::new(),
            averaged: LinkMap::new(),
            epoch: 0,
        };
        feed.sample(0.0);
        feed
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Latest instantaneous metrics; what a transfer actually experiences.
    pub fn current(&self) -> &LinkMap {
        &self.current
    }

    /// Window-averaged metrics; what the scheduler believes.
    pub fn averaged(&self) -> &LinkMap {
        &self.averaged
    }

    /// Generates the next epoch of samples.
    pub fn advance(&mut self, now: f64) {
        self.epoch += 1;
        self.sample(now);
    }

    fn sample(&mut self, now: f64) {
        for (index, key) in self.keys.iter().enumerate() {
            let base = &self.base[key];
            let sample = if self.noise_frac > 0.0 {
                let mut jittered = |value: f64| -> f64 {
                    let factor = 1.0 + self.rng.random_range(-self.noise_frac..=self.noise_frac);
                    value * factor
                };
                let mut metrics = base.clone();
                metrics.rtt_ms = jittered(base.rtt_ms).max(0.0);
                metrics.loss_rate = jittered(base.loss_rate).clamp(0.0, 1.0);
                metrics.jitter_ms = jittered(base.jitter_ms).max(0.0);
                metrics.bandwidth_mbps = jittered(base.bandwidth_mbps).max(base.bandwidth_mbps * 1e-3);
                metrics.observed_at = now;
                metrics
            } else {
                let mut metrics = base.clone();
                metrics.observed_at = now;
                metrics
            };
            let ring = &mut self.history[index];
            if ring.len() == self.window {
                ring.pop_front();
            }
            ring.push_back(sample);
        }
        self.rebuild_views(now);
    }

    fn rebuild_views(&mut self, now: f64) {
        self.current.clear();
        self.averaged.clear();
        for (index, key) in self.keys.iter().enumerate() {
            let ring = &self.history[index];
            let latest = ring.back().expect("ring never empty after sample");
            self.current.insert(key.clone(), latest.clone());

            let n = ring.len() as f64;
            let mut avg = latest.clone();
            avg.rtt_ms = ring.iter().map(|m| m.rtt_ms).sum::<f64>() / n;
            avg.loss_rate = ring.iter().map(|m| m.loss_rate).sum::<f64>() / n;
            avg.jitter_ms = ring.iter().map(|m| m.jitter_ms).sum::<f64>() / n;
            avg.bandwidth_mbps = ring.iter().map(|m| m.bandwidth_mbps).sum::<f64>() / n;
            avg.observed_at = now;
            self.averaged.insert(key.clone(), avg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SiteId;

    fn base() -> LinkMap {
        let mut links = LinkMap::new();
        let m = LinkMetrics::new("a", "b", 10.0, 0.01, 1.0, 100.0);
        links.insert((SiteId::from("a"), SiteId::from("b")), m);
        links
    }

    #[test]
    fn noiseless_feed_reproduces_the_base() {
        let mut feed = TelemetryFeed::new(base(), 3, 0.0, 1);
        feed.advance(60.0);
        let key = (SiteId::from("a"), SiteId::from("b"));
        assert_eq!(feed.current()[&key].rtt_ms, 10.0);
        assert_eq!(feed.averaged()[&key].bandwidth_mbps, 100.0);
    }

    #[test]
    fn noise_is_bounded_and_keeps_invariants() {
        let mut feed = TelemetryFeed::new(base(), 4, 0.2, 42);
        let key = (SiteId::from("a"), SiteId::from("b"));
        for round in 0..100 {
            feed.advance(round as f64 * 60.0);
            let m = &feed.current()[&key];
            assert!(m.rtt_ms >= 0.0 && m.rtt_ms <= 10.0 * 1.2 + 1e-9);
            assert!((0.0..=1.0).contains(&m.loss_rate));
            assert!(m.bandwidth_mbps > 0.0);
            assert!(m.bandwidth_mbps <= 100.0 * 1.2 + 1e-9);
        }
    }

    #[test]
    fn identical_seeds_give_identical_streams() {
        let mut a = TelemetryFeed::new(base(), 4, 0.3, 7);
        let mut b = TelemetryFeed::new(base(), 4, 0.3, 7);
        for round in 0..20 {
            a.advance(round as f64);
            b.advance(round as f64);
            assert_eq!(a.current(), b.current());
            assert_eq!(a.averaged(), b.averaged());
        }
    }

    #[test]
    fn averaged_view_lags_a_step_change() {
        let mut links = base();
        let key = (SiteId::from("a"), SiteId::from("b"));
        let mut feed = TelemetryFeed::new(links.clone(), 5, 0.0, 0);
        // Swap the base behind the feed's back to emulate drift.
        links.get_mut(&key).unwrap().rtt_ms = 50.0;
        feed.base = links;
        feed.advance(60.0);
        let avg = feed.averaged()[&key].rtt_ms;
        assert!(avg > 10.0 && avg < 50.0, "window average should lag, got {avg}");
    }
}
