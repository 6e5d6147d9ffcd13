//! Producer/consumer sampling: background threads draw prior batches, morph
//! them through the flow, and push into a bounded multi-producer bucket; the
//! planner thread pops non-blockingly and falls back to the prior when the
//! bucket is empty.
//!
//! Producers and the consumer share only the queue, the monotone atomic
//! counters, and a set-once stop flag. A full bucket drops pushes (counted
//! as backpressure) so producers never stall; an erroring field aborts the
//! producer and raises a flag the consumer can observe.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crossbeam_queue::ArrayQueue;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{morph_batch, CostGradField, FlowSpec};

/// Where a drawn configuration came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawSource {
    Morphed,
    Prior,
}

/// Uniform sampler over the joint-limit box. Each instance owns an
/// independent deterministic stream: producers use streams `1..=workers`,
/// the consumer fallback conventionally uses stream 0.
#[derive(Debug, Clone)]
pub struct PriorSampler {
    limits: Vec<(f64, f64)>,
    rng: ChaCha8Rng,
}

impl PriorSampler {
    pub fn new(limits: Vec<(f64, f64)>, seed: u64) -> Self {
        Self::with_stream(limits, seed, 0)
    }

    pub fn with_stream(limits: Vec<(f64, f64)>, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { limits, rng }
    }

    pub fn dim(&self) -> usize {
        self.limits.len()
    }

    pub fn limits(&self) -> &[(f64, f64)] {
        &self.limits
    }

    pub fn draw(&mut self) -> Vec<f64> {
        self.limits
            .iter()
            .map(|(lo, hi)| lo + self.rng.gen::<f64>() * (hi - lo))
            .collect()
    }

    /// Appends `count` flat draws.
    pub fn fill(&mut self, out: &mut Vec<f64>, count: usize) {
        for _ in 0..count {
            for (lo, hi) in &self.limits {
                out.push(lo + self.rng.gen::<f64>() * (hi - lo));
            }
        }
    }

    fn chance(&mut self, p: f64) -> bool {
        p > 0.0 && self.rng.gen::<f64>() < p
    }
}

/// Final counter values for one sampler lifetime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub pushed: u64,
    pub popped_morphed: u64,
    pub popped_prior: u64,
    pub dropped: u64,
}

impl SamplerStats {
    pub fn total_draws(&self) -> u64 {
        self.popped_morphed + self.popped_prior
    }
}

/// Bounded multi-producer/single-consumer FIFO of configurations plus the
/// monotone draw-source counters.
pub struct SampleBucket {
    queue: ArrayQueue<Vec<f64>>,
    pushed: AtomicU64,
    popped_morphed: AtomicU64,
    popped_prior: AtomicU64,
    dropped: AtomicU64,
    failed: AtomicBool,
    error: Mutex<Option<String>>,
}

impl SampleBucket {
    pub fn new(capacity: usize) -> Arc<Self> {
        Arc::new(Self {
            queue: ArrayQueue::new(capacity.max(1)),
            pushed: AtomicU64::new(0),
            popped_morphed: AtomicU64::new(0),
            popped_prior: AtomicU64::new(0),
            dropped: AtomicU64::new(0),
            failed: AtomicBool::new(false),
            error: Mutex::new(None),
        })
    }

    pub fn capacity(&self) -> usize {
        self.queue.capacity()
    }

    pub fn occupancy(&self) -> usize {
        self.queue.len()
    }

    /// Push a morphed configuration; a full queue drops it and counts the
    /// backpressure instead of blocking.
    pub fn push_morphed(&self, q: Vec<f64>) -> bool {
        // Count before inserting so `popped_morphed <= pushed` holds at
        // every observable instant.
        self.pushed.fetch_add(1, Ordering::Relaxed);
        match self.queue.push(q) {
            Ok(()) => true,
            Err(_) => {
                self.pushed.fetch_sub(1, Ordering::Relaxed);
                self.dropped.fetch_add(1, Ordering::Relaxed);
                false
            }
        }
    }

    fn try_pop(&self) -> Option<Vec<f64>> {
        let v = self.queue.pop();
        if v.is_some() {
            self.popped_morphed.fetch_add(1, Ordering::Relaxed);
        }
        v
    }

    pub fn stats(&self) -> SamplerStats {
        SamplerStats {
            pushed: self.pushed.load(Ordering::Relaxed),
            popped_morphed: self.popped_morphed.load(Ordering::Relaxed),
            popped_prior: self.popped_prior.load(Ordering::Relaxed),
            dropped: self.dropped.load(Ordering::Relaxed),
        }
    }

    pub fn producer_error(&self) -> Option<String> {
        if self.failed.load(Ordering::Acquire) {
            self.error.lock().ok().and_then(|g| g.clone())
        } else {
            None
        }
    }

    fn set_error(&self, msg: String) {
        if let Ok(mut guard) = self.error.lock() {
            guard.get_or_insert(msg);
        }
        self.failed.store(true, Ordering::Release);
    }
}

/// Non-blocking draw: pops a morphed configuration if one is ready,
/// otherwise draws from the prior. Never waits on producers.
pub fn draw_sample(bucket: &SampleBucket, prior: &mut PriorSampler) -> (Vec<f64>, DrawSource) {
    match bucket.try_pop() {
        Some(q) => (q, DrawSource::Morphed),
        None => {
            bucket.popped_prior.fetch_add(1, Ordering::Relaxed);
            (prior.draw(), DrawSource::Prior)
        }
    }
}

/// What to do with morphed samples that left the joint-limit box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitPolicy {
    /// Componentwise clamp onto the box (default; keeps interior support).
    Clamp,
    /// Discard the sample.
    Reject,
}

/// Producer-side knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerOpts {
    pub workers: usize,
    pub batch_size: usize,
    pub bucket_capacity: usize,
    /// Probability of passing a prior draw through unmorphed.
    pub epsilon_bias: f64,
    pub limit_policy: LimitPolicy,
}

impl Default for SamplerOpts {
    fn default() -> Self {
        Self {
            workers: default_workers(),
            batch_size: 256,
            bucket_capacity: 4096,
            epsilon_bias: 0.0,
            limit_policy: LimitPolicy::Clamp,
        }
    }
}

/// Available parallelism minus one (the planner keeps a thread), but at
/// least one so that enabling the sampler always produces.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get().saturating_sub(1))
        .unwrap_or(1)
        .max(1)
}

/// Running producer pool: the set-once stop flag plus the join handles.
pub struct SamplerHandle {
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    bucket: Arc<SampleBucket>,
    pub workers: usize,
    pub batch_size: usize,
}

impl SamplerHandle {
    /// Sets the stop flag; producers exit within one batch iteration.
    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::Release);
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    /// Stops producers, waits for them, and returns the final counters.
    /// A producer failure surfaces here as an error.
    pub fn stop_and_join(self) -> Result<SamplerStats> {
        self.request_stop();
        for t in self.threads {
            t.join().map_err(|_| Error::ProducerFailed("panic".into()))?;
        }
        if let Some(msg) = self.bucket.producer_error() {
            return Err(Error::ProducerFailed(msg));
        }
        Ok(self.bucket.stats())
    }
}

/// Spawns `workers` producer threads that repeatedly draw a prior batch,
/// morph it through the flow, clamp (or reject) to joint limits, and push
/// into the bucket until the stop flag is set.
///
/// Producer `i` draws from stream `i + 1` of `prior`'s seed, so aggregate
/// statistics are reproducible even though thread interleaving is not.
pub fn start_producers(
    bucket: Arc<SampleBucket>,
    prior: &PriorSampler,
    field: Arc<dyn CostGradField>,
    spec: FlowSpec,
    workers: usize,
    batch_size: usize,
) -> SamplerHandle {
    start_producers_opts(
        bucket,
        prior,
        field,
        spec,
        &SamplerOpts {
            workers,
            batch_size,
            ..SamplerOpts::default()
        },
    )
}

pub fn start_producers_opts(
    bucket: Arc<SampleBucket>,
    prior: &PriorSampler,
    field: Arc<dyn CostGradField>,
    spec: FlowSpec,
    opts: &SamplerOpts,
) -> SamplerHandle {
    let stop = Arc::new(AtomicBool::new(false));
    start_producers_shared_stop(bucket, prior, field, spec, opts, stop)
}

/// As [`start_producers_opts`] with a caller-owned stop flag, so the planner
/// thread can request termination the moment its budget expires. A flag that
/// is already set makes producers exit before pushing anything.
pub fn start_producers_shared_stop(
    bucket: Arc<SampleBucket>,
    prior: &PriorSampler,
    field: Arc<dyn CostGradField>,
    spec: FlowSpec,
    opts: &SamplerOpts,
    stop: Arc<AtomicBool>,
) -> SamplerHandle {
    assert!(opts.workers >= 1, "workers must be >= 1");
    assert!(opts.batch_size >= 1, "batch_size must be >= 1");
    let seed = prior.rng.get_seed();
    let limits = prior.limits.clone();
    let threads = (0..opts.workers)
        .map(|i| {
            let bucket = Arc::clone(&bucket);
            let field = Arc::clone(&field);
            let stop = Arc::clone(&stop);
            let limits = limits.clone();
            let opts = *opts;
            let mut stream = PriorSampler {
                limits,
                rng: ChaCha8Rng::from_seed(seed),
            };
            stream.rng.set_stream(i as u64 + 1);
            std::thread::spawn(move || {
                produce_loop(&bucket, &mut stream, field.as_ref(), &spec, &opts, &stop)
            })
        })
        .collect();
    SamplerHandle {
        stop,
        threads,
        bucket,
        workers: opts.workers,
        batch_size: opts.batch_size,
    }
}

fn produce_loop(
    bucket: &SampleBucket,
    prior: &mut PriorSampler,
    field: &dyn CostGradField,
    spec: &FlowSpec,
    opts: &SamplerOpts,
    stop: &AtomicBool,
) {
    let dim = prior.dim();
    let mut batch = Vec::with_capacity(opts.batch_size * dim);
    while !stop.load(Ordering::Acquire) {
        batch.clear();
        prior.fill(&mut batch, opts.batch_size);
        // Epsilon bias: some samples skip the morph and keep the prior draw.
        let bypass: Vec<bool> = (0..opts.batch_size)
            .map(|_| prior.chance(opts.epsilon_bias))
            .collect();
        let mut morphed = match morph_batch(field, &batch, spec, 1) {
            Ok(m) => m,
            Err(e) => {
                bucket.set_error(e.to_string());
                return;
            }
        };
        for (s, skip) in bypass.iter().enumerate() {
            let cfg = &mut morphed[s * dim..(s + 1) * dim];
            if *skip {
                cfg.copy_from_slice(&batch[s * dim..(s + 1) * dim]);
            }
            let inside = cfg
                .iter()
                .zip(prior.limits())
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
            match opts.limit_policy {
                LimitPolicy::Reject if !inside => continue,
                LimitPolicy::Reject => {}
                LimitPolicy::Clamp => {
                    for (v, (lo, hi)) in cfg.iter_mut().zip(prior.limits()) {
                        *v = v.clamp(*lo, *hi);
                    }
                }
            }
            bucket.push_morphed(cfg.to_vec());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::ZeroField;
    use std::time::{Duration, Instant};

    fn wait_until(mut cond: impl FnMut() -> bool) {
        let t0 = Instant::now();
        while !cond() {
            assert!(t0.elapsed() < Duration::from_secs(10), "timed out");
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    fn unit_limits() -> Vec<(f64, f64)> {
        vec![(0.0, 1.0), (0.0, 1.0)]
    }

    #[test]
    fn zero_field_pushes_exact_prior_draws() {
        let bucket = SampleBucket::new(64);
        let prior = PriorSampler::new(unit_limits(), 9);
        let field: Arc<dyn CostGradField> = Arc::new(ZeroField { dim: 2 });
        let handle = start_producers(Arc::clone(&bucket), &prior, field, FlowSpec::default(), 1, 8);
        wait_until(|| bucket.stats().pushed >= 8);
        handle.stop_and_join().unwrap();

        // Producer 0 draws from stream 1 of the same seed; replay it.
        let mut replay = PriorSampler::with_stream(unit_limits(), 9, 1);
        let mut expect = Vec::new();
        replay.fill(&mut expect, 8);
        let mut fallback = PriorSampler::new(unit_limits(), 0);
        for i in 0..8 {
            let (cfg, src) = draw_sample(&bucket, &mut fallback);
            assert_eq!(src, DrawSource::Morphed);
            assert_eq!(cfg, expect[i * 2..(i + 1) * 2].to_vec());
        }
    }

    #[test]
    fn stop_before_start_pushes_nothing() {
        let bucket = SampleBucket::new(16);
        let prior = PriorSampler::new(unit_limits(), 0);
        let field: Arc<dyn CostGradField> = Arc::new(ZeroField { dim: 2 });
        let stop = Arc::new(AtomicBool::new(true));
        let handle = start_producers_shared_stop(
            Arc::clone(&bucket),
            &prior,
            field,
            FlowSpec::default(),
            &SamplerOpts {
                workers: 2,
                batch_size: 4,
                ..SamplerOpts::default()
            },
            stop,
        );
        let stats = handle.stop_and_join().unwrap();
        assert_eq!(stats.pushed, 0);
        assert_eq!(stats.popped_morphed, 0);
        assert_eq!(stats.popped_prior, 0);
    }

    #[test]
    fn empty_bucket_falls_back_to_prior_within_limits() {
        let bucket = SampleBucket::new(4);
        let mut prior = PriorSampler::new(unit_limits(), 7);
        let (cfg, src) = draw_sample(&bucket, &mut prior);
        assert_eq!(src, DrawSource::Prior);
        assert!(cfg.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(bucket.stats().popped_prior, 1);
    }

    #[test]
    fn fifo_pop_and_counters() {
        let bucket = SampleBucket::new(4);
        assert!(bucket.push_morphed(vec![0.5, 0.5]));
        let mut prior = PriorSampler::new(unit_limits(), 0);
        let (cfg, src) = draw_sample(&bucket, &mut prior);
        assert_eq!(src, DrawSource::Morphed);
        assert_eq!(cfg, vec![0.5, 0.5]);
        assert_eq!(bucket.occupancy(), 0);
        let s = bucket.stats();
        assert_eq!((s.pushed, s.popped_morphed, s.popped_prior), (1, 1, 0));
    }

    #[test]
    fn full_bucket_drops_and_counts() {
        let bucket = SampleBucket::new(2);
        assert!(bucket.push_morphed(vec![0.1, 0.1]));
        assert!(bucket.push_morphed(vec![0.2, 0.2]));
        assert!(!bucket.push_morphed(vec![0.3, 0.3]));
        let s = bucket.stats();
        assert_eq!((s.pushed, s.dropped), (2, 1));
    }

    #[test]
    fn conservation_of_draws() {
        let bucket = SampleBucket::new(128);
        let prior = PriorSampler::new(unit_limits(), 3);
        let field: Arc<dyn CostGradField> = Arc::new(ZeroField { dim: 2 });
        let handle =
            start_producers(Arc::clone(&bucket), &prior, field, FlowSpec::default(), 2, 32);
        let mut fallback = PriorSampler::new(unit_limits(), 0);
        let draws = 5000;
        for _ in 0..draws {
            let (cfg, _) = draw_sample(&bucket, &mut fallback);
            assert!(cfg.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let stats = handle.stop_and_join().unwrap();
        assert_eq!(stats.popped_morphed + stats.popped_prior, draws);
        assert!(stats.popped_morphed <= stats.pushed);
    }

    #[test]
    fn producer_error_propagates() {
        struct BadField;
        impl CostGradField for BadField {
            fn dim(&self) -> usize {
                2
            }
            fn grad_batch(&self, points: &[f64]) -> crate::Result<Vec<f64>> {
                Ok(vec![f64::INFINITY; points.len()])
            }
        }
        let bucket = SampleBucket::new(16);
        let prior = PriorSampler::new(unit_limits(), 0);
        let handle = start_producers(
            Arc::clone(&bucket),
            &prior,
            Arc::new(BadField),
            FlowSpec::default(),
            1,
            4,
        );
        wait_until(|| bucket.producer_error().is_some());
        assert!(matches!(
            handle.stop_and_join(),
            Err(Error::ProducerFailed(_))
        ));
    }

    #[test]
    fn stop_returns_within_one_batch() {
        let bucket = SampleBucket::new(8);
        let prior = PriorSampler::new(unit_limits(), 1);
        let field: Arc<dyn CostGradField> = Arc::new(ZeroField { dim: 2 });
        let handle =
            start_producers(Arc::clone(&bucket), &prior, field, FlowSpec::default(), 4, 64);
        wait_until(|| bucket.stats().pushed > 0);
        let t0 = Instant::now();
        handle.stop_and_join().unwrap();
        // Generous wall bound; the contract is one batch iteration.
        assert!(t0.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn rejection_policy_only_pushes_in_limit_samples() {
        // A field that pushes everything far out of the box.
        struct Outward;
        impl CostGradField for Outward {
            fn dim(&self) -> usize {
                2
            }
            fn grad_batch(&self, points: &[f64]) -> crate::Result<Vec<f64>> {
                Ok(points.iter().map(|_| -10.0).collect())
            }
        }
        let bucket = SampleBucket::new(512);
        let prior = PriorSampler::new(unit_limits(), 5);
        let opts = SamplerOpts {
            workers: 1,
            batch_size: 16,
            limit_policy: LimitPolicy::Reject,
            ..SamplerOpts::default()
        };
        // One big unclipped step: every sample lands far outside the box.
        let spec = FlowSpec {
            horizon_t: 1.0,
            steps: 1,
            grad_clip: 20.0,
            ..FlowSpec::default()
        };
        let handle = start_producers_opts(
            Arc::clone(&bucket),
            &prior,
            Arc::new(Outward),
            spec,
            &opts,
        );
        std::thread::sleep(Duration::from_millis(50));
        let stats = handle.stop_and_join().unwrap();
        // Everything morphs out of the box and is rejected.
        assert_eq!(stats.pushed, 0, "rejected samples must not be pushed");
    }

    #[test]
    fn epsilon_bias_mixes_in_unmorphed_draws() {
        struct Shift;
        impl CostGradField for Shift {
            fn dim(&self) -> usize {
                2
            }
            fn grad_batch(&self, points: &[f64]) -> crate::Result<Vec<f64>> {
                // Constant field: morph displaces by exactly +0.3 per axis.
                Ok(vec![-0.3; points.len()])
            }
        }
        let bucket = SampleBucket::new(4096);
        let limits = vec![(0.0f64, 10.0), (0.0, 10.0)];
        let prior = PriorSampler::new(limits.clone(), 2);
        let spec = FlowSpec {
            horizon_t: 1.0,
            steps: 1,
            grad_clip: 10.0,
            ..FlowSpec::default()
        };
        let opts = SamplerOpts {
            workers: 1,
            batch_size: 512,
            epsilon_bias: 0.5,
            ..SamplerOpts::default()
        };
        let handle =
            start_producers_opts(Arc::clone(&bucket), &prior, Arc::new(Shift), spec, &opts);
        wait_until(|| bucket.stats().pushed >= 512);
        handle.stop_and_join().unwrap();

        // Replay stream 1: batch draws, then the bypass coin flips.
        let mut replay = PriorSampler::with_stream(limits, 2, 1);
        let mut batch = Vec::new();
        replay.fill(&mut batch, 512);
        let bypass: Vec<bool> = (0..512).map(|_| replay.chance(0.5)).collect();
        let mut fallback = PriorSampler::new(vec![(0.0, 10.0); 2], 0);
        let mut seen_bypassed = 0;
        let mut seen_morphed = 0;
        for s in 0..512 {
            let (cfg, src) = draw_sample(&bucket, &mut fallback);
            assert_eq!(src, DrawSource::Morphed);
            let orig = &batch[s * 2..(s + 1) * 2];
            if bypass[s] {
                assert_eq!(cfg, orig.to_vec());
                seen_bypassed += 1;
            } else {
                // Clamped onto the box after the +0.3 shift.
                assert!((cfg[0] - (orig[0] + 0.3).min(10.0)).abs() < 1e-12);
                seen_morphed += 1;
            }
        }
        assert!(seen_bypassed > 100 && seen_morphed > 100);
    }
}
