//! Forward-pass timing.

use std::sync::Arc;
use std::time::{Duration, Instant};

use convscope_core::engine::{run_forward_observed, ForwardObserver};
use convscope_core::introspect::{color_scales, decompose_conv_neuron, flatten_wiring, trace_window};
use convscope_core::{InferenceSession, LayerKind, Model, Scope, Tensor3};

use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub samples: usize,
    pub mean: Duration,
    pub median: Duration,
    pub p95: Duration,
}

impl Stats {
    pub fn from_samples(samples: &[Duration]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort();
        let n = sorted.len();
        let total: Duration = sorted.iter().sum();
        // nearest-rank percentiles
        let rank = |p: f64| sorted[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        Stats { samples: n, mean: total / n as u32, median: rank(0.5), p95: rank(0.95) }
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub forward: Stats,
    pub with_introspection: Stats,
    /// Mean time per layer over all forward samples.
    pub per_layer: Vec<(String, Duration)>,
    /// Mean total of the instrumented forward passes.
    pub forward_total: Duration,
    pub predicted_class: usize,
}

struct LayerTimer {
    started: Option<Instant>,
    totals: Vec<Duration>,
}

impl ForwardObserver for LayerTimer {
    fn layer_started(&mut self, _index: usize) {
        self.started = Some(Instant::now());
    }

    fn layer_finished(&mut self, index: usize) {
        if let Some(t) = self.started.take() {
            self.totals[index] += t.elapsed();
        }
    }
}

/// A query per view level: one decomposition per conv layer, the wiring of the
/// predicted class, a trace per traceable layer and every colormap scope.
fn introspect_all(session: &InferenceSession) -> Result<()> {
    for spec in &session.model().arch().layers {
        match spec.kind {
            LayerKind::Conv(_) => {
                decompose_conv_neuron(session, &spec.name, 0)?;
                trace_window(session, &spec.name, 0, 0, 0, Some(0))?;
            }
            LayerKind::Relu | LayerKind::MaxPool(_) => {
                trace_window(session, &spec.name, 0, 0, 0, None)?;
            }
            _ => {}
        }
    }
    flatten_wiring(session, session.predicted_class())?;
    for scope in Scope::ALL {
        color_scales(session, scope);
    }
    Ok(())
}

pub fn run(model: Arc<Model>, input: &Tensor3, iterations: usize) -> Result<BenchReport> {
    let iterations = iterations.max(1);
    let layers = model.arch().layers.len();
    let mut timer = LayerTimer { started: None, totals: vec![Duration::ZERO; layers] };
    let mut forward = Vec::with_capacity(iterations);
    let mut full = Vec::with_capacity(iterations);
    let mut predicted = 0;
    for _ in 0..iterations {
        let t = Instant::now();
        run_forward_observed(model.clone(), input.clone(), &mut timer)?;
        forward.push(t.elapsed());
        let t = Instant::now();
        let session = run_forward_observed(model.clone(), input.clone(), &mut ())?;
        introspect_all(&session)?;
        full.push(t.elapsed());
        predicted = session.predicted_class();
    }
    let n = iterations as u32;
    Ok(BenchReport {
        forward_total: forward.iter().sum::<Duration>() / n,
        forward: Stats::from_samples(&forward),
        with_introspection: Stats::from_samples(&full),
        per_layer: model.arch().layers.iter().zip(&timer.totals).map(|(l, d)| (l.name.clone(), *d / n)).collect(),
        predicted_class: predicted,
    })
}

impl BenchReport {
    pub fn per_layer_sum(&self) -> Duration {
        self.per_layer.iter().map(|(_, d)| *d).sum()
    }

    pub fn render(&self) -> String {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let mut out = String::new();
        let line = |label: &str, s: &Stats| {
            format!(
                "{label:<22} n={:<5} mean {:>9.3} ms  median {:>9.3} ms  p95 {:>9.3} ms\n",
                s.samples,
                ms(s.mean),
                ms(s.median),
                ms(s.p95)
            )
        };
        out += &line("forward", &self.forward);
        out += &line("forward+introspection", &self.with_introspection);
        out += "per-layer mean:\n";
        for (name, d) in &self.per_layer {
            out += &format!("  {name:<20} {:>9.3} ms\n", ms(*d));
        }
        out += &format!(
            "  {:<20} {:>9.3} ms (forward mean {:.3} ms)\n",
            "sum",
            ms(self.per_layer_sum()),
            ms(self.forward_total)
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let samples: Vec<Duration> = (1..=20).rev().map(Duration::from_millis).collect();
        let s = Stats::from_samples(&samples);
        assert_eq!(s.median, Duration::from_millis(10));
        assert_eq!(s.p95, Duration::from_millis(19));
        assert_eq!(s.mean, Duration::from_micros(10_500));
        let one = Stats::from_samples(&[Duration::from_millis(3)]);
        assert_eq!((one.samples, one.median, one.p95), (1, Duration::from_millis(3), Duration::from_millis(3)));
    }
}
