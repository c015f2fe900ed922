use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("need at least 2 timestamps to measure frame rate, got {0}")]
pub struct InsufficientEvents(pub usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpsStats {
    pub mean_interval_ms: f64,
    /// Nearest-rank 95th percentile of the frame intervals.
    pub p95_interval_ms: f64,
    pub mean_fps: f64,
}

/// Frame-rate statistics from event timestamps in milliseconds.
pub fn measure_fps(timestamps_ms: &[u64]) -> Result<FpsStats, InsufficientEvents> {
    if timestamps_ms.len() < 2 {
        return Err(InsufficientEvents(timestamps_ms.len()));
    }
    let mut intervals: Vec<f64> =
        timestamps_ms.windows(2).map(|w| w[1].saturating_sub(w[0]) as f64).collect();
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    intervals.sort_unstable_by(f64::total_cmp);
    let rank = libm::ceil(0.95 * intervals.len() as f64) as usize;
    let p95 = intervals[rank.clamp(1, intervals.len()) - 1];
    let mean_fps = if mean > 0.0 { 1000.0 / mean } else { f64::INFINITY };
    Ok(FpsStats { mean_interval_ms: mean, p95_interval_ms: p95, mean_fps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_rates() {
        let ts: Vec<u64> = (0..20).map(|i| i * 66).collect();
        let s = measure_fps(&ts).unwrap();
        assert!((s.mean_fps - 1000.0 / 66.0).abs() < 1e-9);
        assert!((s.mean_fps - 15.15).abs() < 0.01);
        let ts: Vec<u64> = (0..5).map(|i| i * 100).collect();
        assert_eq!(measure_fps(&ts).unwrap().mean_fps, 10.0);
    }

    #[test]
    fn jittered_intervals_match_hand_arithmetic() {
        // intervals 60, 70, 65, 80, 55, 90, 66, 64, 70, 60 -> sum 680
        let ts = [0, 60, 130, 195, 275, 330, 420, 486, 550, 620, 680];
        let s = measure_fps(&ts).unwrap();
        assert_eq!(s.mean_interval_ms, 68.0);
        assert!((s.mean_fps - 1000.0 / 68.0).abs() < 1e-12);
        assert_eq!(s.p95_interval_ms, 90.0);
    }

    #[test]
    fn too_few_events() {
        assert_eq!(measure_fps(&[5]), Err(InsufficientEvents(1)));
    }
}
